#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "seqfake/synth/face.hpp"
#include "seqfake/vocab.hpp"

namespace seqfake::synth {

inline constexpr const char* kGeneratorVersion = "seqfake-synth/1";
inline constexpr int kManifestVersion = 1;

enum class Split { train, val, test };

std::string_view to_string(Split split);
Split parse_split(std::string_view name);

struct PerturbationEntry {
    std::string type;
    int level = 0;
    friend bool operator==(const PerturbationEntry&, const PerturbationEntry&) = default;
};

struct DatasetRecord {
    std::string image_path;  // relative to the manifest directory
    ManipulationSequence sequence;
    Split split = Split::train;
    std::uint64_t seed = 0;
    std::vector<double> degrees;  // one per sequence entry
    std::vector<PerturbationEntry> perturbations;

    friend bool operator==(const DatasetRecord&, const DatasetRecord&) = default;
};

struct ManifestHeader {
    int version = kManifestVersion;
    std::string generator = kGeneratorVersion;
    Track track = Track::components;
    std::vector<std::string> vocabulary;
    int image_size = 128;
    std::uint64_t master_seed = 0;
    double alpha = 0.15;
    bool perturbed = false;
};

struct Manifest {
    ManifestHeader header;
    std::vector<DatasetRecord> records;

    Vocabulary vocabulary() const { return Vocabulary(header.track, header.vocabulary); }
    std::vector<const DatasetRecord*> split(Split s) const;
};

struct DatasetConfig {
    Track track = Track::components;
    std::size_t count = 2500;
    int image_size = 128;
    // Relative weight of each sequence length 0..5.
    std::array<double, kMaxSequenceLength + 1> length_weights{1, 1, 1, 1, 1, 1};
    // When non-empty, sequences are drawn uniformly from this list instead.
    std::vector<ManipulationSequence> whitelist;
    EntanglementConfig entanglement{};
};

std::uint64_t record_seed(std::uint64_t master_seed, std::uint64_t index);

// Annotations, splits, seeds and degrees only; no pixels.
Manifest plan_dataset(const DatasetConfig& cfg, std::uint64_t master_seed);

// Base face and the manipulated face a record describes.
struct RecordFaces {
    FaceSpec original;
    FaceSpec manipulated;
};
RecordFaces record_faces(const ManipulationLibrary& lib, const DatasetRecord& record);

// Degrees for `seq` looked up by label from the record's own edits; labels
// the record never applied get `fallback`.
std::vector<double> degrees_for(const DatasetRecord& record, const ManipulationSequence& seq,
                                double fallback = 0.8);

// plan_dataset plus rendering every record to <dir>/images/ and writing
// <dir>/manifest.jsonl.
Manifest generate_dataset(const DatasetConfig& cfg, std::uint64_t master_seed,
                          const std::filesystem::path& dir);

void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

}  // namespace seqfake::synth
