#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqfake/model/model.hpp"

namespace seqfake::train {

inline constexpr int kCheckpointVersion = 1;

// Named-tensor archive: 8-byte magic, u32 version, u64 header length, a JSON
// header, then each tensor as little-endian f32 in column-major order. Entries
// are sorted by name so equal contents always serialize to equal bytes.
struct Checkpoint {
    int version = kCheckpointVersion;
    model::ModelConfig model;
    Track track = Track::components;
    std::vector<std::string> labels;
    nlohmann::json run = nlohmann::json::object();  // training configuration snapshot
    std::map<std::string, nn::Matrix<float>> tensors;
    std::map<std::string, std::vector<std::string>> sharing;
    double best_metric = 0.0;
    int best_epoch = -1;

    Vocabulary vocabulary() const { return Vocabulary(track, labels); }
};

Checkpoint capture(const model::Model<float>& m, const nlohmann::json& run, double best_metric, int best_epoch);

// Copies tensors into `m`; throws IncompatibleError on missing names or shape mismatch.
void restore(const Checkpoint& ck, model::Model<float>& m);

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace seqfake::train
