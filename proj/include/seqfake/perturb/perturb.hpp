#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "seqfake/image.hpp"
#include "seqfake/synth/dataset.hpp"

namespace seqfake::perturb {

enum class Type { jpeg, gauss_noise, gauss_blur, saturation, contrast, block_distortion };

inline constexpr std::array<Type, 6> kAllTypes{Type::jpeg,       Type::gauss_noise, Type::gauss_blur,
                                               Type::saturation, Type::contrast,    Type::block_distortion};
inline constexpr int kLevels = 3;
inline constexpr int kMaxMix = 4;

std::string_view to_string(Type type);
Type parse_type(std::string_view name);  // throws SpecError

struct Spec {
    Type type = Type::jpeg;
    int level = 1;  // 1..3
    friend bool operator==(const Spec&, const Spec&) = default;
};

// Severity tables, indexed by level - 1.
struct Tables {
    std::array<int, 3> jpeg_quality{70, 50, 30};
    std::array<double, 3> noise_sigma{0.02, 0.05, 0.10};
    std::array<double, 3> blur_sigma{0.6, 1.2, 2.0};
    std::array<double, 3> saturation{0.7, 0.45, 0.2};
    std::array<double, 3> contrast{0.75, 0.55, 0.35};
    std::array<int, 3> blocks{2, 4, 6};
};

// Rec. 601 luma.
inline float luminance(float r, float g, float b) { return 0.299f * r + 0.587f * g + 0.114f * b; }

// Deterministic in (image, spec, seed); output clamped to [0, 1].
Image apply(const Image& image, const Spec& spec, std::uint64_t seed, const Tables& tables = {});

// k uniform in 1..4 distinct types in sampled order, each with a uniform level.
std::vector<Spec> sample_mix(std::mt19937_64& rng);

// Applies `mix` in order; step i uses seed + i.
Image apply_mix(const Image& image, const std::vector<Spec>& mix, std::uint64_t seed, const Tables& tables = {});

// Gaussian blur kernel of radius ceil(3 sigma), normalized to sum 1.
std::vector<double> gaussian_kernel(double sigma);

// Sum of squared 4-neighbour Laplacian responses over interior pixels.
double laplacian_energy(const Image& image);

// Samples a mix per record (seeded by record_seed(master_seed, index)),
// writes perturbed images to out_dir/images and out_dir/manifest.jsonl.
// Throws IoError naming the path of any missing input image.
synth::Manifest perturb_manifest(const synth::Manifest& manifest, const std::filesystem::path& in_dir,
                                 const std::filesystem::path& out_dir, std::uint64_t master_seed,
                                 const Tables& tables = {});

// The mix a record receives under perturb_manifest.
std::vector<Spec> record_mix(std::uint64_t master_seed, std::size_t index);

}  // namespace seqfake::perturb
