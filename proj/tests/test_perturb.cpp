#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <set>

#include "seqfake/error.hpp"
#include "seqfake/perturb/perturb.hpp"
#include "seqfake/synth/dataset.hpp"

using namespace seqfake;
namespace fs = std::filesystem;

namespace {

Image constant(float v, int size = 128) { return Image(size, size, v); }

Image face_image(int size = 128) {
    std::mt19937_64 rng(17);
    return quantize8(synth::render(synth::sample_face(rng), size));
}

double channel_variance(const Image& img) {
    double sum = 0, sq = 0;
    for (float v : img.data()) {
        sum += v;
        sq += static_cast<double>(v) * v;
    }
    const double n = static_cast<double>(img.data().size());
    return sq / n - (sum / n) * (sum / n);
}

}  // namespace

TEST(Perturb, NoiseAddsTheTabulatedVariance) {
    const perturb::Tables t;
    for (int level = 1; level <= 3; ++level) {
        const auto out = perturb::apply(constant(0.5f), {perturb::Type::gauss_noise, level}, 3);
        const double expected = t.noise_sigma[level - 1] * t.noise_sigma[level - 1];
        EXPECT_NEAR(channel_variance(out), expected, 0.1 * expected) << "level " << level;
    }
}

TEST(Perturb, BlurKeepsConstantsAndRemovesDetail) {
    for (int level = 1; level <= 3; ++level) {
        const auto flat = constant(0.37f);
        const auto out = perturb::apply(flat, {perturb::Type::gauss_blur, level}, 1);
        for (std::size_t i = 0; i < out.data().size(); ++i) ASSERT_NEAR(out.data()[i], 0.37f, 1e-6f);
    }
    const auto img = face_image();
    double prev = perturb::laplacian_energy(img);
    EXPECT_GT(prev, 0.0);
    for (int level = 1; level <= 3; ++level) {
        const double e = perturb::laplacian_energy(perturb::apply(img, {perturb::Type::gauss_blur, level}, 1));
        EXPECT_LT(e, prev) << "level " << level;
        prev = e;
    }
    for (double sigma : {0.6, 1.2, 2.0}) {
        const auto k = perturb::gaussian_kernel(sigma);
        EXPECT_EQ(k.size(), 2 * static_cast<std::size_t>(std::ceil(3 * sigma)) + 1);
        double s = 0;
        for (double v : k) s += v;
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Perturb, SeverityIsMonotone) {
    const auto img = face_image();
    double last_psnr = 1e9;
    for (int level = 1; level <= 3; ++level) {
        const double p = psnr(img, perturb::apply(img, {perturb::Type::jpeg, level}, 0));
        EXPECT_LT(p, last_psnr) << "jpeg level " << level;
        last_psnr = p;
    }
    double last_noise = 1e9;
    for (int level = 1; level <= 3; ++level) {
        const double p = psnr(img, perturb::apply(img, {perturb::Type::gauss_noise, level}, 4));
        EXPECT_LT(p, last_noise) << "noise level " << level;
        last_noise = p;
    }
    for (auto type : {perturb::Type::saturation, perturb::Type::contrast, perturb::Type::block_distortion}) {
        double last = 1e9;
        for (int level = 1; level <= 3; ++level) {
            const double p = psnr(img, perturb::apply(img, {type, level}, 4));
            EXPECT_LE(p, last) << perturb::to_string(type) << " level " << level;
            last = p;
        }
    }
}

TEST(Perturb, GrayscaleLuminanceIsPreserved) {
    // Saturation leaves any gray image alone; contrast pulls toward the mean
    // luminance, which is a fixed point only for a uniform gray.
    Image gray(64, 64);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (int y = 0; y < 64; ++y) {
        for (int x = 0; x < 64; ++x) {
            const float g = u(rng);
            for (int c = 0; c < 3; ++c) gray.at(c, y, x) = g;
        }
    }
    auto lum = [](const Image& im, int y, int x) { return perturb::luminance(im.at(0, y, x), im.at(1, y, x), im.at(2, y, x)); };
    for (int level = 1; level <= 3; ++level) {
        const auto sat = perturb::apply(gray, {perturb::Type::saturation, level}, 0);
        const auto flat = constant(0.42f, 64);
        const auto con = perturb::apply(flat, {perturb::Type::contrast, level}, 0);
        for (int y = 0; y < 64; ++y) {
            for (int x = 0; x < 64; ++x) {
                ASSERT_LE(std::abs(lum(sat, y, x) - lum(gray, y, x)), 1.0f / 255);
                ASSERT_LE(std::abs(lum(con, y, x) - lum(flat, y, x)), 1.0f / 255);
            }
        }
    }
}

TEST(Perturb, OperatorsAreDeterministicAndClamped) {
    const auto img = face_image(64);
    for (auto type : perturb::kAllTypes) {
        for (int level = 1; level <= 3; ++level) {
            const auto a = perturb::apply(img, {type, level}, 99), b = perturb::apply(img, {type, level}, 99);
            EXPECT_EQ(a, b);
            for (float v : a.data()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
        }
    }
    EXPECT_THROW(perturb::apply(img, {perturb::Type::jpeg, 0}, 1), SpecError);
    EXPECT_THROW(perturb::apply(img, {perturb::Type::jpeg, 4}, 1), SpecError);
    EXPECT_THROW(perturb::parse_type("sharpen"), SpecError);
    for (auto type : perturb::kAllTypes) EXPECT_EQ(perturb::parse_type(perturb::to_string(type)), type);
}

TEST(Perturb, SamplerDistribution) {
    std::mt19937_64 rng(123);
    std::array<int, 5> k_count{};
    std::map<perturb::Type, int> first_type;
    std::array<int, 4> level_count{};
    constexpr int kDraws = 100000;
    for (int i = 0; i < kDraws; ++i) {
        const auto mix = perturb::sample_mix(rng);
        ASSERT_GE(mix.size(), 1u);
        ASSERT_LE(mix.size(), 4u);
        ++k_count[mix.size()];
        std::set<perturb::Type> seen;
        for (const auto& s : mix) {
            ASSERT_TRUE(seen.insert(s.type).second) << "repeated type";
            ASSERT_GE(s.level, 1);
            ASSERT_LE(s.level, 3);
            ++level_count[static_cast<std::size_t>(s.level)];
        }
        ++first_type[mix[0].type];
    }
    for (int k = 1; k <= 4; ++k) EXPECT_NEAR(k_count[k] / double(kDraws), 0.25, 0.01) << "k = " << k;
    for (const auto& [type, n] : first_type) EXPECT_NEAR(n / double(kDraws), 1.0 / 6, 0.01);
    const int levels = level_count[1] + level_count[2] + level_count[3];
    for (int l = 1; l <= 3; ++l) EXPECT_NEAR(level_count[l] / double(levels), 1.0 / 3, 0.01);
}

TEST(Perturb, OrderedFourTypeSelectionsNumber360) {
    std::mt19937_64 rng(8);
    std::set<std::vector<perturb::Type>> orders;
    for (int i = 0; i < 200000; ++i) {
        const auto mix = perturb::sample_mix(rng);
        if (mix.size() != 4) continue;
        std::vector<perturb::Type> order;
        for (const auto& s : mix) order.push_back(s.type);
        orders.insert(order);
    }
    EXPECT_EQ(orders.size(), 360u);
}

TEST(Perturb, ManifestPerturbationIsReproducible) {
    const auto root = fs::temp_directory_path() / "seqfake_test_perturb";
    fs::remove_all(root);
    synth::DatasetConfig cfg;
    cfg.count = 20;
    cfg.image_size = 64;
    const auto clean = synth::generate_dataset(cfg, 5, root / "clean");
    const auto a = perturb::perturb_manifest(clean, root / "clean", root / "a", 77);
    const auto b = perturb::perturb_manifest(clean, root / "clean", root / "b", 77);
    const auto c = perturb::perturb_manifest(clean, root / "clean", root / "c", 78);
    ASSERT_EQ(a.records.size(), clean.records.size());
    EXPECT_TRUE(a.header.perturbed);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        EXPECT_EQ(a.records[i].perturbations, b.records[i].perturbations);
        EXPECT_EQ(a.records[i].sequence, clean.records[i].sequence);
        EXPECT_EQ(a.records[i].split, clean.records[i].split);
        EXPECT_GE(a.records[i].perturbations.size(), 1u);
        EXPECT_LE(a.records[i].perturbations.size(), 4u);
        EXPECT_EQ(read_png(root / "a" / a.records[i].image_path), read_png(root / "b" / b.records[i].image_path));
        any_diff = any_diff || a.records[i].perturbations != c.records[i].perturbations;
        const auto mix = perturb::record_mix(77, i);
        ASSERT_EQ(mix.size(), a.records[i].perturbations.size());
        for (std::size_t k = 0; k < mix.size(); ++k) {
            EXPECT_EQ(a.records[i].perturbations[k].type, perturb::to_string(mix[k].type));
            EXPECT_EQ(a.records[i].perturbations[k].level, mix[k].level);
        }
    }
    EXPECT_TRUE(any_diff);
    EXPECT_EQ(synth::read_manifest(root / "a" / "manifest.jsonl").records, a.records);

    fs::remove(root / "clean" / clean.records[3].image_path);
    try {
        perturb::perturb_manifest(clean, root / "clean", root / "d", 77);
        FAIL() << "expected IoError";
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find(clean.records[3].image_path.substr(7)), std::string::npos);
    }
}
