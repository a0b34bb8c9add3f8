#include "seqfake/perturb/perturb.hpp"

#include <algorithm>
#include <cmath>

#include "seqfake/error.hpp"

namespace seqfake::perturb {

std::string_view to_string(Type type) {
    switch (type) {
        case Type::jpeg: return "jpeg";
        case Type::gauss_noise: return "gauss_noise";
        case Type::gauss_blur: return "gauss_blur";
        case Type::saturation: return "saturation";
        case Type::contrast: return "contrast";
        case Type::block_distortion: return "block_distortion";
    }
    return "?";
}

Type parse_type(std::string_view name) {
    for (Type t : kAllTypes) {
        if (to_string(t) == name) return t;
    }
    throw SpecError("unknown perturbation type '" + std::string(name) + "'");
}

std::vector<double> gaussian_kernel(double sigma) {
    if (!(sigma > 0)) throw SpecError("blur sigma must be positive");
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * i * i / (sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = v;
        sum += v;
    }
    for (auto& v : k) v /= sum;
    return k;
}

namespace {

Image blur(const Image& in, double sigma) {
    const auto k = gaussian_kernel(sigma);
    const int r = static_cast<int>(k.size() / 2);
    const int w = in.width(), h = in.height();
    Image tmp(w, h), out(w, h);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double s = 0;
                for (int i = -r; i <= r; ++i) s += k[static_cast<std::size_t>(i + r)] * in.at(c, y, std::clamp(x + i, 0, w - 1));
                tmp.at(c, y, x) = static_cast<float>(s);
            }
        }
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double s = 0;
                for (int i = -r; i <= r; ++i) s += k[static_cast<std::size_t>(i + r)] * tmp.at(c, std::clamp(y + i, 0, h - 1), x);
                out.at(c, y, x) = static_cast<float>(s);
            }
        }
    }
    return out;
}

Image noise(const Image& in, double sigma, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> n(0.0f, static_cast<float>(sigma));
    Image out = in;
    for (int c = 0; c < 3; ++c) {
        for (auto& v : out.plane(c)) v += n(rng);
    }
    return out;
}

Image saturate(const Image& in, double s) {
    Image out = in;
    const float f = static_cast<float>(s);
    for (int y = 0; y < in.height(); ++y) {
        for (int x = 0; x < in.width(); ++x) {
            const float l = luminance(in.at(0, y, x), in.at(1, y, x), in.at(2, y, x));
            for (int c = 0; c < 3; ++c) out.at(c, y, x) = l + f * (in.at(c, y, x) - l);
        }
    }
    return out;
}

Image contrast(const Image& in, double s) {
    double mean = 0;
    for (int y = 0; y < in.height(); ++y) {
        for (int x = 0; x < in.width(); ++x) mean += luminance(in.at(0, y, x), in.at(1, y, x), in.at(2, y, x));
    }
    mean /= static_cast<double>(in.width()) * in.height();
    Image out = in;
    const float m = static_cast<float>(mean), f = static_cast<float>(s);
    for (int c = 0; c < 3; ++c) {
        for (auto& v : out.plane(c)) v = m + f * (v - m);
    }
    return out;
}

Image blocks(const Image& in, int count, std::uint64_t seed) {
    const int side = std::max(1, in.width() / 8);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> px(0, std::max(0, in.width() - side));
    std::uniform_int_distribution<int> py(0, std::max(0, in.height() - side));
    Image out = in;
    for (int b = 0; b < count; ++b) {
        const int x0 = px(rng), y0 = py(rng);
        const int x1 = std::min(in.width(), x0 + side), y1 = std::min(in.height(), y0 + side);
        for (int c = 0; c < 3; ++c) {
            double sum = 0;
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) sum += out.at(c, y, x);
            }
            const float mean = static_cast<float>(sum / ((x1 - x0) * (y1 - y0)));
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) out.at(c, y, x) = mean;
            }
        }
    }
    return out;
}

}  // namespace

Image apply(const Image& image, const Spec& spec, std::uint64_t seed, const Tables& t) {
    if (spec.level < 1 || spec.level > kLevels) throw SpecError("perturbation level must be 1..3");
    const auto i = static_cast<std::size_t>(spec.level - 1);
    Image out;
    switch (spec.type) {
        case Type::jpeg: out = decode_jpeg(encode_jpeg(image, t.jpeg_quality[i])); break;
        case Type::gauss_noise: out = noise(image, t.noise_sigma[i], seed); break;
        case Type::gauss_blur: out = blur(image, t.blur_sigma[i]); break;
        case Type::saturation: out = saturate(image, t.saturation[i]); break;
        case Type::contrast: out = contrast(image, t.contrast[i]); break;
        case Type::block_distortion: out = blocks(image, t.blocks[i], seed); break;
        default: throw SpecError("unknown perturbation type");
    }
    out.clamp01();
    return out;
}

std::vector<Spec> sample_mix(std::mt19937_64& rng) {
    const int k = std::uniform_int_distribution<int>(1, kMaxMix)(rng);
    auto types = kAllTypes;
    std::vector<Spec> mix;
    // Partial Fisher-Yates: the first k positions are a uniform ordered selection.
    for (int i = 0; i < k; ++i) {
        const int j = std::uniform_int_distribution<int>(i, static_cast<int>(types.size()) - 1)(rng);
        std::swap(types[static_cast<std::size_t>(i)], types[static_cast<std::size_t>(j)]);
        mix.push_back({types[static_cast<std::size_t>(i)], std::uniform_int_distribution<int>(1, kLevels)(rng)});
    }
    return mix;
}

Image apply_mix(const Image& image, const std::vector<Spec>& mix, std::uint64_t seed, const Tables& tables) {
    Image out = image;
    for (std::size_t i = 0; i < mix.size(); ++i) out = apply(out, mix[i], seed + i, tables);
    return out;
}

double laplacian_energy(const Image& image) {
    double e = 0;
    for (int c = 0; c < 3; ++c) {
        for (int y = 1; y + 1 < image.height(); ++y) {
            for (int x = 1; x + 1 < image.width(); ++x) {
                const double l = image.at(c, y - 1, x) + image.at(c, y + 1, x) + image.at(c, y, x - 1) +
                                 image.at(c, y, x + 1) - 4.0 * image.at(c, y, x);
                e += l * l;
            }
        }
    }
    return e;
}

std::vector<Spec> record_mix(std::uint64_t master_seed, std::size_t index) {
    std::mt19937_64 rng(synth::record_seed(master_seed, index));
    return sample_mix(rng);
}

synth::Manifest perturb_manifest(const synth::Manifest& manifest, const std::filesystem::path& in_dir,
                                 const std::filesystem::path& out_dir, std::uint64_t master_seed,
                                 const Tables& tables) {
    synth::Manifest out = manifest;
    out.header.perturbed = true;
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "images", ec);
    if (ec) throw IoError("cannot create " + (out_dir / "images").string() + ": " + ec.message());
    for (std::size_t i = 0; i < out.records.size(); ++i) {
        const auto src = in_dir / manifest.records[i].image_path;
        if (!std::filesystem::exists(src)) throw IoError("missing image file: " + src.string());
        auto& r = out.records[i];
        r.perturbations.clear();
        for (const auto& s : record_mix(master_seed, i)) r.perturbations.push_back({std::string(to_string(s.type)), s.level});
        r.image_path = "images/" + std::filesystem::path(r.image_path).filename().string();
    }
    const auto n = static_cast<std::ptrdiff_t>(out.records.size());
    std::vector<std::string> failures(out.records.size());
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        try {
            const Image img = read_png(in_dir / manifest.records[ui].image_path);
            const auto mix = record_mix(master_seed, ui);
            const std::uint64_t seed = synth::record_seed(master_seed ^ 0x9E37u, ui);
            write_png(apply_mix(img, mix, seed, tables), out_dir / out.records[ui].image_path);
        } catch (const std::exception& e) {
            failures[ui] = e.what();
        }
    }
    for (const auto& f : failures) {
        if (!f.empty()) throw IoError(f);
    }
    synth::write_manifest(out, out_dir / "manifest.jsonl");
    return out;
}

}  // namespace seqfake::perturb
