#include "seqfake/synth/face.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include <Eigen/Dense>

#include "seqfake/error.hpp"

namespace seqfake::synth {

std::string_view param_name(int index) {
    static constexpr std::array<std::string_view, kNumFaceParams> kNames = {
        "edit_level",    "head_cx",     "head_cy",        "head_rx",       "head_ry",
        "skin_tone",     "eye_y",       "eye_spacing",    "eye_radius",    "brow_angle",
        "brow_thickness", "nose_length", "nose_width",    "lip_width",     "lip_curvature",
        "hair_height",   "hair_darkness", "bangs_length", "glasses_opacity", "glasses_frame",
        "beard_density", "age",         "nose_tone",      "eye_tone",      "brow_tone",
        "lip_tone",      "hair_tone",   "bangs_tone",     "glasses_tone",  "beard_tone",
        "smile_tone",    "youth_tone"};
    if (index < 0 || index >= kNumFaceParams) throw SpecError("face parameter index out of range");
    return kNames[static_cast<std::size_t>(index)];
}

double distance(const FaceSpec& a, const FaceSpec& b) { return (a.p - b.p).norm(); }

FaceSpec apply_op(const FaceSpec& spec, const ManipulationOp& op) {
    FaceSpec out;
    out.p = op.A * spec.p + op.b;
    return out;
}

FaceSpec invert_op(const FaceSpec& spec, const ManipulationOp& op) {
    FaceSpec out;
    out.p = op.A.triangularView<Eigen::UnitLower>().solve(spec.p - op.b);
    return out;
}

namespace {

struct EffectTemplate {
    std::vector<int> targets;
    std::vector<double> direction;
    int tone;
};

const std::map<std::string, EffectTemplate, std::less<>>& effect_table() {
    static const std::map<std::string, EffectTemplate, std::less<>> table = {
        {"nose", {{kNoseLength, kNoseWidth}, {0.30, 0.25}, kNoseTone}},
        {"eye", {{kEyeRadius, kEyeY}, {0.30, -0.10}, kEyeTone}},
        {"eyebrow", {{kBrowAngle, kBrowThickness}, {0.35, 0.30}, kBrowTone}},
        {"lip", {{kLipWidth, kLipCurvature}, {0.25, -0.30}, kLipTone}},
        {"hair", {{kHairHeight, kHairDarkness}, {0.30, 0.30}, kHairTone}},
        {"bangs", {{kBangsLength}, {0.60}, kBangsTone}},
        {"eyeglasses", {{kGlassesOpacity, kGlassesFrame}, {0.70, 0.20}, kGlassesTone}},
        {"beard", {{kBeardDensity}, {0.60}, kBeardTone}},
        {"smiling", {{kLipCurvature}, {0.35}, kSmileTone}},
        {"young", {{kAge}, {-0.40}, kYouthTone}},
    };
    return table;
}

}  // namespace

ManipulationLibrary::ManipulationLibrary(const Vocabulary& vocab, EntanglementConfig cfg)
    : vocab_(vocab), cfg_(cfg) {
    if (cfg_.alpha <= 0.0 || cfg_.degree_min <= 0.0 || cfg_.degree_max < cfg_.degree_min) {
        throw ConfigError("invalid entanglement configuration");
    }
    const auto& table = effect_table();
    for (const auto& name : vocab_.labels()) {
        auto it = table.find(name);
        if (it == table.end()) throw VocabError("no synthetic edit defined for label '" + name + "'");
        effects_.push_back({it->second.targets, it->second.direction, it->second.tone});
    }
}

const std::vector<int>& ManipulationLibrary::targets(TokenId label) const {
    if (!vocab_.is_label(label)) throw VocabError("not a label id: " + std::to_string(label));
    return effects_[static_cast<std::size_t>(label)].targets;
}

int ManipulationLibrary::tone_param(TokenId label) const {
    if (!vocab_.is_label(label)) throw VocabError("not a label id: " + std::to_string(label));
    return effects_[static_cast<std::size_t>(label)].tone;
}

ManipulationOp ManipulationLibrary::op(TokenId label, double degree) const {
    if (!vocab_.is_label(label)) throw VocabError("not a label id: " + std::to_string(label));
    const auto& e = effects_[static_cast<std::size_t>(label)];
    ManipulationOp out;
    out.label = label;
    // Row index always exceeds column index below: tones sit after all
    // geometry parameters and the edit level is parameter 0.
    out.A(e.tone, kEditLevel) = cfg_.alpha;
    for (std::size_t i = 0; i < e.targets.size(); ++i) {
        out.A(e.targets[i], kEditLevel) = cfg_.drift;
        out.b[e.targets[i]] = degree * e.direction[i];
    }
    for (std::size_t other = 0; other < effects_.size(); ++other) {
        if (static_cast<TokenId>(other) == label) continue;
        out.A(e.tone, effects_[other].targets.front()) = cfg_.cross;
    }
    out.b[e.tone] = cfg_.tone_offset;
    out.b[kEditLevel] = 1.0;
    return out;
}

FaceSpec apply_sequence(const ManipulationLibrary& lib, const FaceSpec& spec,
                        const ManipulationSequence& seq, const std::vector<double>& degrees) {
    if (degrees.size() != seq.size()) throw DataError("degree count does not match sequence length");
    FaceSpec out = spec;
    for (std::size_t i = 0; i < seq.size(); ++i) out = apply_op(out, lib.op(seq[i], degrees[i]));
    return out;
}

FaceSpec recover(const ManipulationLibrary& lib, const FaceSpec& manipulated,
                 const ManipulationSequence& seq, const std::vector<double>& degrees) {
    if (degrees.size() != seq.size()) throw DataError("degree count does not match sequence length");
    FaceSpec out = manipulated;
    for (std::size_t i = seq.size(); i-- > 0;) out = invert_op(out, lib.op(seq[i], degrees[i]));
    return out;
}

// ---------------------------------------------------------------------------
// Rasterization

namespace {

struct Rgb {
    float r, g, b;
};

Rgb lerp(Rgb a, Rgb b, double t) {
    const float s = static_cast<float>(std::clamp(t, 0.0, 1.0));
    return {a.r + (b.r - a.r) * s, a.g + (b.g - a.g) * s, a.b + (b.b - a.b) * s};
}

// Draw-time view of the parameters: snapped to a 2^-24 grid and clamped, so
// round-off far below the grid spacing never changes a pixel.
double param(const FaceSpec& spec, int index, double lo = 0.0, double hi = 1.5) {
    const double snapped = std::round(spec.p[index] * 16777216.0) / 16777216.0;
    return std::clamp(snapped, lo, hi);
}

struct Geometry {
    double cx, cy, rx, ry;
    double eye_y, eye_dx, eye_r;
    double brow_y, brow_half, brow_angle, brow_thick;
    double nose_top, nose_len, nose_half_w;
    double mouth_y, mouth_half_w, mouth_curve, mouth_thick;
    double hair_ry, bangs_len;
    Rgb skin, hair;
};

Geometry layout(const FaceSpec& s) {
    Geometry g{};
    g.cx = 0.5 + (param(s, kHeadCx, 0.0, 1.0) - 0.5) * 0.08;
    g.cy = 0.54 + (param(s, kHeadCy, 0.0, 1.0) - 0.5) * 0.06;
    g.rx = 0.26 + 0.06 * param(s, kHeadRx, 0.0, 1.0);
    g.ry = 0.33 + 0.06 * param(s, kHeadRy, 0.0, 1.0);
    g.eye_y = g.cy - 0.07 - 0.05 * (param(s, kEyeY, -0.5, 1.5) - 0.5);
    g.eye_dx = g.rx * (0.38 + 0.16 * (param(s, kEyeSpacing, 0.0, 1.0) - 0.5));
    g.eye_r = 0.022 + 0.022 * param(s, kEyeRadius);
    g.brow_y = g.eye_y - g.eye_r - 0.03;
    g.brow_half = 0.05;
    g.brow_angle = (param(s, kBrowAngle) - 0.5) * 0.7;
    g.brow_thick = 0.006 + 0.01 * param(s, kBrowThickness);
    g.nose_top = g.eye_y + 0.02;
    g.nose_len = 0.06 + 0.05 * param(s, kNoseLength);
    g.nose_half_w = 0.014 + 0.02 * param(s, kNoseWidth);
    g.mouth_y = g.cy + 0.17;
    g.mouth_half_w = 0.045 + 0.04 * param(s, kLipWidth);
    g.mouth_curve = (param(s, kLipCurvature, -0.5, 1.5) - 0.5) * 0.05;
    g.mouth_thick = 0.013;
    g.hair_ry = g.ry * (0.72 + 0.25 * param(s, kHairHeight));
    g.bangs_len = 0.16 * param(s, kBangsLength, 0.0, 1.2);

    g.skin = lerp({0.96f, 0.80f, 0.69f}, {0.58f, 0.40f, 0.28f}, 0.15 + 0.5 * param(s, kSkinTone, 0.0, 1.0));
    g.skin = lerp(g.skin, {1.0f, 0.62f, 0.72f}, 0.7 * param(s, kYouthTone, 0.0, 1.0));
    g.hair = lerp({0.50f, 0.34f, 0.18f}, {0.10f, 0.07f, 0.05f}, param(s, kHairDarkness, 0.0, 1.0));
    g.hair = lerp(g.hair, {0.98f, 0.62f, 0.08f}, param(s, kHairTone, 0.0, 1.0));
    return g;
}

class Canvas {
public:
    Canvas(Image& image) : image_(image), size_(image.width()), px_(1.0 / image.width()) {}

    int size() const { return size_; }
    double px() const { return px_; }

    // Blend `color` over pixels where the signed distance (normalized units,
    // negative inside) gives coverage, restricted to a bounding box.
    template <class Sdf>
    void fill(double u0, double v0, double u1, double v1, Rgb color, double alpha, Sdf&& sdf) {
        if (alpha <= 0.0) return;
        const int x0 = std::max(0, static_cast<int>(std::floor(u0 * size_)) - 1);
        const int y0 = std::max(0, static_cast<int>(std::floor(v0 * size_)) - 1);
        const int x1 = std::min(size_ - 1, static_cast<int>(std::ceil(u1 * size_)) + 1);
        const int y1 = std::min(size_ - 1, static_cast<int>(std::ceil(v1 * size_)) + 1);
        for (int y = y0; y <= y1; ++y) {
            const double v = (y + 0.5) * px_;
            for (int x = x0; x <= x1; ++x) {
                const double u = (x + 0.5) * px_;
                const double cov = std::clamp(0.5 - sdf(u, v, x, y) / px_, 0.0, 1.0);
                if (cov > 0.0) blend(x, y, color, static_cast<float>(cov * alpha));
            }
        }
    }

private:
    void blend(int x, int y, Rgb c, float a) {
        float& r = image_.at(0, y, x);
        float& g = image_.at(1, y, x);
        float& b = image_.at(2, y, x);
        r += (c.r - r) * a;
        g += (c.g - g) * a;
        b += (c.b - b) * a;
    }

    Image& image_;
    int size_;
    double px_;
};

double ellipse_sdf(double u, double v, double cx, double cy, double rx, double ry) {
    const double du = (u - cx) / rx, dv = (v - cy) / ry;
    return (std::sqrt(du * du + dv * dv) - 1.0) * std::min(rx, ry);
}

double segment_sdf(double u, double v, double ax, double ay, double bx, double by, double half_thick) {
    const double px = u - ax, py = v - ay, dx = bx - ax, dy = by - ay;
    const double t = std::clamp((px * dx + py * dy) / (dx * dx + dy * dy), 0.0, 1.0);
    const double ex = px - t * dx, ey = py - t * dy;
    return std::sqrt(ex * ex + ey * ey) - half_thick;
}

std::uint32_t pixel_hash(int x, int y) {
    std::uint32_t h = static_cast<std::uint32_t>(x) * 374761393u + static_cast<std::uint32_t>(y) * 668265263u;
    h = (h ^ (h >> 13)) * 1274126177u;
    return h ^ (h >> 16);
}

}  // namespace

PixelBox mouth_bounds(const FaceSpec& spec, int size) {
    const auto g = layout(spec);
    const double dip = std::abs(g.mouth_curve);
    const double u0 = g.cx - g.mouth_half_w - g.mouth_thick;
    const double u1 = g.cx + g.mouth_half_w + g.mouth_thick;
    const double v0 = g.mouth_y - dip - g.mouth_thick;
    const double v1 = g.mouth_y + dip + g.mouth_thick;
    return {static_cast<int>(std::floor(u0 * size)), static_cast<int>(std::floor(v0 * size)),
            static_cast<int>(std::ceil(u1 * size)), static_cast<int>(std::ceil(v1 * size))};
}

Image render(const FaceSpec& spec, int size) {
    if (size < 32) throw ShapeError("render size must be >= 32");
    Image image(size, size);
    for (int y = 0; y < size; ++y) {
        const float shade = 0.92f - 0.08f * static_cast<float>(y) / static_cast<float>(size);
        for (int x = 0; x < size; ++x) {
            image.at(0, y, x) = shade * 0.90f;
            image.at(1, y, x) = shade * 0.93f;
            image.at(2, y, x) = shade;
        }
    }
    Canvas cv(image);
    const auto g = layout(spec);

    // Hair behind the head.
    const double hair_cy = g.cy - g.ry * 0.28;
    cv.fill(g.cx - g.rx * 1.12, hair_cy - g.hair_ry, g.cx + g.rx * 1.12, hair_cy + g.hair_ry, g.hair, 1.0,
            [&](double u, double v, int, int) { return ellipse_sdf(u, v, g.cx, hair_cy, g.rx * 1.12, g.hair_ry); });

    // Head.
    auto head = [&](double u, double v, int, int) { return ellipse_sdf(u, v, g.cx, g.cy, g.rx, g.ry); };
    cv.fill(g.cx - g.rx, g.cy - g.ry, g.cx + g.rx, g.cy + g.ry, g.skin, 1.0, head);

    // Forehead wrinkles scale with age.
    const Rgb wrinkle = lerp(g.skin, {0.3f, 0.2f, 0.15f}, 0.5);
    const double age = param(spec, kAge, 0.0, 1.0);
    for (int i = 0; i < 3; ++i) {
        const double wy = g.cy - g.ry * 0.62 + 0.022 * i;
        cv.fill(g.cx - 0.09, wy - 0.005, g.cx + 0.09, wy + 0.005, wrinkle, 0.8 * age,
                [&](double u, double v, int, int) {
                    return std::max(segment_sdf(u, v, g.cx - 0.08, wy, g.cx + 0.08, wy, 0.0025), head(u, v, 0, 0));
                });
    }

    // Beard: stippled lower face.
    const double beard = param(spec, kBeardDensity, 0.0, 1.0);
    if (beard > 0.0) {
        const Rgb beard_col = lerp(g.hair, {0.85f, 0.10f, 0.62f}, param(spec, kBeardTone, 0.0, 1.0));
        const double top = g.cy + 0.09;
        cv.fill(g.cx - g.rx, top, g.cx + g.rx, g.cy + g.ry, beard_col, 0.9, [&](double u, double v, int x, int y) {
            const bool speck = static_cast<double>(pixel_hash(x, y) % 1024u) < beard * 1024.0;
            if (!speck) return 1.0;
            return std::max(head(u, v, 0, 0), top - v);
        });
    }

    // Bangs: fringe hanging from the top of the head.
    if (g.bangs_len > 0.0) {
        const Rgb bangs_col = lerp(g.hair, {0.18f, 0.40f, 0.98f}, param(spec, kBangsTone, 0.0, 1.0));
        const double top = g.cy - g.ry;
        const double bottom = top + 0.04 + g.bangs_len;
        cv.fill(g.cx - g.rx, top, g.cx + g.rx, bottom, bangs_col, 1.0,
                [&](double u, double v, int, int) { return std::max(head(u, v, 0, 0), v - bottom); });
    }

    // Nose: filled triangle.
    {
        const Rgb nose_col = lerp(lerp(g.skin, {0.2f, 0.1f, 0.05f}, 0.35), {0.15f, 0.35f, 0.95f},
                                  param(spec, kNoseTone, 0.0, 1.0));
        const double ax = g.cx, ay = g.nose_top;
        const double by = g.nose_top + g.nose_len;
        const double lx = g.cx - g.nose_half_w, rx = g.cx + g.nose_half_w;
        cv.fill(lx, ay, rx, by, nose_col, 1.0, [&](double u, double v, int, int) {
            // Intersection of three half-planes.
            auto edge = [&](double x0, double y0, double x1, double y1) {
                const double nx = y0 - y1, ny = x1 - x0;
                const double len = std::sqrt(nx * nx + ny * ny);
                return ((u - x0) * nx + (v - y0) * ny) / len;
            };
            return std::max({edge(ax, ay, lx, by), edge(lx, by, rx, by), edge(rx, by, ax, ay)});
        });
    }

    // Mouth: curved band, corners lifted by positive curvature.
    {
        Rgb lip_col = lerp({0.78f, 0.20f, 0.24f}, {0.32f, 0.05f, 0.55f}, param(spec, kLipTone, 0.0, 1.0));
        lip_col = lerp(lip_col, {0.98f, 0.85f, 0.10f}, param(spec, kSmileTone, 0.0, 1.0));
        const auto box = mouth_bounds(spec, size);
        const double half_thick = g.mouth_thick * 0.5;
        cv.fill(static_cast<double>(box.x0) / size, static_cast<double>(box.y0) / size,
                static_cast<double>(box.x1) / size, static_cast<double>(box.y1) / size, lip_col, 1.0,
                [&](double u, double v, int, int) {
                    const double t = (u - g.cx) / g.mouth_half_w;
                    const double tc = std::clamp(t, -1.0, 1.0);
                    const double curve_y = g.mouth_y - g.mouth_curve * tc * tc;
                    const double dx = std::abs(t) > 1.0 ? (std::abs(u - g.cx) - g.mouth_half_w) : 0.0;
                    const double dy = v - curve_y;
                    return std::sqrt(dx * dx + dy * dy) - half_thick;
                });
    }

    // Eyes: sclera, iris, pupil.
    const Rgb iris = lerp({0.38f, 0.22f, 0.10f}, {0.05f, 0.85f, 0.70f}, param(spec, kEyeTone, 0.0, 1.0));
    for (int side : {-1, 1}) {
        const double ex = g.cx + side * g.eye_dx;
        cv.fill(ex - 1.5 * g.eye_r, g.eye_y - g.eye_r, ex + 1.5 * g.eye_r, g.eye_y + g.eye_r, {0.97f, 0.97f, 0.95f}, 1.0,
                [&](double u, double v, int, int) { return ellipse_sdf(u, v, ex, g.eye_y, 1.5 * g.eye_r, g.eye_r); });
        cv.fill(ex - g.eye_r, g.eye_y - g.eye_r, ex + g.eye_r, g.eye_y + g.eye_r, iris, 1.0,
                [&](double u, double v, int, int) { return ellipse_sdf(u, v, ex, g.eye_y, 0.8 * g.eye_r, 0.8 * g.eye_r); });
        cv.fill(ex - g.eye_r, g.eye_y - g.eye_r, ex + g.eye_r, g.eye_y + g.eye_r, {0.02f, 0.02f, 0.02f}, 1.0,
                [&](double u, double v, int, int) { return ellipse_sdf(u, v, ex, g.eye_y, 0.32 * g.eye_r, 0.32 * g.eye_r); });
    }

    // Eyebrows: thick tilted segments.
    const Rgb brow_col = lerp(lerp(g.hair, {0.05f, 0.03f, 0.02f}, 0.4), {0.85f, 0.12f, 0.10f},
                              param(spec, kBrowTone, 0.0, 1.0));
    for (int side : {-1, 1}) {
        const double bx = g.cx + side * g.eye_dx;
        const double dx = g.brow_half * std::cos(g.brow_angle), dy = g.brow_half * std::sin(g.brow_angle);
        // Inner end is the one nearer the face midline.
        const double ix = bx - side * dx, iy = g.brow_y + dy;
        const double ox = bx + side * dx, oy = g.brow_y - dy;
        const double ht = g.brow_thick * 0.5;
        cv.fill(std::min(ix, ox) - ht, std::min(iy, oy) - ht, std::max(ix, ox) + ht, std::max(iy, oy) + ht, brow_col, 1.0,
                [&](double u, double v, int, int) { return segment_sdf(u, v, ix, iy, ox, oy, ht); });
    }

    // Eyeglasses: two rings and a bridge.
    const double glasses = param(spec, kGlassesOpacity, 0.0, 1.0);
    if (glasses > 0.0) {
        const Rgb frame = lerp({0.05f, 0.05f, 0.05f}, {0.95f, 0.15f, 0.10f}, param(spec, kGlassesTone, 0.0, 1.0));
        const double ring_r = 1.5 * g.eye_r + 0.018;
        const double ht = 0.002 + 0.004 * param(spec, kGlassesFrame);
        for (int side : {-1, 1}) {
            const double ex = g.cx + side * g.eye_dx;
            cv.fill(ex - ring_r - ht, g.eye_y - ring_r - ht, ex + ring_r + ht, g.eye_y + ring_r + ht, frame, glasses,
                    [&](double u, double v, int, int) {
                        const double d = std::hypot(u - ex, v - g.eye_y);
                        return std::abs(d - ring_r) - ht;
                    });
        }
        const double l = g.cx - g.eye_dx + ring_r, r = g.cx + g.eye_dx - ring_r;
        if (r > l) {
            cv.fill(l, g.eye_y - ht, r, g.eye_y + ht, frame, glasses,
                    [&](double u, double v, int, int) { return segment_sdf(u, v, l, g.eye_y, r, g.eye_y, ht); });
        }
    }
    image.clamp01();
    return image;
}

}  // namespace seqfake::synth
