#pragma once

#include <array>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "seqfake/image.hpp"
#include "seqfake/vocab.hpp"

namespace seqfake::synth {

// Layout of the face parameter vector. Everything except kEditLevel is in
// normalized [0, 1] units; the renderer maps them to geometry and clamps at
// draw time only, so the raw vector stays exactly invertible.
enum FaceParam : int {
    kEditLevel = 0,  // number of edits applied so far; not drawn
    kHeadCx,
    kHeadCy,
    kHeadRx,
    kHeadRy,
    kSkinTone,
    kEyeY,
    kEyeSpacing,
    kEyeRadius,
    kBrowAngle,
    kBrowThickness,
    kNoseLength,
    kNoseWidth,
    kLipWidth,
    kLipCurvature,
    kHairHeight,
    kHairDarkness,
    kBangsLength,
    kGlassesOpacity,
    kGlassesFrame,
    kBeardDensity,
    kAge,
    // Per-label shading tones. Edits leave a tone residue whose strength
    // depends on how many edits came before, which is what makes order
    // observable in pixels.
    kNoseTone,
    kEyeTone,
    kBrowTone,
    kLipTone,
    kHairTone,
    kBangsTone,
    kGlassesTone,
    kBeardTone,
    kSmileTone,
    kYouthTone,
    kNumFaceParams
};

using ParamVector = Eigen::Matrix<double, kNumFaceParams, 1>;
using ParamMatrix = Eigen::Matrix<double, kNumFaceParams, kNumFaceParams>;

std::string_view param_name(int index);

struct FaceSpec {
    ParamVector p = ParamVector::Zero();

    double operator[](int i) const { return p[i]; }
    double& operator[](int i) { return p[i]; }
    friend bool operator==(const FaceSpec& a, const FaceSpec& b) { return a.p == b.p; }
};

double distance(const FaceSpec& a, const FaceSpec& b);

// p' = A p + b with A unit lower-triangular (det 1).
struct ManipulationOp {
    TokenId label = -1;
    ParamMatrix A = ParamMatrix::Identity();
    ParamVector b = ParamVector::Zero();

    static ManipulationOp identity() { return {}; }
};

FaceSpec apply_op(const FaceSpec& spec, const ManipulationOp& op);
FaceSpec invert_op(const FaceSpec& spec, const ManipulationOp& op);

struct EntanglementConfig {
    double alpha = 0.15;         // edit-level -> tone coupling
    double drift = 0.04;         // edit-level -> target parameter coupling
    double cross = 0.02;         // other labels' targets -> own tone
    double tone_offset = 0.3;    // tone residue of every edit
    double degree_min = 0.6;     // per-record degree window
    double degree_max = 1.0;
};

// Builds the affine operator for each label of a vocabulary track.
class ManipulationLibrary {
public:
    explicit ManipulationLibrary(const Vocabulary& vocab, EntanglementConfig cfg = {});

    const Vocabulary& vocabulary() const { return vocab_; }
    const EntanglementConfig& config() const { return cfg_; }

    // Operator for `label` applied with strength `degree`.
    ManipulationOp op(TokenId label, double degree) const;

    // Parameters written by a label's edit (besides its tone).
    const std::vector<int>& targets(TokenId label) const;
    int tone_param(TokenId label) const;

private:
    struct LabelEffect {
        std::vector<int> targets;
        std::vector<double> direction;
        int tone = 0;
    };

    Vocabulary vocab_;
    EntanglementConfig cfg_;
    std::vector<LabelEffect> effects_;
};

FaceSpec apply_sequence(const ManipulationLibrary& lib, const FaceSpec& spec,
                        const ManipulationSequence& seq, const std::vector<double>& degrees);

// Undo `seq` by applying operator inverses in reverse order.
FaceSpec recover(const ManipulationLibrary& lib, const FaceSpec& manipulated,
                 const ManipulationSequence& seq, const std::vector<double>& degrees);

// Base face with small per-identity variation; tones near zero.
template <class Rng>
FaceSpec sample_face(Rng& rng);

// Deterministic rasterization; size must be >= 32.
Image render(const FaceSpec& spec, int size = 128);

struct PixelBox {
    int x0, y0, x1, y1;  // inclusive
};

// Pixels the mouth can touch, before any anti-alias margin.
PixelBox mouth_bounds(const FaceSpec& spec, int size);

}  // namespace seqfake::synth

#include "seqfake/synth/face_sample.inl"
