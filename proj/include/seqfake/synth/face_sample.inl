#pragma once

#include <random>

namespace seqfake::synth {

template <class Rng>
FaceSpec sample_face(Rng& rng) {
    std::uniform_real_distribution<double> geometry(0.3, 0.7);
    std::uniform_real_distribution<double> tone(0.0, 0.05);
    FaceSpec f;
    f[kEditLevel] = 0.0;
    for (int i = kHeadCx; i <= kHairDarkness; ++i) f[i] = geometry(rng);
    f[kBangsLength] = std::uniform_real_distribution<double>(0.0, 0.3)(rng);
    f[kGlassesOpacity] = std::uniform_real_distribution<double>(0.0, 0.2)(rng);
    f[kGlassesFrame] = geometry(rng);
    f[kBeardDensity] = std::uniform_real_distribution<double>(0.0, 0.2)(rng);
    f[kAge] = std::uniform_real_distribution<double>(0.4, 0.8)(rng);
    for (int i = kNoseTone; i < kNumFaceParams; ++i) f[i] = tone(rng);
    return f;
}

}  // namespace seqfake::synth
