#pragma once

#include <algorithm>

#include "seqfake/nn/layers.hpp"

namespace seqfake::model {

using nn::Context;
using nn::Matrix;
using nn::Var;

struct SecaSettings {
    bool enabled = true;    // false: plain cross-attention
    bool multi_head = true; // per-head offsets and scales
    double lambda = 4.0;
    double r_min = 0.25;
};

// Grid / batch geometry of one cross-attention call.
struct CrossShape {
    int batch = 1;
    int queries = 1;
    int height = 1;
    int width = 1;
};

// Optional outputs for inspection.
template <class T>
struct SecaTrace {
    Matrix<T> log_maps;  // (H*W, B*heads*T)
    Matrix<T> weights;   // (H*W, B*heads*T)
};

// Center/scale predictor. Centers: sigmoid(MLP(s)); scales: exp(FC(s))
// clamped to [r_min, 4*max(H, W)]; head offsets: 0.5*tanh(FC(s)).
template <class T>
struct CenterScaleHead {
    nn::Linear<T> center1, center2, scale, offset;
    bool multi_head = true;
    int heads = 1;

    CenterScaleHead() = default;
    CenterScaleHead(nn::ParamStore<T>& s, const std::string& name, int width, int h, bool multi)
        : center1(s, name + ".center1", width, width),
          center2(s, name + ".center2", width, 2),
          scale(s, name + ".scale", width, multi ? 2 * h : 2),
          multi_head(multi),
          heads(h) {
        scale.weight->value.setZero();
        if (multi) {
            offset = nn::Linear<T>(s, name + ".offset", width, 2 * h);
            offset.weight->value.setZero();
        }
    }

    struct Output {
        Var centers, scales, offsets;
    };

    Output operator()(Context<T>& c, Var tokens, const CrossShape& g, double r_min) const {
        auto& t = c.tape;
        Output o;
        o.centers = nn::sigmoid(t, center2(c, nn::relu(t, center1(c, tokens))));
        const T r_max = static_cast<T>(4 * std::max(g.height, g.width));
        o.scales = nn::exp_clamped(t, scale(c, tokens), static_cast<T>(r_min), r_max);
        if (multi_head) o.offsets = nn::scale(t, nn::tanh(t, offset(c, tokens)), T(0.5));
        return o;
    }
};

// Pre-LN cross-attention block with spatial modulation: x + MHA(LN(x), f, log M).
template <class T>
struct SecaCrossBlock {
    nn::LayerNorm<T> norm;
    nn::MultiHeadAttention<T> attn;
    CenterScaleHead<T> head;
    SecaSettings settings;

    SecaCrossBlock() = default;
    SecaCrossBlock(nn::ParamStore<T>& s, const std::string& name, int width, int heads, const SecaSettings& cfg)
        : norm(s, name + ".norm", width),
          attn(s, name + ".attn", width, heads),
          head(s, name + ".seca", width, heads, cfg.multi_head),
          settings(cfg) {}

    // Spatial log-weights for tokens `h` (already normalized).
    Var log_maps(Context<T>& c, Var h, const CrossShape& g) const {
        auto cs = head(c, h, g, settings.r_min);
        nn::SecaMapShape ms{g.batch, g.queries, attn.heads, g.height, g.width, settings.lambda};
        return nn::seca_log_maps(c.tape, cs.centers, cs.offsets, cs.scales, ms);
    }

    Var operator()(Context<T>& c, Var x, Var memory, const CrossShape& g, SecaTrace<T>* trace = nullptr) const {
        Var h = norm(c, x);
        Var bias = settings.enabled ? log_maps(c, h, g) : Var{};
        nn::AttentionOptions opt;
        opt.batch = g.batch;
        opt.queries = g.queries;
        opt.keys = g.height * g.width;
        Var out = attn(c, h, memory, bias, opt, trace ? &trace->weights : nullptr);
        if (trace) {
            trace->log_maps = bias.valid() ? c.tape.value(bias)
                                           : Matrix<T>::Zero(opt.keys, static_cast<Eigen::Index>(g.batch) * attn.heads * g.queries);
        }
        return nn::add(c.tape, x, c.drop(out));
    }
};

}  // namespace seqfake::model
