#include "seqfake/model/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "seqfake/error.hpp"

namespace seqfake::model {

std::string_view to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::seqfakeformer: return "seqfakeformer";
        case ModelKind::seqfakeformer_pp: return "seqfakeformer++";
        case ModelKind::multi_cls: return "multi_cls";
    }
    return "?";
}

ModelKind parse_model_kind(std::string_view name) {
    if (name == "seqfakeformer") return ModelKind::seqfakeformer;
    if (name == "seqfakeformer++" || name == "seqfakeformer_pp") return ModelKind::seqfakeformer_pp;
    if (name == "multi_cls" || name == "multi-cls") return ModelKind::multi_cls;
    throw ConfigError("unknown model kind: " + std::string(name));
}

void ModelConfig::validate() const {
    if (width <= 0 || heads <= 0 || width % heads != 0) throw ConfigError("width must be a positive multiple of heads");
    if (width % 4 != 0) throw ConfigError("width must be divisible by 4 for the 2-D positional code");
    if (image_size <= 0 || image_size % 16 != 0) throw ShapeError("image size must be a positive multiple of 16");
    if (backbone_channels.size() != 3) throw ConfigError("backbone needs 3 intermediate channel counts");
    if (!(seca.lambda > 0)) throw ConfigError("lambda must be positive");
    if (!(tau > 0)) throw ConfigError("tau must be positive");
    if (dropout < 0 || dropout >= 1) throw ConfigError("dropout must be in [0, 1)");
    if (encoder_layers < 1 || decoder_layers < 1) throw ConfigError("need at least one encoder and decoder layer");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"kind", to_string(c.kind)},
                       {"image_size", c.image_size},
                       {"width", c.width},
                       {"heads", c.heads},
                       {"encoder_layers", c.encoder_layers},
                       {"decoder_layers", c.decoder_layers},
                       {"ffn_hidden", c.hidden()},
                       {"dropout", c.dropout},
                       {"backbone_channels", c.backbone_channels},
                       {"seca", c.seca.enabled},
                       {"seca_multi_head", c.seca.multi_head},
                       {"lambda", c.seca.lambda},
                       {"r_min", c.seca.r_min},
                       {"autoregressive", c.autoregressive},
                       {"tau", c.tau},
                       {"projection_dim", c.projection_dim},
                       {"isc", c.isc},
                       {"ism", c.ism},
                       {"share_ffn_with_sequence_encoder", c.share_ffn_with_sequence_encoder},
                       {"multi_cls_heads", c.multi_cls_heads}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    ModelConfig d;
    c.kind = parse_model_kind(j.value("kind", std::string(to_string(d.kind))));
    c.image_size = j.value("image_size", d.image_size);
    c.width = j.value("width", d.width);
    c.heads = j.value("heads", d.heads);
    c.encoder_layers = j.value("encoder_layers", d.encoder_layers);
    c.decoder_layers = j.value("decoder_layers", d.decoder_layers);
    c.ffn_hidden = j.value("ffn_hidden", d.ffn_hidden);
    c.dropout = j.value("dropout", d.dropout);
    c.backbone_channels = j.value("backbone_channels", d.backbone_channels);
    c.seca.enabled = j.value("seca", d.seca.enabled);
    c.seca.multi_head = j.value("seca_multi_head", d.seca.multi_head);
    c.seca.lambda = j.value("lambda", d.seca.lambda);
    c.seca.r_min = j.value("r_min", d.seca.r_min);
    c.autoregressive = j.value("autoregressive", d.autoregressive);
    c.tau = j.value("tau", d.tau);
    c.projection_dim = j.value("projection_dim", d.projection_dim);
    c.isc = j.value("isc", d.isc);
    c.ism = j.value("ism", d.ism);
    c.share_ffn_with_sequence_encoder = j.value("share_ffn_with_sequence_encoder", d.share_ffn_with_sequence_encoder);
    c.multi_cls_heads = j.value("multi_cls_heads", d.multi_cls_heads);
}

std::vector<int> annotation_groups(const std::vector<ManipulationSequence>& annotations) {
    std::map<ManipulationSequence, int> ids;
    std::vector<int> out;
    out.reserve(annotations.size());
    for (const auto& a : annotations) {
        auto [it, inserted] = ids.emplace(a, static_cast<int>(ids.size()));
        out.push_back(it->second);
    }
    return out;
}

template <class T>
HardNegatives mine_hard_negatives(const Matrix<T>& sim, const std::vector<int>& groups) {
    const int k = static_cast<int>(sim.rows());
    if (sim.cols() != k || static_cast<int>(groups.size()) != k) throw ShapeError("hard negatives: shape");
    HardNegatives h;
    h.sequence_for_image.assign(static_cast<std::size_t>(k), -1);
    h.image_for_sequence.assign(static_cast<std::size_t>(k), -1);
    for (int i = 0; i < k; ++i) {
        T best_row = 0, best_col = 0;
        for (int j = 0; j < k; ++j) {
            if (groups[static_cast<std::size_t>(i)] == groups[static_cast<std::size_t>(j)]) continue;
            auto& r = h.sequence_for_image[static_cast<std::size_t>(i)];
            if (r < 0 || sim(i, j) > best_row) {
                r = j;
                best_row = sim(i, j);
            }
            auto& c = h.image_for_sequence[static_cast<std::size_t>(i)];
            if (c < 0 || sim(j, i) > best_col) {
                c = j;
                best_col = sim(j, i);
            }
        }
    }
    return h;
}

template <class T>
Model<T>::Model(const ModelConfig& cfg, const Vocabulary& vocab, std::uint64_t seed)
    : cfg_(cfg), vocab_(vocab), store_(seed) {
    cfg_.validate();
    build(seed);
}

template <class T>
void Model<T>::bind_shared(const std::string& from, const std::string& to) {
    std::vector<nn::ParamPtr<T>> hits;
    for (const auto& p : store_.params()) {
        if (p->name.rfind(from, 0) == 0) hits.push_back(p);
    }
    if (hits.empty()) throw BindingError("no parameters to share under " + from);
    for (const auto& p : hits) store_.alias(to + p->name.substr(from.size()), p);
}

template <class T>
void Model<T>::build(std::uint64_t) {
    using nn::ParamGroup;
    const int C = cfg_.width;
    const int g = cfg_.grid();
    std::vector<int> chans{3};
    chans.insert(chans.end(), cfg_.backbone_channels.begin(), cfg_.backbone_channels.end());
    chans.push_back(C);
    for (std::size_t i = 0; i + 1 < chans.size(); ++i) {
        const std::string n = "backbone.conv" + std::to_string(i);
        conv_w_.push_back(store_.he(n + ".weight", chans[i + 1], 9 * chans[i], ParamGroup::backbone));
        conv_b_.push_back(store_.zeros(n + ".bias", chans[i + 1], 1, ParamGroup::backbone));
    }

    if (cfg_.kind == ModelKind::multi_cls) {
        const int classes = static_cast<int>(vocab_.num_labels()) + 1;
        for (int h = 0; h < cfg_.multi_cls_heads; ++h) {
            cls_heads_.emplace_back(store_, "multi_cls.head" + std::to_string(h), C, classes);
        }
        return;
    }

    pos2d_ = nn::sinusoid_2d<T>(C, g, g);
    for (int l = 0; l < cfg_.encoder_layers; ++l) {
        const std::string n = "encoder.layers." + std::to_string(l);
        encoder_.push_back({nn::SelfAttentionBlock<T>(store_, n + ".self", C, cfg_.heads),
                            nn::FeedForward<T>(store_, n + ".ffn", C, cfg_.hidden())});
    }
    encoder_norm_ = nn::LayerNorm<T>(store_, "encoder.norm", C);

    token_embedding_ = store_.normal("tokens.embedding", C, static_cast<int>(vocab_.num_tokens()), 1.0,
                                     ParamGroup::transformer);
    pos1d_ = nn::sinusoid_1d<T>(C, static_cast<int>(kMaxSequenceLength) + 2);
    for (int l = 0; l < cfg_.decoder_layers; ++l) {
        const std::string n = "decoder.layers." + std::to_string(l);
        decoder_.push_back({nn::SelfAttentionBlock<T>(store_, n + ".self", C, cfg_.heads),
                            SecaCrossBlock<T>(store_, n + ".cross", C, cfg_.heads, cfg_.seca),
                            nn::FeedForward<T>(store_, n + ".ffn", C, cfg_.hidden())});
    }
    decoder_norm_ = nn::LayerNorm<T>(store_, "decoder.norm", C);
    classifier_ = nn::Linear<T>(store_, "decoder.classifier", C, static_cast<int>(vocab_.num_decoder_classes()));

    if (cfg_.kind != ModelKind::seqfakeformer_pp) return;

    agg_query_ = store_.normal("aggregate.query", C, 1, 1.0, ParamGroup::transformer);
    agg_key_ = nn::Linear<T>(store_, "aggregate.key", C, C);
    agg_value_ = nn::Linear<T>(store_, "aggregate.value", C, C);
    proj_image_ = nn::Linear<T>(store_, "isc.project_image", C, cfg_.projection_dim);
    proj_sequence_ = nn::Linear<T>(store_, "isc.project_sequence", C, cfg_.projection_dim);
    for (int l = 0; l < cfg_.decoder_layers; ++l) {
        const std::string n = "isc.layers." + std::to_string(l);
        const std::string d = "decoder.layers." + std::to_string(l);
        SequenceLayer layer{nn::SelfAttentionBlock<T>(store_, n + ".self", C, cfg_.heads), {}};
        if (cfg_.share_ffn_with_sequence_encoder) {
            layer.ffn = decoder_[static_cast<std::size_t>(l)].ffn;
            bind_shared(d + ".ffn.", n + ".ffn.");
        } else {
            layer.ffn = nn::FeedForward<T>(store_, n + ".ffn", C, cfg_.hidden());
        }
        sequence_encoder_.push_back(std::move(layer));
    }
    sequence_norm_ = nn::LayerNorm<T>(store_, "isc.norm", C);
    for (int l = 0; l < cfg_.decoder_layers; ++l) {
        const std::string n = "ism.layers." + std::to_string(l);
        const std::string d = "decoder.layers." + std::to_string(l);
        const auto& dec = decoder_[static_cast<std::size_t>(l)];
        match_encoder_.push_back({nn::SelfAttentionBlock<T>(store_, n + ".self", C, cfg_.heads), dec.cross, dec.ffn});
        bind_shared(d + ".cross.", n + ".cross.");
        bind_shared(d + ".ffn.", n + ".ffn.");
    }
    match_norm_ = nn::LayerNorm<T>(store_, "ism.norm", C);
    match_fc1_ = nn::Linear<T>(store_, "ism.head.fc1", C, C);
    match_fc2_ = nn::Linear<T>(store_, "ism.head.fc2", C, 2);
}

template <class T>
Var Model<T>::backbone(Context<T>& c, const Matrix<T>& pixels, int batch) const {
    const int s = cfg_.image_size;
    if (pixels.rows() != 3 || pixels.cols() != static_cast<Eigen::Index>(batch) * s * s) {
        throw ShapeError("backbone: expected (3, B*" + std::to_string(s) + "*" + std::to_string(s) + ") pixels");
    }
    Var x = c.tape.constant(((pixels.array() - T(0.5)) * T(4)).matrix());
    int size = s;
    for (std::size_t i = 0; i < conv_w_.size(); ++i) {
        kernels::ConvGeometry geo;
        geo.channels = static_cast<int>(conv_w_[i]->value.cols()) / 9;
        geo.batch = batch;
        geo.height = geo.width = size;
        geo.kernel = 3;
        geo.stride = 2;
        geo.pad = 1;
        x = nn::conv2d(c.tape, x, c.p(conv_w_[i]), c.p(conv_b_[i]), geo);
        if (i + 1 < conv_w_.size()) x = nn::relu(c.tape, x);
        size = geo.out_height();
    }
    return x;
}

template <class T>
Var Model<T>::encode(Context<T>& c, const Matrix<T>& pixels, int batch) const {
    if (cfg_.kind == ModelKind::multi_cls) throw ConfigError("multi_cls has no transformer encoder");
    const int hw = cfg_.grid() * cfg_.grid();
    Var x = nn::add_constant(c.tape, backbone(c, pixels, batch), nn::tile_columns(pos2d_, batch));
    nn::AttentionOptions opt;
    opt.batch = batch;
    opt.queries = opt.keys = hw;
    for (const auto& layer : encoder_) {
        x = layer.attn(c, x, opt);
        x = layer.ffn(c, x);
    }
    return encoder_norm_(c, x);
}

template <class T>
Var Model<T>::embed_tokens(Context<T>& c, const std::vector<int>& tokens, int steps) const {
    const int batch = static_cast<int>(tokens.size()) / steps;
    Var e = nn::embedding(c.tape, c.p(token_embedding_), tokens);
    return nn::add_constant(c.tape, e, nn::tile_columns<T>(pos1d_.leftCols(steps), batch));
}

template <class T>
Var Model<T>::decode(Context<T>& c, Var f_spa, int batch, int steps, const std::vector<int>& tokens,
                     std::vector<SecaTrace<T>>* traces) const {
    if (static_cast<int>(tokens.size()) != batch * steps) throw ShapeError("decode: token count != batch*steps");
    if (steps < 1 || steps > static_cast<int>(kMaxSequenceLength) + 2) throw ShapeError("decode: step count");
    const int g = cfg_.grid();
    Var x = embed_tokens(c, tokens, steps);
    nn::AttentionOptions self_opt;
    self_opt.batch = batch;
    self_opt.queries = self_opt.keys = steps;
    self_opt.causal = cfg_.autoregressive;
    const CrossShape shape{batch, steps, g, g};
    if (traces) traces->assign(decoder_.size(), {});
    for (std::size_t l = 0; l < decoder_.size(); ++l) {
        const auto& layer = decoder_[l];
        x = layer.self_attn(c, x, self_opt);
        x = layer.cross(c, x, f_spa, shape, traces ? &(*traces)[l] : nullptr);
        x = layer.ffn(c, x);
    }
    return classifier_(c, decoder_norm_(c, x));
}

template <class T>
Var Model<T>::decoder_loss(Context<T>& c, Var f_spa, const std::vector<ManipulationSequence>& annotations) const {
    const int batch = static_cast<int>(annotations.size());
    std::size_t longest = 0;
    for (const auto& a : annotations) longest = std::max(longest, a.size());
    const int steps = static_cast<int>(longest) + 1;
    std::vector<int> inputs, targets;
    inputs.reserve(static_cast<std::size_t>(batch * steps));
    targets.reserve(inputs.capacity());
    for (const auto& a : annotations) {
        for (int t = 0; t < steps; ++t) {
            const auto ut = static_cast<std::size_t>(t);
            inputs.push_back(t == 0 ? vocab_.sos() : (ut <= a.size() ? a[ut - 1] : vocab_.nm()));
            targets.push_back(ut < a.size() ? a[ut] : (ut == a.size() ? vocab_.eos() : -1));
        }
    }
    Var logits = decode(c, f_spa, batch, steps, inputs);
    return nn::softmax_cross_entropy(c.tape, logits, std::move(targets));
}

template <class T>
Var Model<T>::aggregate(Context<T>& c, Var f_spa, int batch) const {
    const int hw = cfg_.grid() * cfg_.grid();
    Var q = nn::gather_columns(c.tape, c.p(agg_query_), std::vector<int>(static_cast<std::size_t>(batch), 0));
    nn::AttentionOptions opt;
    opt.batch = batch;
    opt.queries = 1;
    opt.keys = hw;
    opt.heads = 1;
    return nn::attention(c.tape, q, agg_key_(c, f_spa), agg_value_(c, f_spa), Var{}, opt);
}

namespace {

// [prefix, ops..., pad...] per item, plus the valid length of each item.
struct PrefixedTokens {
    std::vector<int> ids;
    std::vector<int> lengths;
    int steps = 1;
};

PrefixedTokens prefixed_tokens(const Vocabulary& vocab, const std::vector<ManipulationSequence>& seqs, TokenId prefix) {
    PrefixedTokens p;
    for (const auto& s : seqs) p.steps = std::max(p.steps, static_cast<int>(s.size()) + 1);
    for (const auto& s : seqs) {
        auto toks = tokenize_prefixed(vocab, s, prefix);
        p.lengths.push_back(static_cast<int>(toks.size()));
        toks.resize(static_cast<std::size_t>(p.steps), vocab.nm());
        p.ids.insert(p.ids.end(), toks.begin(), toks.end());
    }
    return p;
}

std::vector<int> first_columns(int items, int steps) {
    std::vector<int> idx(static_cast<std::size_t>(items));
    for (int i = 0; i < items; ++i) idx[static_cast<std::size_t>(i)] = i * steps;
    return idx;
}

}  // namespace

template <class T>
Var Model<T>::encode_sequence(Context<T>& c, const std::vector<ManipulationSequence>& seqs) const {
    if (sequence_encoder_.empty()) throw ConfigError("sequence encoder requires seqfakeformer++");
    const auto tok = prefixed_tokens(vocab_, seqs, vocab_.cls());
    const int batch = static_cast<int>(seqs.size());
    Var x = embed_tokens(c, tok.ids, tok.steps);
    nn::AttentionOptions opt;
    opt.batch = batch;
    opt.queries = opt.keys = tok.steps;
    opt.key_lengths = tok.lengths;
    for (const auto& layer : sequence_encoder_) {
        x = layer.self_attn(c, x, opt);
        x = layer.ffn(c, x);
    }
    x = sequence_norm_(c, x);
    return nn::gather_columns(c.tape, x, first_columns(batch, tok.steps));
}

template <class T>
Var Model<T>::encode_matched(Context<T>& c, Var f_spa, const std::vector<int>& images,
                             const std::vector<ManipulationSequence>& seqs) const {
    if (match_encoder_.empty()) throw ConfigError("matching encoder requires seqfakeformer++");
    if (images.size() != seqs.size()) throw ShapeError("encode_matched: pair count");
    const int g = cfg_.grid();
    const int hw = g * g;
    const int pairs = static_cast<int>(seqs.size());
    std::vector<int> cols;
    cols.reserve(static_cast<std::size_t>(pairs * hw));
    for (int img : images) {
        for (int k = 0; k < hw; ++k) cols.push_back(img * hw + k);
    }
    Var memory = nn::gather_columns(c.tape, f_spa, std::move(cols));
    const auto tok = prefixed_tokens(vocab_, seqs, vocab_.enc());
    Var x = embed_tokens(c, tok.ids, tok.steps);
    nn::AttentionOptions opt;
    opt.batch = pairs;
    opt.queries = opt.keys = tok.steps;
    opt.key_lengths = tok.lengths;
    const CrossShape shape{pairs, tok.steps, g, g};
    for (const auto& layer : match_encoder_) {
        x = layer.self_attn(c, x, opt);
        x = layer.cross(c, x, memory, shape);
        x = layer.ffn(c, x);
    }
    x = match_norm_(c, x);
    return nn::gather_columns(c.tape, x, first_columns(pairs, tok.steps));
}

template <class T>
Var Model<T>::project_image(Context<T>& c, Var t_agg) const {
    return nn::l2_normalize_columns(c.tape, proj_image_(c, t_agg));
}

template <class T>
Var Model<T>::project_sequence(Context<T>& c, Var t_cls) const {
    return nn::l2_normalize_columns(c.tape, proj_sequence_(c, t_cls));
}

template <class T>
Var Model<T>::match_logits(Context<T>& c, Var t_enc) const {
    return match_fc2_(c, nn::relu(c.tape, match_fc1_(c, t_enc)));
}

template <class T>
Var Model<T>::isc_loss(Context<T>& c, Var similarity, const std::vector<ManipulationSequence>& annotations) const {
    return nn::info_nce(c.tape, similarity, static_cast<T>(cfg_.tau), annotation_groups(annotations));
}

template <class T>
Var Model<T>::ism_loss(Context<T>& c, Var f_spa, const Matrix<T>& similarity,
                       const std::vector<ManipulationSequence>& annotations) const {
    const int k = static_cast<int>(annotations.size());
    if (k < 2) throw BatchError("ism: batch needs at least 2 pairs");
    const auto neg = mine_hard_negatives(similarity, annotation_groups(annotations));
    std::vector<int> images;
    std::vector<ManipulationSequence> seqs;
    std::vector<int> labels;
    for (int i = 0; i < k; ++i) {
        images.push_back(i);
        seqs.push_back(annotations[static_cast<std::size_t>(i)]);
        labels.push_back(1);
    }
    for (int i = 0; i < k; ++i) {
        const int j = neg.sequence_for_image[static_cast<std::size_t>(i)];
        if (j < 0) continue;
        images.push_back(i);
        seqs.push_back(annotations[static_cast<std::size_t>(j)]);
        labels.push_back(0);
    }
    for (int j = 0; j < k; ++j) {
        const int i = neg.image_for_sequence[static_cast<std::size_t>(j)];
        if (i < 0) continue;
        images.push_back(i);
        seqs.push_back(annotations[static_cast<std::size_t>(j)]);
        labels.push_back(0);
    }
    Var logits = match_logits(c, encode_matched(c, f_spa, images, seqs));
    return nn::softmax_cross_entropy(c.tape, logits, std::move(labels));
}

template <class T>
std::vector<Var> Model<T>::multi_cls_logits(Context<T>& c, const Matrix<T>& pixels, int batch) const {
    if (cls_heads_.empty()) throw ConfigError("model has no multi-class heads");
    const int hw = cfg_.grid() * cfg_.grid();
    Var pooled = nn::mean_pool(c.tape, backbone(c, pixels, batch), hw);
    std::vector<Var> out;
    for (const auto& h : cls_heads_) out.push_back(h(c, pooled));
    return out;
}

template <class T>
LossTerms<T> Model<T>::loss(Context<T>& c, const ImageBatch<T>& b) const {
    if (static_cast<int>(b.annotations.size()) != b.batch) throw ShapeError("loss: annotation count != batch");
    LossTerms<T> out;
    if (cfg_.kind == ModelKind::multi_cls) {
        const auto logits = multi_cls_logits(c, b.pixels, b.batch);
        const int nm_class = static_cast<int>(vocab_.num_labels());
        std::vector<Var> terms;
        for (std::size_t h = 0; h < logits.size(); ++h) {
            std::vector<int> targets;
            for (const auto& a : b.annotations) targets.push_back(h < a.size() ? a[h] : nm_class);
            terms.push_back(nn::softmax_cross_entropy(c.tape, logits[h], std::move(targets)));
        }
        out.dec = nn::scale(c.tape, nn::sum_scalars<T>(c.tape, terms), T(1) / static_cast<T>(terms.size()));
        out.total = out.dec;
        return out;
    }
    Var f_spa = encode(c, b.pixels, b.batch);
    out.dec = decoder_loss(c, f_spa, b.annotations);
    std::vector<Var> terms{out.dec};
    if (cfg_.kind == ModelKind::seqfakeformer_pp && (cfg_.isc || cfg_.ism)) {
        Var img = project_image(c, aggregate(c, f_spa, b.batch));
        Var seq = project_sequence(c, encode_sequence(c, b.annotations));
        Var sim = nn::matmul(c.tape, img, seq, true, false);
        if (cfg_.isc) {
            out.isc = isc_loss(c, sim, b.annotations);
            terms.push_back(out.isc);
        }
        if (cfg_.ism) {
            out.ism = ism_loss(c, f_spa, c.tape.value(sim), b.annotations);
            terms.push_back(out.ism);
        }
    }
    out.total = terms.size() == 1 ? out.dec : nn::sum_scalars<T>(c.tape, terms);
    return out;
}

template <class T>
std::vector<ManipulationSequence> Model<T>::greedy(Context<T>& c, Var f_spa, int batch,
                                                   std::vector<std::vector<SecaTrace<T>>>* traces) const {
    std::vector<ManipulationSequence> seqs(static_cast<std::size_t>(batch));
    std::vector<bool> done(static_cast<std::size_t>(batch), false);
    const int classes = static_cast<int>(vocab_.num_decoder_classes());
    for (int steps = 1; steps <= static_cast<int>(kMaxSequenceLength) + 1; ++steps) {
        std::vector<int> tokens;
        tokens.reserve(static_cast<std::size_t>(batch * steps));
        for (const auto& s : seqs) {
            tokens.push_back(vocab_.sos());
            for (int t = 1; t < steps; ++t) {
                const auto ut = static_cast<std::size_t>(t);
                tokens.push_back(ut <= s.size() ? s[ut - 1] : vocab_.nm());
            }
        }
        std::vector<SecaTrace<T>> step_trace;
        Var logits = decode(c, f_spa, batch, steps, tokens, traces ? &step_trace : nullptr);
        if (traces) traces->push_back(std::move(step_trace));
        const auto& L = c.tape.value(logits);
        bool all_done = true;
        for (int b = 0; b < batch; ++b) {
            const auto ub = static_cast<std::size_t>(b);
            if (done[ub]) continue;
            Eigen::Index best = 0;
            L.col(static_cast<Eigen::Index>(b) * steps + steps - 1).head(classes).maxCoeff(&best);
            if (static_cast<int>(best) == vocab_.eos()) {
                done[ub] = true;
            } else {
                seqs[ub].ops.push_back(static_cast<int>(best));
                if (seqs[ub].size() >= kMaxSequenceLength) done[ub] = true;
            }
            all_done = all_done && done[ub];
        }
        if (all_done) break;
    }
    return seqs;
}

template <class T>
std::vector<ManipulationSequence> Model<T>::predict(const Matrix<T>& pixels, int batch) const {
    nn::Tape<T> tape(false);
    Context<T> c{tape};
    if (cfg_.kind == ModelKind::multi_cls) {
        const auto logits = multi_cls_logits(c, pixels, batch);
        std::vector<ManipulationSequence> out(static_cast<std::size_t>(batch));
        const int nm_class = static_cast<int>(vocab_.num_labels());
        for (int b = 0; b < batch; ++b) {
            auto& s = out[static_cast<std::size_t>(b)].ops;
            for (Var l : logits) {
                Eigen::Index best = 0;
                tape.value(l).col(b).maxCoeff(&best);
                s.push_back(static_cast<int>(best) == nm_class ? vocab_.nm() : static_cast<int>(best));
            }
            while (!s.empty() && s.back() == vocab_.nm()) s.pop_back();
        }
        return out;
    }
    Var f = encode(c, pixels, batch);
    return greedy(c, f, batch, nullptr);
}

template <class T>
DecodeTrace<T> Model<T>::trace(const Matrix<T>& pixels) const {
    if (cfg_.kind == ModelKind::multi_cls) throw ConfigError("multi_cls has no decoder to trace");
    nn::Tape<T> tape(false);
    Context<T> c{tape};
    Var f = encode(c, pixels, 1);
    DecodeTrace<T> out;
    out.sequence = greedy(c, f, 1, &out.steps).front();
    return out;
}

template class Model<float>;
template class Model<double>;
template HardNegatives mine_hard_negatives<float>(const Matrix<float>&, const std::vector<int>&);
template HardNegatives mine_hard_negatives<double>(const Matrix<double>&, const std::vector<int>&);

}  // namespace seqfake::model
