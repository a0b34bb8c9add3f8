#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqfake/model/seca.hpp"
#include "seqfake/vocab.hpp"

namespace seqfake::model {

enum class ModelKind { seqfakeformer, seqfakeformer_pp, multi_cls };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

struct ModelConfig {
    ModelKind kind = ModelKind::seqfakeformer;
    int image_size = 128;
    int width = 128;  // C
    int heads = 4;    // D
    int encoder_layers = 2;
    int decoder_layers = 2;
    int ffn_hidden = 0;  // 0: 4*C
    double dropout = 0.1;
    std::vector<int> backbone_channels{16, 32, 64};  // stages before the final C-wide one
    SecaSettings seca{};
    bool autoregressive = true;  // causal mask in the decoder
    double tau = 0.07;
    int projection_dim = 256;
    bool isc = true;  // SeqFakeFormer++ terms
    bool ism = true;
    bool share_ffn_with_sequence_encoder = true;
    int multi_cls_heads = static_cast<int>(kMaxSequenceLength);

    int hidden() const { return ffn_hidden > 0 ? ffn_hidden : 4 * width; }
    int grid() const { return image_size / 16; }
    void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// A batch of images, planar (3, B*S*S) with one pixel per column in
// row-major order, values in [0, 1], plus their annotations.
template <class T>
struct ImageBatch {
    Matrix<T> pixels;
    int batch = 0;
    int size = 0;
    std::vector<ManipulationSequence> annotations;
};

template <class T>
struct LossTerms {
    Var total, dec, isc, ism;
};

// Inspection output of a greedy decode for a single image.
template <class T>
struct DecodeTrace {
    ManipulationSequence sequence;
    std::vector<std::vector<SecaTrace<T>>> steps;  // [step][decoder layer]
};

template <class T>
class Model {
public:
    Model(const ModelConfig& cfg, const Vocabulary& vocab, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    const Vocabulary& vocab() const { return vocab_; }
    nn::ParamStore<T>& store() { return store_; }
    const nn::ParamStore<T>& store() const { return store_; }

    // Backbone features f^ori, (C, B*H*W).
    Var backbone(Context<T>& c, const Matrix<T>& pixels, int batch) const;
    // Fixed positional code for the feature grid, (C, H*W).
    const Matrix<T>& positional() const { return pos2d_; }
    // f^spa, (C, B*H*W).
    Var encode(Context<T>& c, const Matrix<T>& pixels, int batch) const;

    // Decoder over token inputs (B*T ids, item-major); returns logits (V+1, B*T).
    Var decode(Context<T>& c, Var f_spa, int batch, int steps, const std::vector<int>& tokens,
               std::vector<SecaTrace<T>>* traces = nullptr) const;

    // Teacher-forced decoder loss over `annotations`.
    Var decoder_loss(Context<T>& c, Var f_spa, const std::vector<ManipulationSequence>& annotations) const;

    // Attentional aggregation t_agg, (C, B).
    Var aggregate(Context<T>& c, Var f_spa, int batch) const;
    // Sequence encoder output t_cls, (C, B).
    Var encode_sequence(Context<T>& c, const std::vector<ManipulationSequence>& seqs) const;
    // Image-attended sequence encoder output t_enc, (C, pairs). `images[i]`
    // selects the item of f_spa paired with seqs[i].
    Var encode_matched(Context<T>& c, Var f_spa, const std::vector<int>& images,
                       const std::vector<ManipulationSequence>& seqs) const;
    // Normalized projections and their similarity (rows: images, cols: sequences).
    Var project_image(Context<T>& c, Var t_agg) const;
    Var project_sequence(Context<T>& c, Var t_cls) const;
    Var match_logits(Context<T>& c, Var t_enc) const;

    Var isc_loss(Context<T>& c, Var similarity, const std::vector<ManipulationSequence>& annotations) const;
    Var ism_loss(Context<T>& c, Var f_spa, const Matrix<T>& similarity,
                 const std::vector<ManipulationSequence>& annotations) const;

    // Multi-Cls baseline logits, one (V+1, B) block per head.
    std::vector<Var> multi_cls_logits(Context<T>& c, const Matrix<T>& pixels, int batch) const;

    // Joint objective for the configured kind.
    LossTerms<T> loss(Context<T>& c, const ImageBatch<T>& batch) const;

    std::vector<ManipulationSequence> predict(const Matrix<T>& pixels, int batch) const;
    DecodeTrace<T> trace(const Matrix<T>& pixels) const;

    // Shared parameter groups, canonical name -> aliases.
    const std::map<std::string, std::vector<std::string>>& sharing() const { return store_.aliases(); }

private:
    struct EncoderLayer {
        nn::SelfAttentionBlock<T> attn;
        nn::FeedForward<T> ffn;
    };
    struct DecoderLayer {
        nn::SelfAttentionBlock<T> self_attn;
        SecaCrossBlock<T> cross;
        nn::FeedForward<T> ffn;
    };
    struct SequenceLayer {
        nn::SelfAttentionBlock<T> self_attn;
        nn::FeedForward<T> ffn;
    };
    struct MatchLayer {
        nn::SelfAttentionBlock<T> self_attn;
        SecaCrossBlock<T> cross;
        nn::FeedForward<T> ffn;
    };

    void build(std::uint64_t seed);
    void bind_shared(const std::string& from, const std::string& to);
    Var embed_tokens(Context<T>& c, const std::vector<int>& tokens, int steps) const;
    std::vector<ManipulationSequence> greedy(Context<T>& c, Var f_spa, int batch,
                                             std::vector<std::vector<SecaTrace<T>>>* traces) const;

    ModelConfig cfg_;
    Vocabulary vocab_;
    nn::ParamStore<T> store_;

    std::vector<nn::ParamPtr<T>> conv_w_, conv_b_;
    Matrix<T> pos2d_;
    std::vector<EncoderLayer> encoder_;
    nn::LayerNorm<T> encoder_norm_;

    nn::ParamPtr<T> token_embedding_;
    Matrix<T> pos1d_;
    std::vector<DecoderLayer> decoder_;
    nn::LayerNorm<T> decoder_norm_;
    nn::Linear<T> classifier_;

    nn::ParamPtr<T> agg_query_;
    nn::Linear<T> agg_key_, agg_value_;
    nn::Linear<T> proj_image_, proj_sequence_;
    std::vector<SequenceLayer> sequence_encoder_;
    nn::LayerNorm<T> sequence_norm_;
    std::vector<MatchLayer> match_encoder_;
    nn::LayerNorm<T> match_norm_;
    nn::Linear<T> match_fc1_, match_fc2_;

    std::vector<nn::Linear<T>> cls_heads_;
};

// Hard negatives for image-sequence matching: for each anchor the most
// similar partner of a different annotation group, or -1 when none exists.
// `similarity` rows are images and columns sequences.
struct HardNegatives {
    std::vector<int> sequence_for_image;
    std::vector<int> image_for_sequence;
};
template <class T>
HardNegatives mine_hard_negatives(const Matrix<T>& similarity, const std::vector<int>& groups);

// Group id per item: equal annotations share an id.
std::vector<int> annotation_groups(const std::vector<ManipulationSequence>& annotations);

}  // namespace seqfake::model
