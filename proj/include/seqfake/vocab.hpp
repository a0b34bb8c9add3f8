#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace seqfake {

using TokenId = int;

enum class Track { components, attributes };

std::string_view to_string(Track track);
Track parse_track(std::string_view name);

inline constexpr std::size_t kMaxSequenceLength = 5;

// Ordered list of manipulation label ids (no special tokens, no repeats).
struct ManipulationSequence {
    std::vector<TokenId> ops;

    ManipulationSequence() = default;
    ManipulationSequence(std::initializer_list<TokenId> ids) : ops(ids) {}
    explicit ManipulationSequence(std::vector<TokenId> ids) : ops(std::move(ids)) {}

    std::size_t size() const { return ops.size(); }
    bool empty() const { return ops.empty(); }
    auto begin() const { return ops.begin(); }
    auto end() const { return ops.end(); }
    TokenId operator[](std::size_t i) const { return ops[i]; }

    friend bool operator==(const ManipulationSequence&, const ManipulationSequence&) = default;
    friend auto operator<=>(const ManipulationSequence& a, const ManipulationSequence& b) {
        return a.ops <=> b.ops;
    }
};

// Label ids occupy [0, V). Special tokens follow in the order
// EOS, SOS, NM, CLS, ENC so that the decoder's class space [0, V] is the
// labels plus EOS with matching ids.
class Vocabulary {
public:
    Vocabulary(Track track, std::vector<std::string> labels);

    static Vocabulary components();
    static Vocabulary attributes();
    static Vocabulary for_track(Track track);

    Track track() const { return track_; }
    std::size_t num_labels() const { return labels_.size(); }
    // Labels plus all specials; the size of a token embedding table.
    std::size_t num_tokens() const { return labels_.size() + 5; }
    // Decoder output classes: labels plus EOS.
    std::size_t num_decoder_classes() const { return labels_.size() + 1; }

    TokenId eos() const { return static_cast<TokenId>(labels_.size()); }
    TokenId sos() const { return eos() + 1; }
    TokenId nm() const { return eos() + 2; }
    TokenId cls() const { return eos() + 3; }
    TokenId enc() const { return eos() + 4; }

    bool is_label(TokenId id) const { return id >= 0 && id < eos(); }
    bool is_token(TokenId id) const { return id >= 0 && id <= enc(); }

    const std::vector<std::string>& labels() const { return labels_; }
    const std::string& name(TokenId id) const;
    TokenId id(std::string_view name) const;

    // Throws VocabError / LengthError when the sequence breaks an invariant.
    void validate(const ManipulationSequence& seq) const;

    ManipulationSequence parse(const std::vector<std::string>& names) const;
    std::vector<std::string> names(const ManipulationSequence& seq) const;

    // "Eyebrow-Hair-Lip"; the empty sequence renders as "original".
    std::string display(const ManipulationSequence& seq) const;
    ManipulationSequence parse_display(std::string_view text) const;

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
        return a.track_ == b.track_ && a.labels_ == b.labels_;
    }

private:
    Track track_;
    std::vector<std::string> labels_;
    std::vector<std::string> all_names_;
    std::unordered_map<std::string, TokenId> index_;
};

// [SOS, ops..., EOS]
std::vector<TokenId> tokenize_decoder(const Vocabulary& vocab, const ManipulationSequence& seq);

// [prefix, ops...]; prefix must be CLS or ENC.
std::vector<TokenId> tokenize_prefixed(const Vocabulary& vocab, const ManipulationSequence& seq,
                                       TokenId prefix);

// ops followed by NM up to exactly `length` entries.
std::vector<TokenId> pad_fixed(const Vocabulary& vocab, const ManipulationSequence& seq,
                               std::size_t length = kMaxSequenceLength);

// Inverse of pad_fixed: drops trailing NM tokens.
ManipulationSequence strip_padding(const Vocabulary& vocab, const std::vector<TokenId>& padded);

}  // namespace seqfake
