#include "seqfake/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "seqfake/error.hpp"

namespace seqfake {

std::string_view to_string(Track track) {
    return track == Track::components ? "components" : "attributes";
}

Track parse_track(std::string_view name) {
    if (name == "components") return Track::components;
    if (name == "attributes") return Track::attributes;
    throw ConfigError("unknown track '" + std::string(name) + "'");
}

Vocabulary::Vocabulary(Track track, std::vector<std::string> labels)
    : track_(track), labels_(std::move(labels)) {
    if (labels_.empty()) throw VocabError("vocabulary needs at least one label");
    all_names_ = labels_;
    for (const char* special : {"[EOS]", "[SOS]", "[NM]", "[CLS]", "[ENC]"}) {
        all_names_.emplace_back(special);
    }
    for (std::size_t i = 0; i < all_names_.size(); ++i) {
        const auto& n = all_names_[i];
        if (n.empty()) throw VocabError("empty label name");
        if (!index_.emplace(n, static_cast<TokenId>(i)).second) {
            throw VocabError("duplicate label '" + n + "'");
        }
    }
}

Vocabulary Vocabulary::components() {
    return Vocabulary(Track::components, {"nose", "eye", "eyebrow", "lip", "hair"});
}

Vocabulary Vocabulary::attributes() {
    return Vocabulary(Track::attributes, {"bangs", "eyeglasses", "beard", "smiling", "young"});
}

Vocabulary Vocabulary::for_track(Track track) {
    return track == Track::components ? components() : attributes();
}

const std::string& Vocabulary::name(TokenId id) const {
    if (!is_token(id)) throw VocabError("token id " + std::to_string(id) + " out of range");
    return all_names_[static_cast<std::size_t>(id)];
}

TokenId Vocabulary::id(std::string_view name) const {
    std::string key(name);
    auto it = index_.find(key);
    if (it == index_.end()) {
        // Display form is capitalized; accept it case-insensitively.
        std::transform(key.begin(), key.end(), key.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        it = index_.find(key);
    }
    if (it == index_.end()) throw VocabError("unknown label '" + std::string(name) + "'");
    return it->second;
}

void Vocabulary::validate(const ManipulationSequence& seq) const {
    if (seq.size() > kMaxSequenceLength) {
        throw LengthError("sequence length " + std::to_string(seq.size()) + " exceeds " +
                          std::to_string(kMaxSequenceLength));
    }
    std::set<TokenId> seen;
    for (TokenId op : seq) {
        if (!is_label(op)) throw VocabError("token id " + std::to_string(op) + " is not a label");
        if (!seen.insert(op).second) throw VocabError("duplicate label '" + name(op) + "'");
    }
}

ManipulationSequence Vocabulary::parse(const std::vector<std::string>& names) const {
    ManipulationSequence seq;
    for (const auto& n : names) seq.ops.push_back(id(n));
    validate(seq);
    return seq;
}

std::vector<std::string> Vocabulary::names(const ManipulationSequence& seq) const {
    std::vector<std::string> out;
    out.reserve(seq.size());
    for (TokenId op : seq) out.push_back(name(op));
    return out;
}

std::string Vocabulary::display(const ManipulationSequence& seq) const {
    if (seq.empty()) return "original";
    std::string out;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        std::string n = name(seq[i]);
        n[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(n[0])));
        if (i) out += '-';
        out += n;
    }
    return out;
}

ManipulationSequence Vocabulary::parse_display(std::string_view text) const {
    if (text.empty() || text == "original") return {};
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        auto dash = text.find('-', start);
        parts.emplace_back(text.substr(start, dash - start));
        if (dash == std::string_view::npos) break;
        start = dash + 1;
    }
    return parse(parts);
}

std::vector<TokenId> tokenize_decoder(const Vocabulary& vocab, const ManipulationSequence& seq) {
    vocab.validate(seq);
    std::vector<TokenId> out;
    out.reserve(seq.size() + 2);
    out.push_back(vocab.sos());
    out.insert(out.end(), seq.begin(), seq.end());
    out.push_back(vocab.eos());
    return out;
}

std::vector<TokenId> tokenize_prefixed(const Vocabulary& vocab, const ManipulationSequence& seq,
                                       TokenId prefix) {
    if (prefix != vocab.cls() && prefix != vocab.enc()) {
        throw VocabError("prefix token must be [CLS] or [ENC]");
    }
    vocab.validate(seq);
    std::vector<TokenId> out;
    out.reserve(seq.size() + 1);
    out.push_back(prefix);
    out.insert(out.end(), seq.begin(), seq.end());
    return out;
}

std::vector<TokenId> pad_fixed(const Vocabulary& vocab, const ManipulationSequence& seq,
                               std::size_t length) {
    if (seq.size() > length) {
        throw LengthError("sequence length " + std::to_string(seq.size()) +
                          " exceeds padded length " + std::to_string(length));
    }
    for (TokenId op : seq) {
        if (!vocab.is_label(op)) throw VocabError("token id " + std::to_string(op) + " is not a label");
    }
    std::vector<TokenId> out(seq.begin(), seq.end());
    out.resize(length, vocab.nm());
    return out;
}

ManipulationSequence strip_padding(const Vocabulary& vocab, const std::vector<TokenId>& padded) {
    std::size_t n = padded.size();
    while (n > 0 && padded[n - 1] == vocab.nm()) --n;
    return ManipulationSequence(std::vector<TokenId>(padded.begin(), padded.begin() + static_cast<std::ptrdiff_t>(n)));
}

}  // namespace seqfake
