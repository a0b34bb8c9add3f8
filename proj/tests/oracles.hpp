#pragma once

// Independent reimplementations used to cross-check the library.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace seqfake::testing {

// Positionwise accuracy on strings, padding with "NM".
inline std::vector<std::string> padded(std::vector<std::string> s, std::size_t n) {
    while (s.size() < n) s.emplace_back("NM");
    return s;
}

struct MetricOracle {
    long matches = 0;
    long positions = 0;
    double value() const { return positions == 0 ? 0.0 : static_cast<double>(matches) / positions; }
};

inline MetricOracle brute_fixed(const std::vector<std::vector<std::string>>& preds,
                                const std::vector<std::vector<std::string>>& annots) {
    MetricOracle r;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const auto p = padded(preds[i], 5), a = padded(annots[i], 5);
        for (int k = 0; k < 5; ++k) r.matches += p[k] == a[k];
        r.positions += 5;
    }
    return r;
}

inline MetricOracle brute_adaptive(const std::vector<std::vector<std::string>>& preds,
                                   const std::vector<std::vector<std::string>>& annots) {
    MetricOracle r;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const std::size_t L = std::max<std::size_t>({preds[i].size(), annots[i].size(), 1});
        const auto p = padded(preds[i], L), a = padded(annots[i], L);
        for (std::size_t k = 0; k < L; ++k) r.matches += p[k] == a[k];
        r.positions += static_cast<long>(L);
    }
    return r;
}

// Random distinct-label sequence of length 0..5 drawn from `labels`.
inline std::vector<std::string> random_names(std::mt19937_64& rng, std::vector<std::string> labels) {
    std::shuffle(labels.begin(), labels.end(), rng);
    labels.resize(std::uniform_int_distribution<std::size_t>(0, std::min<std::size_t>(5, labels.size()))(rng));
    return labels;
}

// Softmax over a column, computed in long double.
inline std::vector<double> softmax(const std::vector<double>& s) {
    long double mx = *std::max_element(s.begin(), s.end()), z = 0;
    for (double v : s) z += std::exp(static_cast<long double>(v) - mx);
    std::vector<double> out;
    for (double v : s) out.push_back(static_cast<double>(std::exp(static_cast<long double>(v) - mx) / z));
    return out;
}

}  // namespace seqfake::testing
