#include "seqfake/train/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "seqfake/error.hpp"
#include "seqfake/image.hpp"

namespace seqfake::train {
namespace {

void check_sizes(const std::vector<ManipulationSequence>& preds,
                 const std::vector<ManipulationSequence>& annots) {
    if (preds.size() != annots.size()) {
        throw DataError("prediction count " + std::to_string(preds.size()) +
                        " != annotation count " + std::to_string(annots.size()));
    }
}

TokenId at_or_nm(const Vocabulary& vocab, const ManipulationSequence& s, std::size_t i) {
    return i < s.size() ? s[i] : vocab.nm();
}

struct Counts {
    std::size_t matches = 0;
    std::size_t positions = 0;
};

Counts fixed_counts(const Vocabulary& vocab, const ManipulationSequence& pred,
                    const ManipulationSequence& annot, std::size_t length) {
    if (pred.size() > length || annot.size() > length) {
        throw LengthError("sequence longer than fixed length " + std::to_string(length));
    }
    Counts c{0, length};
    for (std::size_t i = 0; i < length; ++i) {
        c.matches += at_or_nm(vocab, pred, i) == at_or_nm(vocab, annot, i);
    }
    return c;
}

Counts adaptive_counts(const Vocabulary& vocab, const ManipulationSequence& pred,
                       const ManipulationSequence& annot) {
    const std::size_t length = std::max<std::size_t>({pred.size(), annot.size(), 1});
    Counts c{0, length};
    for (std::size_t i = 0; i < length; ++i) {
        c.matches += at_or_nm(vocab, pred, i) == at_or_nm(vocab, annot, i);
    }
    return c;
}

double ratio(const Counts& c) {
    return c.positions == 0 ? 0.0 : static_cast<double>(c.matches) / static_cast<double>(c.positions);
}

}  // namespace

double fixed_acc(const Vocabulary& vocab, const std::vector<ManipulationSequence>& preds,
                 const std::vector<ManipulationSequence>& annots, std::size_t fixed_length) {
    check_sizes(preds, annots);
    Counts total;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        auto c = fixed_counts(vocab, preds[i], annots[i], fixed_length);
        total.matches += c.matches;
        total.positions += c.positions;
    }
    return ratio(total);
}

double adaptive_acc(const Vocabulary& vocab, const std::vector<ManipulationSequence>& preds,
                    const std::vector<ManipulationSequence>& annots) {
    check_sizes(preds, annots);
    Counts total;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        auto c = adaptive_counts(vocab, preds[i], annots[i]);
        total.matches += c.matches;
        total.positions += c.positions;
    }
    return ratio(total);
}

double adaptive_acc_macro(const Vocabulary& vocab, const std::vector<ManipulationSequence>& preds,
                          const std::vector<ManipulationSequence>& annots) {
    check_sizes(preds, annots);
    if (preds.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) sum += ratio(adaptive_counts(vocab, preds[i], annots[i]));
    return sum / static_cast<double>(preds.size());
}

MetricReport per_sequence_report(const Vocabulary& vocab,
                                 const std::vector<ManipulationSequence>& preds,
                                 const std::vector<ManipulationSequence>& annots) {
    check_sizes(preds, annots);
    MetricReport report;
    report.samples = preds.size();
    report.fixed_acc = fixed_acc(vocab, preds, annots);
    report.adaptive_acc = adaptive_acc(vocab, preds, annots);
    report.adaptive_acc_macro = adaptive_acc_macro(vocab, preds, annots);

    struct Group {
        Counts fixed, adaptive;
        std::size_t count = 0, exact = 0;
    };
    auto by_length_then_ids = [](const ManipulationSequence& a, const ManipulationSequence& b) {
        if (a.size() != b.size()) return a.size() < b.size();
        return a.ops < b.ops;
    };
    std::map<ManipulationSequence, Group, decltype(by_length_then_ids)> groups(by_length_then_ids);
    std::size_t exact_total = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        auto& g = groups[annots[i]];
        auto f = fixed_counts(vocab, preds[i], annots[i], kMaxSequenceLength);
        auto a = adaptive_counts(vocab, preds[i], annots[i]);
        g.fixed.matches += f.matches;
        g.fixed.positions += f.positions;
        g.adaptive.matches += a.matches;
        g.adaptive.positions += a.positions;
        ++g.count;
        const bool exact = preds[i] == annots[i];
        g.exact += exact;
        exact_total += exact;
    }
    report.exact_match = preds.empty() ? 0.0 : static_cast<double>(exact_total) / static_cast<double>(preds.size());
    for (const auto& [annot, g] : groups) {
        report.per_type.push_back({annot, g.count, ratio(g.fixed), ratio(g.adaptive),
                                   static_cast<double>(g.exact) / static_cast<double>(g.count)});
    }
    return report;
}

void write_report_csv(const Vocabulary& vocab, const MetricReport& report,
                      const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "sequence,length,count,fixed_acc,adaptive_acc,exact_match\n";
    for (const auto& row : report.per_type) {
        out << vocab.display(row.annotation) << ',' << row.annotation.size() << ',' << row.count << ','
            << row.fixed_acc << ',' << row.adaptive_acc << ',' << row.exact_match << '\n';
    }
}

void write_report_chart(const MetricReport& report, const std::filesystem::path& path) {
    constexpr int kBar = 6, kGap = 2, kWidth = 400, kMargin = 4;
    const int rows = std::max<int>(1, static_cast<int>(report.per_type.size()));
    const int height = 2 * kMargin + rows * (kBar + kGap);
    Image chart(kWidth, height, 1.0f);
    const int span = kWidth - 2 * kMargin;
    // Reference lines at 50% and 100%.
    for (int y = 0; y < height; ++y) {
        for (int x : {kMargin + span / 2, kMargin + span - 1}) {
            for (int c = 0; c < 3; ++c) chart.at(c, y, x) = 0.7f;
        }
    }
    for (int r = 0; r < static_cast<int>(report.per_type.size()); ++r) {
        const auto& row = report.per_type[static_cast<std::size_t>(r)];
        const int len = static_cast<int>(row.adaptive_acc * span + 0.5);
        const int y0 = kMargin + r * (kBar + kGap);
        const float shade = 0.25f + 0.1f * static_cast<float>(row.annotation.size());
        for (int y = y0; y < y0 + kBar; ++y) {
            for (int x = kMargin; x < kMargin + len; ++x) {
                chart.at(0, y, x) = 0.15f;
                chart.at(1, y, x) = shade;
                chart.at(2, y, x) = 0.75f;
            }
        }
    }
    write_png(chart, path);
}

}  // namespace seqfake::train
