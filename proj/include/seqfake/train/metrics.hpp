#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "seqfake/vocab.hpp"

namespace seqfake::train {

// Predictions may contain NM in interior positions (the multi-head baseline
// emits one class per slot); annotations are plain manipulation sequences.
// Both metrics micro-average positionwise equality over all samples.

// Pads both sides with NM to `fixed_length`; throws LengthError when a
// sequence is longer than that.
double fixed_acc(const Vocabulary& vocab, const std::vector<ManipulationSequence>& preds,
                 const std::vector<ManipulationSequence>& annots,
                 std::size_t fixed_length = kMaxSequenceLength);

// Per sample, pads both sides with NM to max(len(pred), len(annot), 1).
double adaptive_acc(const Vocabulary& vocab, const std::vector<ManipulationSequence>& preds,
                    const std::vector<ManipulationSequence>& annots);

// Mean over samples of each sample's own adaptive accuracy.
double adaptive_acc_macro(const Vocabulary& vocab, const std::vector<ManipulationSequence>& preds,
                          const std::vector<ManipulationSequence>& annots);

struct SequenceTypeRow {
    ManipulationSequence annotation;
    std::size_t count = 0;
    double fixed_acc = 0.0;
    double adaptive_acc = 0.0;
    double exact_match = 0.0;
};

struct MetricReport {
    double fixed_acc = 0.0;
    double adaptive_acc = 0.0;
    double adaptive_acc_macro = 0.0;
    double exact_match = 0.0;
    std::size_t samples = 0;
    std::vector<SequenceTypeRow> per_type;  // sorted by annotation length, then ids
};

MetricReport per_sequence_report(const Vocabulary& vocab,
                                 const std::vector<ManipulationSequence>& preds,
                                 const std::vector<ManipulationSequence>& annots);

void write_report_csv(const Vocabulary& vocab, const MetricReport& report,
                      const std::filesystem::path& path);

// Horizontal bar chart of per-type adaptive accuracy, one bar per row.
void write_report_chart(const MetricReport& report, const std::filesystem::path& path);

}  // namespace seqfake::train
