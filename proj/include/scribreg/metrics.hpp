#pragma once

#include "scribreg/field.hpp"

#include <cstdint>
#include <vector>

namespace scribreg {

struct IouReport {
    std::vector<double> per_class;  // NaN for classes absent from both prediction and truth
    double miou = 0.0;
};

class ConfusionMatrix {
public:
    explicit ConfusionMatrix(int classes);

    // Pixels whose truth is kIgnore are skipped.
    void add(const LabelMask& prediction, const LabelMask& truth);

    std::uint64_t at(int truth, int predicted) const { return counts_[truth * classes_ + predicted]; }
    int classes() const { return classes_; }

    // IoU_c = TP / (TP + FP + FN); mIoU averages classes with a non-empty union.
    IouReport report() const;

private:
    int classes_;
    std::vector<std::uint64_t> counts_;
};

// Per-pixel argmax, ties to the lowest index.
LabelMask argmax_labels(const Field& probs);

}  // namespace scribreg
