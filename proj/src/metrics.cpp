#include "scribreg/metrics.hpp"

#include <algorithm>
#include <limits>

namespace scribreg {

ConfusionMatrix::ConfusionMatrix(int classes)
    : classes_(classes), counts_(static_cast<std::size_t>(classes) * static_cast<std::size_t>(classes), 0)
{
    if (classes < 1)
        throw UsageError("confusion matrix needs at least one class");
}

void ConfusionMatrix::add(const LabelMask& prediction, const LabelMask& truth)
{
    require_same_shape(prediction.shape, truth.shape, "ConfusionMatrix::add");
    for (std::size_t p = 0; p < truth.labels.size(); ++p) {
        const auto t = truth[p];
        const auto y = prediction[p];
        if (t == kIgnore)
            continue;
        if (t >= classes_ || y >= classes_)
            throw UsageError("label outside confusion matrix range");
        ++counts_[t * classes_ + y];
    }
}

IouReport ConfusionMatrix::report() const
{
    IouReport out;
    out.per_class.assign(classes_, std::numeric_limits<double>::quiet_NaN());
    double sum = 0.0;
    int present = 0;
    for (int c = 0; c < classes_; ++c) {
        std::uint64_t row = 0;
        std::uint64_t col = 0;
        for (int k = 0; k < classes_; ++k) {
            row += at(c, k);
            col += at(k, c);
        }
        const std::uint64_t tp = at(c, c);
        const std::uint64_t uni = row + col - tp;
        if (uni == 0)
            continue;
        out.per_class[c] = static_cast<double>(tp) / static_cast<double>(uni);
        sum += out.per_class[c];
        ++present;
    }
    out.miou = present == 0 ? 0.0 : sum / present;
    return out;
}

LabelMask argmax_labels(const Field& probs)
{
    LabelMask out(probs.shape(), 0);
    for (std::size_t p = 0; p < probs.pixels(); ++p) {
        const auto pr = probs.pixel(p);
        out[p] = static_cast<std::uint8_t>(std::max_element(pr.begin(), pr.end()) - pr.begin());
    }
    return out;
}

}  // namespace scribreg
