#pragma once

#include "scribreg/field.hpp"
#include "scribreg/grid.hpp"
#include "scribreg/kernels.hpp"

namespace scribreg {

// Scalar loss with its gradient, shaped like the differentiated input.
struct LossResult {
    double value = 0.0;
    Field grad;
};

// Clamp applied to probabilities inside logarithms.
inline constexpr double kLogEps = 1e-8;

ProbMap softmax(const Logits& logits);

// Pulls a gradient on probabilities back through the softmax to the logits.
Field softmax_backward(const ProbMap& probs, const Field& grad_probs);

// Cross-entropy averaged over annotated pixels. Gradient is w.r.t. the logits
// that produced `probs`. Throws UsageError when no pixel is annotated.
LossResult partial_ce(const ProbMap& probs, const LabelMask& scribbles);

// k * (1 - <P(i), P(j)>): the expected disagreement of two pixels weighted by their affinity.
double pair_phi(int i, int j, const ProbMap& probs, double k);

// Dynamic feature regularised loss: (1/hw) * sum over ordered in-window pairs of
// pair_phi with the Gaussian affinity of `channels`. `feat` only shapes the
// affinity; the returned gradient is w.r.t. logits and no gradient exists for `feat`.
LossResult dfr_loss(const ProbMap& probs, const GridImage& image, const FeatMap& feat, const PairWindow& window,
                    const KernelParams& params, KernelChannels channels = {});

}  // namespace scribreg
