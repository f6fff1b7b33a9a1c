#include "scribreg/seg_loss.hpp"

#include <algorithm>
#include <cmath>

namespace scribreg {

ProbMap softmax(const Logits& logits)
{
    ProbMap probs(logits.shape(), logits.channels());
    const int c = logits.channels();
    for (std::size_t p = 0; p < logits.pixels(); ++p) {
        const auto z = logits.pixel(p);
        auto out = probs.pixel(p);
        const double zmax = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (int k = 0; k < c; ++k) {
            out[k] = std::exp(z[k] - zmax);
            sum += out[k];
        }
        for (int k = 0; k < c; ++k)
            out[k] /= sum;
    }
    return probs;
}

Field softmax_backward(const ProbMap& probs, const Field& grad_probs)
{
    if (!probs.same_layout(grad_probs))
        throw UsageError("softmax_backward: layout mismatch");
    Field grad(probs.shape(), probs.channels());
    const int c = probs.channels();
    for (std::size_t p = 0; p < probs.pixels(); ++p) {
        const auto pr = probs.pixel(p);
        const auto g = grad_probs.pixel(p);
        double dot = 0.0;
        for (int k = 0; k < c; ++k)
            dot += pr[k] * g[k];
        auto out = grad.pixel(p);
        for (int k = 0; k < c; ++k)
            out[k] = pr[k] * (g[k] - dot);
    }
    return grad;
}

LossResult partial_ce(const ProbMap& probs, const LabelMask& scribbles)
{
    require_same_shape(probs.shape(), scribbles.shape, "partial_ce");
    scribbles.check_classes(probs.channels());
    const std::size_t annotated = scribbles.labeled_count();
    if (annotated == 0)
        throw UsageError("partial_ce: no annotated pixels");

    const double inv_n = 1.0 / static_cast<double>(annotated);
    LossResult out{0.0, Field(probs.shape(), probs.channels())};
    for (std::size_t p = 0; p < probs.pixels(); ++p) {
        const auto t = scribbles[p];
        if (t == kIgnore)
            continue;
        const auto pr = probs.pixel(p);
        out.value -= std::log(std::max(pr[t], kLogEps));
        auto g = out.grad.pixel(p);
        for (int k = 0; k < probs.channels(); ++k)
            g[k] = (pr[k] - (k == t ? 1.0 : 0.0)) * inv_n;
    }
    out.value *= inv_n;
    return out;
}

double pair_phi(int i, int j, const ProbMap& probs, double k)
{
    const auto a = probs.pixel(i);
    const auto b = probs.pixel(j);
    double dot = 0.0;
    for (std::size_t c = 0; c < a.size(); ++c)
        dot += a[c] * b[c];
    return k * (1.0 - dot);
}

LossResult dfr_loss(const ProbMap& probs, const GridImage& image, const FeatMap& feat, const PairWindow& window,
                    const KernelParams& params, KernelChannels channels)
{
    require_same_shape(probs.shape(), window.shape(), "dfr_loss");
    require_same_shape(image.shape(), window.shape(), "dfr_loss");
    require_same_shape(feat.shape(), window.shape(), "dfr_loss");

    const int c = probs.channels();
    Field grad_probs(probs.shape(), c);
    double sum = 0.0;
    for (const auto& [i, j] : window.half_pairs()) {
        const double k = affinity(i, j, image, &feat, params, channels);
        const auto pi = probs.pixel(i);
        const auto pj = probs.pixel(j);
        double dot = 0.0;
        for (int q = 0; q < c; ++q)
            dot += pi[q] * pj[q];
        sum += k * (1.0 - dot);
        auto gi = grad_probs.pixel(i);
        auto gj = grad_probs.pixel(j);
        for (int q = 0; q < c; ++q) {
            gi[q] -= k * pj[q];
            gj[q] -= k * pi[q];
        }
    }
    // Each half pair stands for (i, j) and (j, i).
    const double scale = 2.0 / static_cast<double>(probs.pixels());
    for (auto& g : grad_probs.values())
        g *= scale;
    return {sum * scale, softmax_backward(probs, grad_probs)};
}

}  // namespace scribreg
