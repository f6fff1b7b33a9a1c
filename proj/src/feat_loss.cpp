#include "scribreg/feat_loss.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace scribreg {

namespace {

double l1_distance(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k)
        s += std::abs(a[k] - b[k]);
    return s;
}

double sign(double x)
{
    return static_cast<double>((x > 0.0) - (x < 0.0));
}

// Adds coeff * d||F_i - F_j||_1 / dF to both endpoints.
void add_l1_grad(Field& grad, const FeatMap& feat, int i, int j, double coeff)
{
    const auto fi = feat.pixel(i);
    const auto fj = feat.pixel(j);
    auto gi = grad.pixel(i);
    auto gj = grad.pixel(j);
    for (std::size_t k = 0; k < fi.size(); ++k) {
        const double s = coeff * sign(fi[k] - fj[k]);
        gi[k] += s;
        gj[k] -= s;
    }
}

}  // namespace

double PseudoLabelMap::coverage() const
{
    if (labels.labels.empty())
        return 0.0;
    return static_cast<double>(labels.labeled_count()) / static_cast<double>(labels.labels.size());
}

PseudoLabelMap select_pseudo_labels(const ProbMap& probs, double gamma)
{
    const int c = probs.channels();
    if (!(gamma > 1.0 / c) || !(gamma < 1.0))
        throw UsageError("pseudo-label threshold must lie in (1/C, 1)");
    PseudoLabelMap out{LabelMask(probs.shape()), gamma};
    for (std::size_t p = 0; p < probs.pixels(); ++p) {
        const auto pr = probs.pixel(p);
        const auto best = std::max_element(pr.begin(), pr.end());
        if (*best > gamma)
            out.labels[p] = static_cast<std::uint8_t>(best - pr.begin());
    }
    return out;
}

std::uint8_t PairRelation::relation(int i, int j) const
{
    const auto& shape = supervision.shape;
    if (i == j || std::abs(shape.row(i) - shape.row(j)) > radius || std::abs(shape.col(i) - shape.col(j)) > radius)
        return kIgnore;
    const auto a = supervision[i];
    const auto b = supervision[j];
    if (a == kIgnore || b == kIgnore)
        return kIgnore;
    return a == b ? kSame : kDifferent;
}

PairRelation build_relations(const LabelMask& supervision, const PairWindow& window, int background_class)
{
    require_same_shape(supervision.shape, window.shape(), "build_relations");
    if (background_class < 0 || background_class >= kIgnore)
        throw UsageError("background class out of range");
    PairRelation rel;
    rel.supervision = supervision;
    rel.radius = window.radius();
    rel.background_class = background_class;
    for (const auto& pair : window.half_pairs()) {
        const auto a = supervision[pair.i];
        const auto b = supervision[pair.j];
        if (a == kIgnore || b == kIgnore)
            continue;
        if (a != b)
            rel.negative.push_back(pair);
        else if (a == background_class)
            rel.background_positive.push_back(pair);
        else
            rel.foreground_positive.push_back(pair);
    }
    return rel;
}

double feature_distance(int i, int j, const FeatMap& feat)
{
    return std::exp(-l1_distance(feat.pixel(i), feat.pixel(j)) / feat.channels());
}

LossResult feature_distance_loss(const FeatMap& feat, const PairRelation& relations)
{
    require_same_shape(feat.shape(), relations.supervision.shape, "feature_distance_loss");
    const double d = feat.channels();
    LossResult out{0.0, Field(feat.shape(), feat.channels())};

    // D is clamped away from the singular end of each log; clamped pairs carry no
    // gradient. Positives only need the lower bound, so identical features cost exactly 0.
    const auto positive_term = [&](const std::vector<PixelPair>& set) {
        if (set.empty())
            return;
        const double w = 1.0 / static_cast<double>(set.size());
        double sum = 0.0;
        for (const auto& [i, j] : set) {
            const double raw = std::exp(-l1_distance(feat.pixel(i), feat.pixel(j)) / d);
            const double dist = std::max(raw, kLogEps);
            sum -= std::log(dist);
            if (raw == dist)
                add_l1_grad(out.grad, feat, i, j, w / d);
        }
        out.value += w * sum;
    };
    positive_term(relations.background_positive);
    positive_term(relations.foreground_positive);

    if (!relations.negative.empty()) {
        const double w = 2.0 / static_cast<double>(relations.negative.size());
        double sum = 0.0;
        for (const auto& [i, j] : relations.negative) {
            const double raw = std::exp(-l1_distance(feat.pixel(i), feat.pixel(j)) / d);
            const double dist = std::clamp(raw, kLogEps, 1.0 - kLogEps);
            sum -= std::log(1.0 - dist);
            if (raw == dist)
                add_l1_grad(out.grad, feat, i, j, -w * dist / (d * (1.0 - dist)));
        }
        out.value += w * sum;
    }
    return out;
}

LossResult feature_reg_loss(const FeatMap& feat, const GridImage& image, const PairRelation& relations,
                            const KernelParams& params)
{
    require_same_shape(feat.shape(), relations.supervision.shape, "feature_reg_loss");
    require_same_shape(image.shape(), relations.supervision.shape, "feature_reg_loss");
    const double d = feat.channels();
    const double scale = 2.0 / static_cast<double>(feat.pixels());
    LossResult out{0.0, Field(feat.shape(), feat.channels())};
    double sum = 0.0;
    for (const auto* set : {&relations.background_positive, &relations.foreground_positive, &relations.negative}) {
        for (const auto& [i, j] : *set) {
            const double k = kernel_shallow(i, j, image, params);
            sum += k * l1_distance(feat.pixel(i), feat.pixel(j)) / d;
            add_l1_grad(out.grad, feat, i, j, scale * k / d);
        }
    }
    out.value = scale * sum;
    return out;
}

}  // namespace scribreg
