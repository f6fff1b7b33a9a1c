#pragma once

#include "scribreg/field.hpp"
#include "scribreg/grid.hpp"
#include "scribreg/kernels.hpp"
#include "scribreg/seg_loss.hpp"

#include <cstdint>
#include <vector>

namespace scribreg {

// Confident predictions taken as labels for the feature head; kIgnore elsewhere.
struct PseudoLabelMap {
    LabelMask labels;
    double gamma = 0.98;

    double coverage() const;
};

// A pixel is labelled argmax_c P^c iff max_c P^c > gamma (strict). Ties go to
// the lowest class index. Requires 1/C < gamma < 1.
PseudoLabelMap select_pseudo_labels(const ProbMap& probs, double gamma);

// Pairwise same/different-class relations over the labelled in-window pairs.
//
// The three sets hold one representative (i < j) per unordered pair; the
// ordered sets are their symmetric closures, so per-set means agree.
struct PairRelation {
    static constexpr std::uint8_t kSame = 1;
    static constexpr std::uint8_t kDifferent = 0;

    LabelMask supervision;
    int radius = 1;
    int background_class = 0;
    std::vector<PixelPair> background_positive;
    std::vector<PixelPair> foreground_positive;
    std::vector<PixelPair> negative;

    // kSame, kDifferent or kIgnore for the ordered pair (i, j).
    std::uint8_t relation(int i, int j) const;
    // Number of ordered pairs with a relation (|R_A|).
    std::size_t effective_pairs() const
    {
        return 2 * (background_positive.size() + foreground_positive.size() + negative.size());
    }
};

PairRelation build_relations(const LabelMask& supervision, const PairWindow& window, int background_class = 0);
inline PairRelation build_relations(const PseudoLabelMap& pseudo, const PairWindow& window, int background_class = 0)
{
    return build_relations(pseudo.labels, window, background_class);
}

// exp(-||F_i - F_j||_1 / d).
double feature_distance(int i, int j, const FeatMap& feat);

// Balanced log-likelihood of the relations under feature_distance: background
// positives, foreground positives and negatives are each averaged separately,
// negatives weighted by 2. Empty sets contribute nothing. Gradient is w.r.t. `feat`.
LossResult feature_distance_loss(const FeatMap& feat, const PairRelation& relations);

// (1/hw) * sum over ordered related pairs of K_f(i,j) * ||F_i - F_j||_1 / d.
// The L1 subgradient is 0 at exact ties.
LossResult feature_reg_loss(const FeatMap& feat, const GridImage& image, const PairRelation& relations,
                            const KernelParams& params);

}  // namespace scribreg
