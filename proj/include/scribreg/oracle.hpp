#pragma once

// Reference implementations for verification. Nothing here calls into the
// grid, kernels, seg_loss or feat_loss modules; only the Field/LabelMask
// containers are shared.

#include "scribreg/field.hpp"

#include <functional>
#include <random>
#include <set>
#include <utility>
#include <vector>

namespace scribreg::oracle {

// Quadratic scan of all (i, j) with i != j, |dx| <= r and |dy| <= r.
std::set<std::pair<int, int>> brute_pairs(GridShape shape, int r);

struct OracleConfig {
    int r = 1;
    double sigma1 = 6.0;
    double sigma2 = 0.5;
    double sigma3 = 50.0;
    bool color_in_kernel = true;
    bool feature_in_kernel = true;
    int background_class = 0;
};

struct BruteLosses {
    double pce = 0.0;
    double dfr = 0.0;
    double fd = 0.0;
    double fr = 0.0;
};

inline constexpr int kMaxOracleSide = 8;

// Direct nested-loop evaluation of the four losses. `supervision` is the
// feature-head label map. Throws UsageError for grids larger than 8×8.
BruteLosses brute_losses(const Field& probs, const Field& feat, const Field& image, const LabelMask& scribbles,
                         const LabelMask& supervision, const OracleConfig& config);

struct FdReport {
    double max_error = 0.0;  // max_k |analytic_k - numeric_k| / max(1, |numeric_k|)
    std::size_t worst = 0;
};

using ScalarFunction = std::function<double(const std::vector<double>&)>;

// Central differences with step h. Throws NumericalError naming the coordinate
// if a probe is non-finite.
std::vector<double> numeric_gradient(const ScalarFunction& f, std::vector<double> x, double h = 1e-5);
FdReport fd_check(const ScalarFunction& f, const std::vector<double>& x, const std::vector<double>& analytic,
                  double h = 1e-5);

// Random verification instance.
struct Instance {
    Field logits;
    Field probs;
    Field feat;
    Field image;
    LabelMask scribbles;   // at least one labelled pixel
    LabelMask supervision; // feature-head labels, mixed classes and ignores
};

// Features are resampled until every in-window pair differs by at least
// `min_gap` in every coordinate, keeping finite differences off L1 kinks.
Instance random_instance(std::mt19937_64& rng, GridShape shape, int classes, int feat_dim, int r,
                         double min_gap = 1e-4);

}  // namespace scribreg::oracle
