#include "scribreg/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

namespace scribreg::oracle {

namespace {

bool in_window(const GridShape& s, int i, int j, int r)
{
    const int iy = i / s.w, ix = i % s.w;
    const int jy = j / s.w, jx = j % s.w;
    return std::abs(ix - jx) <= r && std::abs(iy - jy) <= r;
}

}  // namespace

std::set<std::pair<int, int>> brute_pairs(GridShape shape, int r)
{
    std::set<std::pair<int, int>> out;
    const int n = static_cast<int>(shape.pixels());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j && in_window(shape, i, j, r))
                out.insert({i, j});
    return out;
}

BruteLosses brute_losses(const Field& probs, const Field& feat, const Field& image, const LabelMask& scribbles,
                         const LabelMask& supervision, const OracleConfig& cfg)
{
    const GridShape s = probs.shape();
    if (s.h > kMaxOracleSide || s.w > kMaxOracleSide)
        throw UsageError("brute_losses: grid exceeds the 8x8 oracle size guard");
    const int n = static_cast<int>(s.pixels());
    const int classes = probs.channels();
    const int d = feat.channels();
    BruteLosses out;

    // Partial cross-entropy.
    double ce = 0.0;
    int annotated = 0;
    for (int i = 0; i < n; ++i) {
        if (scribbles.labels[i] == 255)
            continue;
        ++annotated;
        ce += -std::log(std::max(probs.values()[i * classes + scribbles.labels[i]], 1e-8));
    }
    out.pce = annotated > 0 ? ce / annotated : 0.0;

    const auto kernel = [&](int i, int j, bool with_color, bool with_feature) {
        const double dy = i / s.w - j / s.w;
        const double dx = i % s.w - j % s.w;
        double e = -(dx * dx + dy * dy) / (2 * cfg.sigma1 * cfg.sigma1);
        if (with_color) {
            double c2 = 0.0;
            for (int k = 0; k < 3; ++k)
                c2 += std::pow(image.values()[i * 3 + k] - image.values()[j * 3 + k], 2);
            e -= c2 / (2 * cfg.sigma2 * cfg.sigma2);
        }
        if (with_feature) {
            double f2 = 0.0;
            for (int k = 0; k < d; ++k)
                f2 += std::pow(feat.values()[i * d + k] - feat.values()[j * d + k], 2);
            e -= f2 / (2 * cfg.sigma3 * cfg.sigma3);
        }
        return std::exp(e);
    };
    const auto l1 = [&](int i, int j) {
        double a = 0.0;
        for (int k = 0; k < d; ++k)
            a += std::fabs(feat.values()[i * d + k] - feat.values()[j * d + k]);
        return a;
    };

    // DFR: phi written as the double sum over distinct class pairs.
    double dfr = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j || !in_window(s, i, j, cfg.r))
                continue;
            const double k = kernel(i, j, cfg.color_in_kernel, cfg.feature_in_kernel);
            double phi = 0.0;
            for (int c = 0; c < classes; ++c)
                for (int c2 = 0; c2 < classes; ++c2)
                    if (c != c2)
                        phi += k * probs.values()[i * classes + c] * probs.values()[j * classes + c2];
            dfr += phi;
        }
    }
    out.dfr = dfr / n;

    // Feature distance and feature regularised losses over ordered related pairs.
    double bg_sum = 0.0, fg_sum = 0.0, neg_sum = 0.0, fr = 0.0;
    int bg_count = 0, fg_count = 0, neg_count = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const auto mi = supervision.labels[i];
            const auto mj = supervision.labels[j];
            if (i == j || !in_window(s, i, j, cfg.r) || mi == 255 || mj == 255)
                continue;
            const double dist = std::exp(-l1(i, j) / d);
            if (mi == mj) {
                const double term = -std::log(std::max(dist, 1e-8));
                if (mi == cfg.background_class) {
                    bg_sum += term;
                    ++bg_count;
                } else {
                    fg_sum += term;
                    ++fg_count;
                }
            } else {
                neg_sum += -std::log(1.0 - std::min(std::max(dist, 1e-8), 1.0 - 1e-8));
                ++neg_count;
            }
            fr += kernel(i, j, true, false) * l1(i, j) / d;
        }
    }
    out.fd = (bg_count ? bg_sum / bg_count : 0.0) + (fg_count ? fg_sum / fg_count : 0.0) +
             (neg_count ? 2.0 * neg_sum / neg_count : 0.0);
    out.fr = fr / n;
    return out;
}

std::vector<double> numeric_gradient(const ScalarFunction& f, std::vector<double> x, double h)
{
    std::vector<double> g(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double orig = x[k];
        x[k] = orig + h;
        const double up = f(x);
        x[k] = orig - h;
        const double down = f(x);
        x[k] = orig;
        if (!std::isfinite(up) || !std::isfinite(down))
            throw NumericalError("non-finite function value probing coordinate " + std::to_string(k));
        g[k] = (up - down) / (2 * h);
    }
    return g;
}

FdReport fd_check(const ScalarFunction& f, const std::vector<double>& x, const std::vector<double>& analytic, double h)
{
    if (analytic.size() != x.size())
        throw UsageError("fd_check: gradient and point sizes differ");
    const auto numeric = numeric_gradient(f, x, h);
    FdReport rep;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double err = std::fabs(analytic[k] - numeric[k]) / std::max(1.0, std::fabs(numeric[k]));
        if (!(err <= rep.max_error)) {
            rep.max_error = err;
            rep.worst = k;
        }
    }
    return rep;
}

Instance random_instance(std::mt19937_64& rng, GridShape shape, int classes, int feat_dim, int r, double min_gap)
{
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int n = static_cast<int>(shape.pixels());
    Instance inst{Field(shape, classes), Field(shape, classes), Field(shape, feat_dim), Field(shape, 3),
                  LabelMask(shape), LabelMask(shape)};

    for (auto& v : inst.logits.values())
        v = 4.0 * unit(rng) - 2.0;
    for (int i = 0; i < n; ++i) {
        double zmax = -1e300;
        for (int c = 0; c < classes; ++c)
            zmax = std::max(zmax, inst.logits.at(i, c));
        double sum = 0.0;
        for (int c = 0; c < classes; ++c)
            sum += (inst.probs.at(i, c) = std::exp(inst.logits.at(i, c) - zmax));
        for (int c = 0; c < classes; ++c)
            inst.probs.at(i, c) /= sum;
    }
    for (auto& v : inst.image.values())
        v = unit(rng);

    for (int attempt = 0;; ++attempt) {
        for (auto& v : inst.feat.values())
            v = 2.0 * unit(rng);
        bool ok = true;
        for (int i = 0; i < n && ok; ++i)
            for (int j = i + 1; j < n && ok; ++j)
                if (in_window(shape, i, j, r))
                    for (int k = 0; k < feat_dim && ok; ++k)
                        ok = std::fabs(inst.feat.at(i, k) - inst.feat.at(j, k)) >= min_gap;
        if (ok)
            break;
        if (attempt > 1000)
            throw NumericalError("random_instance: could not avoid L1 ties");
    }

    std::uniform_int_distribution<int> cls(0, classes - 1);
    for (int i = 0; i < n; ++i) {
        if (unit(rng) < 0.4)
            inst.scribbles[i] = static_cast<std::uint8_t>(cls(rng));
        if (unit(rng) < 0.75)
            inst.supervision[i] = static_cast<std::uint8_t>(cls(rng));
    }
    if (inst.scribbles.labeled_count() == 0)
        inst.scribbles[0] = static_cast<std::uint8_t>(cls(rng));
    return inst;
}

}  // namespace scribreg::oracle
