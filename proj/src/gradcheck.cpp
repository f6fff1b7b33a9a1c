#include "scribreg/gradcheck.hpp"

#include "scribreg/feat_loss.hpp"
#include "scribreg/grid.hpp"
#include "scribreg/oracle.hpp"
#include "scribreg/seg_loss.hpp"
#include "scribreg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

namespace scribreg {

namespace {

double rel_diff(double a, double b)
{
    return std::fabs(a - b) / std::max(1.0, std::fabs(b));
}

CheckResult make(std::string name, double measured, double tol, std::string detail = {})
{
    return {std::move(name), measured, tol, measured <= tol, std::move(detail)};
}

Field with_values(const Field& like, const std::vector<double>& v)
{
    Field f = like;
    f.values() = v;
    return f;
}

Scene scene_from(const oracle::Instance& inst)
{
    Scene s;
    s.id = "instance";
    s.image = inst.image;
    s.scribbles = inst.scribbles;
    s.dense = LabelMask(inst.image.shape(), 0);
    return s;
}

std::vector<double> flatten(const ParamSet& p)
{
    std::vector<double> out;
    p.for_each([&](const std::string&, const Matrix& m) {
        for (Eigen::Index k = 0; k < m.size(); ++k)
            out.push_back(m.data()[k]);
    });
    return out;
}

ParamSet unflatten(const ParamSet& like, const std::vector<double>& v)
{
    ParamSet p = like;
    std::size_t pos = 0;
    p.for_each([&](const std::string&, Matrix& m) {
        for (Eigen::Index k = 0; k < m.size(); ++k)
            m.data()[k] = v[pos++];
    });
    return p;
}

}  // namespace

std::vector<CheckResult> check_oracle_equivalence(std::uint64_t seed, int instances)
{
    std::vector<CheckResult> out;

    std::size_t mismatches = 0;
    for (int h = 1; h <= 6; ++h) {
        for (int w = 1; w <= 6; ++w) {
            for (int r = 1; r <= 3; ++r) {
                const GridShape shape(h, w);
                const auto pairs = enumerate_pairs(shape, r);
                const std::set<std::pair<int, int>> got = [&] {
                    std::set<std::pair<int, int>> s;
                    for (const auto& p : pairs)
                        s.insert({p.i, p.j});
                    return s;
                }();
                const PairWindow window(shape, r);
                std::set<std::pair<int, int>> from_half;
                for (const auto& p : window.half_pairs()) {
                    from_half.insert({p.i, p.j});
                    from_half.insert({p.j, p.i});
                }
                const auto want = oracle::brute_pairs(shape, r);
                if (got != want || pairs.size() != want.size() || from_half != want ||
                    window.ordered_count() != want.size())
                    ++mismatches;
            }
        }
    }
    out.push_back(make("pair enumeration vs quadratic oracle (mismatching grids)", static_cast<double>(mismatches), 0.0));

    std::mt19937_64 rng(seed);
    double worst = 0.0;
    std::string worst_detail;
    for (int t = 0; t < instances; ++t) {
        const GridShape shape(std::uniform_int_distribution<int>(2, 6)(rng), std::uniform_int_distribution<int>(2, 6)(rng));
        const int classes = std::uniform_int_distribution<int>(2, 4)(rng);
        const int d = std::uniform_int_distribution<int>(1, 8)(rng);
        const int r = std::uniform_int_distribution<int>(1, 3)(rng);
        const KernelParams kp{std::uniform_real_distribution<double>(1.0, 8.0)(rng),
                              std::uniform_real_distribution<double>(0.2, 1.0)(rng),
                              std::uniform_real_distribution<double>(0.5, 5.0)(rng)};
        const KernelChannels ch{(t % 4) != 1, (t % 4) != 2};
        const auto inst = oracle::random_instance(rng, shape, classes, d, r);

        const PairWindow window(shape, r);
        const auto relations = build_relations(inst.supervision, window, 0);
        const double pce = partial_ce(inst.probs, inst.scribbles).value;
        const double dfr = dfr_loss(inst.probs, inst.image, inst.feat, window, kp, ch).value;
        const double fd = feature_distance_loss(inst.feat, relations).value;
        const double fr = feature_reg_loss(inst.feat, inst.image, relations, kp).value;

        const oracle::OracleConfig cfg{r, kp.sigma1, kp.sigma2, kp.sigma3, ch.color, ch.feature, 0};
        const auto ref = oracle::brute_losses(inst.probs, inst.feat, inst.image, inst.scribbles, inst.supervision, cfg);
        const double e = std::max({rel_diff(pce, ref.pce), rel_diff(dfr, ref.dfr), rel_diff(fd, ref.fd), rel_diff(fr, ref.fr)});
        if (e > worst) {
            worst = e;
            std::ostringstream os;
            os << "instance " << t << " " << to_string(shape) << " C=" << classes << " d=" << d << " r=" << r;
            worst_detail = os.str();
        }
    }
    out.push_back(make("loss values vs brute-force oracle (" + std::to_string(instances) + " instances, max rel diff)",
                       worst, 1e-12, worst_detail));
    return out;
}

std::vector<CheckResult> check_gradients(std::uint64_t seed)
{
    std::vector<CheckResult> out;
    std::mt19937_64 rng(seed + 1);
    const GridShape shape(4, 4);
    const KernelParams kp{3.0, 0.5, 2.0};
    double pce_err = 0.0, dfr_err = 0.0, fd_err = 0.0, fr_err = 0.0;

    for (int t = 0; t < 5; ++t) {
        const int r = 1 + t % 2;
        const auto inst = oracle::random_instance(rng, shape, 3, 4, r);
        const PairWindow window(shape, r);
        const auto relations = build_relations(inst.supervision, window, 0);

        const auto pce = partial_ce(inst.probs, inst.scribbles);
        pce_err = std::max(pce_err, oracle::fd_check(
                                        [&](const std::vector<double>& z) {
                                            return partial_ce(softmax(with_values(inst.logits, z)), inst.scribbles).value;
                                        },
                                        inst.logits.values(), pce.grad.values())
                                        .max_error);

        const auto dfr = dfr_loss(inst.probs, inst.image, inst.feat, window, kp);
        dfr_err = std::max(dfr_err, oracle::fd_check(
                                        [&](const std::vector<double>& z) {
                                            return dfr_loss(softmax(with_values(inst.logits, z)), inst.image, inst.feat,
                                                            window, kp)
                                                .value;
                                        },
                                        inst.logits.values(), dfr.grad.values())
                                        .max_error);

        const auto fd = feature_distance_loss(inst.feat, relations);
        fd_err = std::max(fd_err, oracle::fd_check(
                                      [&](const std::vector<double>& f) {
                                          return feature_distance_loss(with_values(inst.feat, f), relations).value;
                                      },
                                      inst.feat.values(), fd.grad.values())
                                      .max_error);

        const auto fr = feature_reg_loss(inst.feat, inst.image, relations, kp);
        fr_err = std::max(fr_err, oracle::fd_check(
                                      [&](const std::vector<double>& f) {
                                          return feature_reg_loss(with_values(inst.feat, f), inst.image, relations, kp).value;
                                      },
                                      inst.feat.values(), fr.grad.values())
                                      .max_error);
    }
    out.push_back(make("partial_ce gradient w.r.t. logits vs finite differences", pce_err, 1e-5));
    out.push_back(make("dfr_loss gradient w.r.t. logits vs finite differences", dfr_err, 1e-5));
    out.push_back(make("feature_distance_loss gradient w.r.t. features vs finite differences", fd_err, 1e-5));
    out.push_back(make("feature_reg_loss gradient w.r.t. features vs finite differences", fr_err, 1e-5));

    // Full objective on a 6x6 scene, C=3, d=4, with every term active.
    const GridShape big(6, 6);
    const auto inst = oracle::random_instance(rng, big, 3, 4, 2);
    TrainConfig cfg;
    cfg.r = 2;
    cfg.lambda1 = 0.5;
    cfg.lambda2 = 0.5;
    cfg.sigma1 = 3.0;
    cfg.sigma3 = 2.0;
    cfg.hidden = 12;
    cfg.feat_dim = 4;
    cfg.supervision_source = SupervisionSource::GroundTruthScribbles;
    const Scene scene = scene_from(inst);
    const PairWindow window(big, cfg.r);
    const ModelConfig mc = cfg.model(3);
    const TwoHeadNet net(mc, 11);
    const auto analytic = scene_objective(net, scene, window, cfg);
    const auto x0 = flatten(net.params());
    // The affinity's features stay at their unperturbed values (stop-gradient).
    const FeatMap frozen = net.forward(scene.image).feat;
    const auto report = oracle::fd_check(
        [&](const std::vector<double>& x) {
            const TwoHeadNet probe(mc, unflatten(net.params(), x));
            return scene_objective(probe, scene, window, cfg, &frozen).losses.total;
        },
        x0, flatten(analytic.grads));
    out.push_back(make("end-to-end parameter gradient of the combined objective vs finite differences", report.max_error,
                       1e-4, "worst coordinate " + std::to_string(report.worst)));
    return out;
}

std::vector<CheckResult> check_stop_gradient(std::uint64_t seed)
{
    std::vector<CheckResult> out;
    std::mt19937_64 rng(seed + 2);
    const GridShape shape(6, 6);
    const auto inst = oracle::random_instance(rng, shape, 3, 4, 2);

    // Only the regulariser feeds the backward pass; its feature input is the
    // feature head output, which must receive nothing.
    TrainConfig cfg;
    cfg.r = 2;
    cfg.lambda1 = 1.0;
    cfg.lambda2 = 0.0;
    cfg.sigma3 = 1.0;
    cfg.hidden = 12;
    cfg.feat_dim = 4;
    cfg.enable_fd = false;
    cfg.enable_fr = false;
    const Scene scene = scene_from(inst);
    const PairWindow window(shape, cfg.r);
    const TwoHeadNet net(cfg.model(3), 5);
    const auto g = scene_objective(net, scene, window, cfg);
    const double leak = std::max(g.grads.feat_weight.cwiseAbs().maxCoeff(), g.grads.feat_bias.cwiseAbs().maxCoeff());
    out.push_back(make("feature-head gradient from dfr_loss (max |grad|)", leak, 0.0));

    // The probe is meaningful only if the features actually shape the loss value.
    const auto fwd = net.forward(scene.image);
    const KernelParams kp = cfg.kernel();
    const double base = dfr_loss(fwd.probs, scene.image, fwd.feat, window, kp).value;
    FeatMap moved = fwd.feat;
    for (auto& v : moved.values())
        v += 0.5 * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const double shifted = dfr_loss(fwd.probs, scene.image, moved, window, kp).value;
    const double delta = std::fabs(shifted - base);
    out.push_back({"dfr_loss value responds to a feature perturbation (|delta| > 0)", delta, 0.0, delta > 0.0, {}});
    return out;
}

std::vector<CheckResult> run_gradcheck(std::uint64_t seed)
{
    std::vector<CheckResult> all = check_oracle_equivalence(seed);
    for (auto&& r : check_gradients(seed))
        all.push_back(std::move(r));
    for (auto&& r : check_stop_gradient(seed))
        all.push_back(std::move(r));
    return all;
}

}  // namespace scribreg
