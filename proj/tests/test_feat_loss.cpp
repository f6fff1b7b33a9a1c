#include "scribreg/feat_loss.hpp"
#include "scribreg/oracle.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace scribreg;

namespace {

FeatMap with_values(const FeatMap& like, const std::vector<double>& v)
{
    FeatMap f = like;
    f.values() = v;
    return f;
}

double l1(const FeatMap& feat, int i, int j)
{
    double s = 0.0;
    for (int k = 0; k < feat.channels(); ++k)
        s += std::fabs(feat.at(i, k) - feat.at(j, k));
    return s;
}

// Single related pair (0, 1) on a 1x2 grid.
PairRelation single_pair(std::uint8_t a, std::uint8_t b)
{
    LabelMask sup(GridShape(1, 2));
    sup[0] = a;
    sup[1] = b;
    return build_relations(sup, PairWindow(GridShape(1, 2), 1));
}

}  // namespace

TEST_SUITE("feat_loss") {

TEST_CASE("select_pseudo_labels threshold")
{
    ProbMap p(GridShape(1, 3), 2);
    p.at(0, 0) = 0.99;
    p.at(0, 1) = 0.01;
    p.at(1, 0) = 0.97;
    p.at(1, 1) = 0.03;
    p.at(2, 0) = 0.5;
    p.at(2, 1) = 0.5;
    const auto m = select_pseudo_labels(p, 0.98);
    CHECK(m.labels[0] == 0);
    CHECK(m.labels[1] == kIgnore);
    CHECK(m.labels[2] == kIgnore);
    CHECK(m.coverage() == doctest::Approx(1.0 / 3.0));

    SUBCASE("strict inequality")
    {
        ProbMap q(GridShape(1, 1), 2);
        q.at(0, 0) = 0.25;
        q.at(0, 1) = 0.75;
        CHECK(select_pseudo_labels(q, 0.75).labels[0] == kIgnore);
        CHECK(select_pseudo_labels(q, 0.7).labels[0] == 1);
    }
    SUBCASE("gamma must lie in (1/C, 1)")
    {
        CHECK_THROWS_AS(select_pseudo_labels(p, 0.5), UsageError);
        CHECK_THROWS_AS(select_pseudo_labels(p, 1.0), UsageError);
    }
}

TEST_CASE("select_pseudo_labels is monotone in gamma")
{
    std::mt19937_64 rng(5);
    const auto inst = oracle::random_instance(rng, GridShape(6, 6), 3, 2, 1);
    // Sharpen so that a range of thresholds is crossed.
    ProbMap sharp = inst.probs;
    for (std::size_t p = 0; p < sharp.pixels(); ++p) {
        double s = 0.0;
        for (int c = 0; c < 3; ++c)
            s += (sharp.at(p, c) = std::pow(sharp.at(p, c), 6.0));
        for (int c = 0; c < 3; ++c)
            sharp.at(p, c) /= s;
    }
    std::size_t previous = sharp.pixels() + 1;
    for (double g = 0.34; g < 1.0; g += 0.05) {
        const auto m = select_pseudo_labels(sharp, g);
        const auto n = m.labels.labeled_count();
        CHECK(n <= previous);
        previous = n;
        const auto loose = select_pseudo_labels(sharp, std::max(0.34, g - 0.05));
        for (std::size_t p = 0; p < sharp.pixels(); ++p)
            if (m.labels[p] != kIgnore)
                CHECK(loose.labels[p] == m.labels[p]);
    }
}

TEST_CASE("build_relations")
{
    SUBCASE("all same label")
    {
        const GridShape shape(4, 4);
        const PairWindow window(shape, 1);
        const auto rel = build_relations(LabelMask(shape, 2), window);
        CHECK(rel.negative.empty());
        CHECK(rel.background_positive.empty());
        CHECK(rel.effective_pairs() == window.ordered_count());
        for (const auto& p : window.ordered_pairs())
            CHECK(rel.relation(p.i, p.j) == PairRelation::kSame);
    }
    SUBCASE("4x4 checkerboard, r=1")
    {
        const GridShape shape(4, 4);
        LabelMask board(shape);
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x)
                board[shape.index(y, x)] = static_cast<std::uint8_t>((x + y) % 2);
        const auto rel = build_relations(board, PairWindow(shape, 1));
        for (const auto& [i, j] : oracle::brute_pairs(shape, 1)) {
            const bool diagonal = shape.row(i) != shape.row(j) && shape.col(i) != shape.col(j);
            CHECK(rel.relation(i, j) == (diagonal ? PairRelation::kSame : PairRelation::kDifferent));
        }
        // Axis-adjacent unordered pairs: 2 * 4 * 3 = 24; diagonal: 2 * 3 * 3 = 18.
        CHECK(rel.negative.size() == 24);
        CHECK(rel.background_positive.size() + rel.foreground_positive.size() == 18);
        CHECK(rel.relation(0, 2) == kIgnore);  // outside the window
    }
    SUBCASE("ignored endpoint")
    {
        const auto rel = single_pair(1, kIgnore);
        CHECK(rel.relation(0, 1) == kIgnore);
        CHECK(rel.effective_pairs() == 0);
    }
    SUBCASE("background split")
    {
        CHECK(single_pair(0, 0).background_positive.size() == 1);
        CHECK(single_pair(3, 3).foreground_positive.size() == 1);
        LabelMask sup(GridShape(1, 2), 3);
        CHECK(build_relations(sup, PairWindow(GridShape(1, 2), 1), 3).background_positive.size() == 1);
    }
    SUBCASE("symmetric and covering")
    {
        std::mt19937_64 rng(8);
        const GridShape shape(6, 5);
        LabelMask sup(shape);
        for (auto& v : sup.labels) {
            const auto k = rng() % 4;
            v = k == 3 ? kIgnore : static_cast<std::uint8_t>(k);
        }
        const PairWindow window(shape, 2);
        const auto rel = build_relations(sup, window);
        std::size_t related = 0;
        for (const auto& p : window.ordered_pairs()) {
            CHECK(rel.relation(p.i, p.j) == rel.relation(p.j, p.i));
            const bool both = sup[p.i] != kIgnore && sup[p.j] != kIgnore;
            CHECK((rel.relation(p.i, p.j) != kIgnore) == both);
            if (both) {
                ++related;
                CHECK((rel.relation(p.i, p.j) == PairRelation::kSame) == (sup[p.i] == sup[p.j]));
            }
        }
        CHECK(rel.effective_pairs() == related);
    }
}

TEST_CASE("feature_distance")
{
    FeatMap f(GridShape(1, 2), 4, 0.3);
    CHECK(feature_distance(0, 1, f) == 1.0);
    f.at(1, 0) += 0.5;
    f.at(1, 2) -= 1.5;
    CHECK(feature_distance(0, 1, f) == doctest::Approx(std::exp(-0.5)).epsilon(1e-14));
    CHECK(feature_distance(0, 1, f) == feature_distance(1, 0, f));
}

TEST_CASE("feature_distance_loss values")
{
    SUBCASE("identical features on positive pairs")
    {
        const GridShape shape(3, 3);
        const auto rel = build_relations(LabelMask(shape, 1), PairWindow(shape, 1));
        const auto res = feature_distance_loss(FeatMap(shape, 4, 0.7), rel);
        CHECK(res.value == 0.0);
    }
    SUBCASE("single negative pair with identical features")
    {
        const auto res = feature_distance_loss(FeatMap(GridShape(1, 2), 4, 0.2), single_pair(0, 1));
        CHECK(res.value == doctest::Approx(-2.0 * std::log(1e-8)).epsilon(1e-6));
        CHECK(std::isfinite(res.value));
    }
    SUBCASE("no relations")
    {
        const auto res = feature_distance_loss(FeatMap(GridShape(1, 2), 2, 0.2), single_pair(kIgnore, 1));
        CHECK(res.value == 0.0);
        for (double g : res.grad.values())
            CHECK(g == 0.0);
    }
    SUBCASE("set means and the weight of two on negatives")
    {
        // 1x3 grid, labels 0 0 1: bg+ {(0,1)}, neg {(0,2),(1,2)} at r=2.
        const GridShape shape(1, 3);
        LabelMask sup(shape);
        sup[0] = 0;
        sup[1] = 0;
        sup[2] = 1;
        FeatMap f(shape, 2);
        f.at(0, 0) = 0.0;
        f.at(1, 0) = 0.4;
        f.at(2, 0) = 1.0;
        f.at(2, 1) = 0.6;
        const auto rel = build_relations(sup, PairWindow(shape, 2));
        const double d01 = std::exp(-0.4 / 2.0);
        const double d02 = std::exp(-1.6 / 2.0);
        const double d12 = std::exp(-1.2 / 2.0);
        const double expected = -std::log(d01) - 2.0 * 0.5 * (std::log(1.0 - d02) + std::log(1.0 - d12));
        CHECK(feature_distance_loss(f, rel).value == doctest::Approx(expected).epsilon(1e-13));
    }
}

TEST_CASE("feature_distance_loss gradient on random 4x4, d=4, mixed relations")
{
    std::mt19937_64 rng(12);
    const GridShape shape(4, 4);
    const auto inst = oracle::random_instance(rng, shape, 3, 4, 1);
    const auto rel = build_relations(inst.supervision, PairWindow(shape, 1));
    REQUIRE(!rel.negative.empty());
    const auto res = feature_distance_loss(inst.feat, rel);
    const auto rep = oracle::fd_check(
        [&](const std::vector<double>& z) { return feature_distance_loss(with_values(inst.feat, z), rel).value; },
        inst.feat.values(), res.grad.values());
    CHECK(rep.max_error < 1e-5);
}

TEST_CASE("feature_distance_loss descent pulls positives together and pushes negatives apart")
{
    FeatMap f(GridShape(1, 2), 3);
    f.at(0, 0) = 0.2;
    f.at(0, 1) = 1.1;
    f.at(0, 2) = 0.5;
    f.at(1, 0) = 0.9;
    f.at(1, 1) = 0.3;
    f.at(1, 2) = 0.8;
    const double before = l1(f, 0, 1);
    const double step = 1e-3;

    const auto pos = feature_distance_loss(f, single_pair(2, 2));
    FeatMap pulled = f;
    for (std::size_t k = 0; k < f.size(); ++k)
        pulled.values()[k] -= step * pos.grad.values()[k];
    CHECK(l1(pulled, 0, 1) < before);

    const auto neg = feature_distance_loss(f, single_pair(0, 2));
    FeatMap pushed = f;
    for (std::size_t k = 0; k < f.size(); ++k)
        pushed.values()[k] -= step * neg.grad.values()[k];
    CHECK(l1(pushed, 0, 1) > before);
}

TEST_CASE("feature_reg_loss")
{
    const GridShape shape(4, 4);
    const KernelParams kp{2.0, 0.5, 1.0};
    std::mt19937_64 rng(17);
    const auto inst = oracle::random_instance(rng, shape, 3, 4, 1);
    const PairWindow window(shape, 1);

    SUBCASE("constant features")
    {
        const auto rel = build_relations(LabelMask(shape, 0), window);
        CHECK(feature_reg_loss(FeatMap(shape, 4, 0.9), inst.image, rel, kp).value == 0.0);
    }
    SUBCASE("empty relation set")
    {
        const auto rel = build_relations(LabelMask(shape), window);
        const auto res = feature_reg_loss(inst.feat, inst.image, rel, kp);
        CHECK(res.value == 0.0);
        for (double g : res.grad.values())
            CHECK(g == 0.0);
    }
    SUBCASE("full pseudo-labels against brute force")
    {
        LabelMask full(shape);
        for (std::size_t p = 0; p < shape.pixels(); ++p)
            full[p] = static_cast<std::uint8_t>(rng() % 3);
        const auto rel = build_relations(full, window);
        oracle::OracleConfig cfg;
        cfg.r = 1;
        cfg.sigma1 = kp.sigma1;
        cfg.sigma2 = kp.sigma2;
        cfg.sigma3 = kp.sigma3;
        const auto ref = oracle::brute_losses(inst.probs, inst.feat, inst.image, inst.scribbles, full, cfg);
        const auto res = feature_reg_loss(inst.feat, inst.image, rel, kp);
        CHECK(std::fabs(res.value - ref.fr) <= 1e-12);
        CHECK(std::fabs(feature_distance_loss(inst.feat, rel).value - ref.fd) <= 1e-12);

        const auto rep = oracle::fd_check(
            [&](const std::vector<double>& z) { return feature_reg_loss(with_values(inst.feat, z), inst.image, rel, kp).value; },
            inst.feat.values(), res.grad.values());
        CHECK(rep.max_error < 1e-5);
    }
    SUBCASE("constant shift invariance")
    {
        const auto rel = build_relations(inst.supervision, window);
        FeatMap shifted = inst.feat;
        for (std::size_t p = 0; p < shifted.pixels(); ++p)
            for (int k = 0; k < 4; ++k)
                shifted.at(p, k) += 0.25 * (k + 1);
        const auto a = feature_reg_loss(inst.feat, inst.image, rel, kp);
        const auto b = feature_reg_loss(shifted, inst.image, rel, kp);
        CHECK(b.value == doctest::Approx(a.value).epsilon(1e-12));
        for (std::size_t k = 0; k < a.grad.size(); ++k)
            CHECK(b.grad.values()[k] == a.grad.values()[k]);
    }
    SUBCASE("L1 subgradient is zero at ties")
    {
        FeatMap f(GridShape(1, 2), 2, 0.5);
        f.at(1, 1) = 0.9;
        const auto res = feature_reg_loss(f, GridImage(GridShape(1, 2), 3, 0.1), single_pair(1, 1), kp);
        CHECK(res.grad.at(0, 0) == 0.0);
        CHECK(res.grad.at(1, 0) == 0.0);
        CHECK(res.grad.at(0, 1) < 0.0);
        CHECK(res.grad.at(1, 1) > 0.0);
    }
}

}
