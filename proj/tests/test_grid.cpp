#include "scribreg/grid.hpp"
#include "scribreg/oracle.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>

using namespace scribreg;

TEST_SUITE("grid") {

TEST_CASE("degenerate and small grids")
{
    CHECK(enumerate_pairs(GridShape(1, 1), 1).empty());
    CHECK(enumerate_pairs(GridShape(2, 3), 5).size() == 30);
    CHECK(enumerate_pairs(GridShape(2, 2), 1).size() == 12);
}

TEST_CASE("4x4 r=1 count matches the quadratic oracle")
{
    const auto brute = oracle::brute_pairs(GridShape(4, 4), 1);
    REQUIRE(brute.size() == 84);
    CHECK(enumerate_pairs(GridShape(4, 4), 1).size() == 84);
}

TEST_CASE("radius must be positive")
{
    CHECK_THROWS_AS(enumerate_pairs(GridShape(3, 3), 0), UsageError);
    CHECK_THROWS_AS(PairWindow(GridShape(3, 3), 0), UsageError);
}

TEST_CASE("enumeration order is row-major over i then over window offsets")
{
    const auto pairs = enumerate_pairs(GridShape(3, 3), 1);
    REQUIRE(pairs.size() >= 3);
    CHECK(pairs[0] == PixelPair{0, 1});
    CHECK(pairs[1] == PixelPair{0, 3});
    CHECK(pairs[2] == PixelPair{0, 4});
    CHECK(std::is_sorted(pairs.begin(), pairs.end(), [](const PixelPair& a, const PixelPair& b) { return a.i < b.i; }));
}

TEST_CASE("oracle equivalence, symmetry and count law up to 6x6")
{
    for (int h = 1; h <= 6; ++h) {
        for (int w = 1; w <= 6; ++w) {
            for (int r = 1; r <= 3; ++r) {
                const GridShape shape(h, w);
                const auto pairs = enumerate_pairs(shape, r);
                std::set<std::pair<int, int>> got;
                for (const auto& p : pairs)
                    got.insert({p.i, p.j});
                CHECK(got.size() == pairs.size());  // no duplicates
                CHECK(got == oracle::brute_pairs(shape, r));
                for (const auto& [i, j] : got)
                    CHECK(got.count({j, i}) == 1);
                if (r >= std::max(h, w) - 1) {
                    const auto n = shape.pixels();
                    CHECK(pairs.size() == n * (n - 1));
                }
                const PairWindow window(shape, r);
                CHECK(window.ordered_count() == pairs.size());
                for (const auto& p : window.half_pairs())
                    CHECK(p.j > p.i);
            }
        }
    }
}

TEST_CASE("filter_pairs")
{
    const GridShape shape(3, 3);
    const auto pairs = enumerate_pairs(shape, 1);

    SUBCASE("all ignored")
    {
        CHECK(filter_pairs(pairs, shape, LabelMask(shape)).empty());
    }
    SUBCASE("fully labelled keeps everything")
    {
        CHECK(filter_pairs(pairs, shape, LabelMask(shape, 1)) == pairs);
    }
    SUBCASE("2x2 with a single labelled pixel")
    {
        const GridShape small(2, 2);
        LabelMask mask(small);
        mask[2] = 0;
        const auto all = enumerate_pairs(small, 1);
        // Brute force: a surviving pair needs two labelled endpoints.
        std::size_t expected = 0;
        for (const auto& p : all)
            expected += (mask[p.i] != kIgnore && mask[p.j] != kIgnore);
        CHECK(expected == 0);
        CHECK(filter_pairs(all, small, mask).empty());
    }
    SUBCASE("keeps exactly the pairs with two labelled endpoints")
    {
        LabelMask mask(shape);
        mask[0] = 0;
        mask[1] = 1;
        mask[4] = 2;
        const auto kept = filter_pairs(pairs, shape, mask);
        CHECK(kept.size() == 6);
        for (const auto& p : kept)
            CHECK((mask[p.i] != kIgnore && mask[p.j] != kIgnore));
    }
    SUBCASE("shape mismatch")
    {
        CHECK_THROWS_AS(filter_pairs(pairs, shape, LabelMask(GridShape(2, 3))), UsageError);
    }
}

}
