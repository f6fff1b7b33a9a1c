#pragma once

#include "scribreg/field.hpp"

#include <vector>

namespace scribreg {

// Ordered pair of flattened row-major pixel indices.
struct PixelPair {
    int i;
    int j;

    friend bool operator==(const PixelPair&, const PixelPair&) = default;
    friend auto operator<=>(const PixelPair&, const PixelPair&) = default;
};

// Every ordered pair (i, j), i != j, whose row and column offsets are both at most r.
// Order: row-major over i, then row-major over the window offsets. Borders are clipped.
std::vector<PixelPair> enumerate_pairs(GridShape shape, int r);

// Keeps pairs where neither endpoint carries kIgnore. `shape` is the grid the
// pairs were enumerated on and must match the mask.
std::vector<PixelPair> filter_pairs(const std::vector<PixelPair>& pairs, GridShape shape, const LabelMask& mask);

// Chebyshev window of radius r over a fixed grid.
//
// The pairwise losses are symmetric in (i, j), so they walk the half set
// (j after i in row-major order) and count each contribution twice. The
// ordered set is available for callers that want the literal enumeration.
class PairWindow {
public:
    PairWindow(GridShape shape, int r);

    int radius() const { return r_; }
    const GridShape& shape() const { return shape_; }

    std::vector<PixelPair> ordered_pairs() const { return enumerate_pairs(shape_, r_); }
    // Pairs with j > i, row-major over i then over window offsets.
    const std::vector<PixelPair>& half_pairs() const { return half_; }
    std::size_t ordered_count() const { return 2 * half_.size(); }

private:
    GridShape shape_;
    int r_;
    std::vector<PixelPair> half_;
};

}  // namespace scribreg
