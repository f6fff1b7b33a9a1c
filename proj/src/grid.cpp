#include "scribreg/grid.hpp"

#include <algorithm>

namespace scribreg {

std::vector<PixelPair> enumerate_pairs(GridShape shape, int r)
{
    if (r < 1)
        throw UsageError("window radius must be >= 1");
    std::vector<PixelPair> pairs;
    for (int y = 0; y < shape.h; ++y) {
        for (int x = 0; x < shape.w; ++x) {
            const int i = shape.index(y, x);
            for (int y2 = std::max(0, y - r); y2 <= std::min(shape.h - 1, y + r); ++y2) {
                for (int x2 = std::max(0, x - r); x2 <= std::min(shape.w - 1, x + r); ++x2) {
                    const int j = shape.index(y2, x2);
                    if (j != i)
                        pairs.push_back({i, j});
                }
            }
        }
    }
    return pairs;
}

std::vector<PixelPair> filter_pairs(const std::vector<PixelPair>& pairs, GridShape shape, const LabelMask& mask)
{
    require_same_shape(shape, mask.shape, "filter_pairs");
    std::vector<PixelPair> kept;
    for (const auto& p : pairs) {
        if (mask[p.i] != kIgnore && mask[p.j] != kIgnore)
            kept.push_back(p);
    }
    return kept;
}

PairWindow::PairWindow(GridShape shape, int r) : shape_(shape), r_(r)
{
    if (r < 1)
        throw UsageError("window radius must be >= 1");
    for (int y = 0; y < shape.h; ++y) {
        for (int x = 0; x < shape.w; ++x) {
            const int i = shape.index(y, x);
            for (int y2 = y; y2 <= std::min(shape.h - 1, y + r); ++y2) {
                const int x_begin = (y2 == y) ? x + 1 : std::max(0, x - r);
                for (int x2 = x_begin; x2 <= std::min(shape.w - 1, x + r); ++x2)
                    half_.push_back({i, shape.index(y2, x2)});
            }
        }
    }
}

}  // namespace scribreg
