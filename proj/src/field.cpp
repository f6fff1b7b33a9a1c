#include "scribreg/field.hpp"

#include <algorithm>

namespace scribreg {

std::string to_string(const GridShape& shape)
{
    return std::to_string(shape.h) + "x" + std::to_string(shape.w);
}

Field::Field(GridShape shape, int channels, double fill)
    : shape_(shape), channels_(channels), values_(shape.pixels() * static_cast<std::size_t>(channels), fill)
{
    if (channels < 1)
        throw UsageError("field needs at least one channel");
}

std::size_t LabelMask::labeled_count() const
{
    return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](std::uint8_t l) { return l != kIgnore; }));
}

void LabelMask::check_classes(int classes) const
{
    for (auto l : labels)
        if (l != kIgnore && l >= classes)
            throw UsageError("label " + std::to_string(l) + " out of range for " + std::to_string(classes) + " classes");
}

void require_same_shape(const GridShape& a, const GridShape& b, const char* what)
{
    if (!(a == b))
        throw UsageError(std::string(what) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

}  // namespace scribreg
