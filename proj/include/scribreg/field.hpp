#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace scribreg {

// Label value marking unannotated pixels and ignored pairs.
inline constexpr std::uint8_t kIgnore = 255;

// Thrown for bad arguments and shape mismatches (CLI exit code 1).
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Non-finite losses and failed numerical checks (CLI exit code 2).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Missing, unwritable or corrupt files (CLI exit code 3).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct GridShape {
    int h = 1;
    int w = 1;

    GridShape() = default;
    GridShape(int height, int width) : h(height), w(width) {
        if (h < 1 || w < 1)
            throw UsageError("grid shape must be at least 1x1");
    }

    std::size_t pixels() const { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
    int row(int index) const { return index / w; }
    int col(int index) const { return index % w; }
    int index(int row, int col) const { return row * w + col; }

    friend bool operator==(const GridShape&, const GridShape&) = default;
};

std::string to_string(const GridShape& shape);

// Dense per-pixel vector field stored pixel-major: values[pixel * channels + channel].
// GridImage, ProbMap, FeatMap and logits all share this layout.
class Field {
public:
    Field() = default;
    Field(GridShape shape, int channels, double fill = 0.0);

    const GridShape& shape() const { return shape_; }
    int channels() const { return channels_; }
    std::size_t pixels() const { return shape_.pixels(); }
    std::size_t size() const { return values_.size(); }

    double& at(std::size_t pixel, int channel) { return values_[pixel * channels_ + channel]; }
    double at(std::size_t pixel, int channel) const { return values_[pixel * channels_ + channel]; }

    std::span<double> pixel(std::size_t p) { return {values_.data() + p * channels_, static_cast<std::size_t>(channels_)}; }
    std::span<const double> pixel(std::size_t p) const
    {
        return {values_.data() + p * channels_, static_cast<std::size_t>(channels_)};
    }

    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }
    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }

    bool same_layout(const Field& other) const { return shape_ == other.shape_ && channels_ == other.channels_; }

private:
    GridShape shape_;
    int channels_ = 0;
    std::vector<double> values_;
};

// H×W×3 colour image with channels in [0,1].
using GridImage = Field;
// H×W×C per-pixel class distribution.
using ProbMap = Field;
// H×W×d non-negative feature vectors.
using FeatMap = Field;
// H×W×C pre-softmax scores.
using Logits = Field;

// H×W integer labels; kIgnore marks pixels without a label.
struct LabelMask {
    GridShape shape;
    std::vector<std::uint8_t> labels;

    LabelMask() = default;
    explicit LabelMask(GridShape s, std::uint8_t fill = kIgnore) : shape(s), labels(s.pixels(), fill) {}

    std::uint8_t operator[](std::size_t i) const { return labels[i]; }
    std::uint8_t& operator[](std::size_t i) { return labels[i]; }

    std::size_t labeled_count() const;
    // Throws UsageError if any labeled entry is >= classes.
    void check_classes(int classes) const;

    friend bool operator==(const LabelMask&, const LabelMask&) = default;
};

void require_same_shape(const GridShape& a, const GridShape& b, const char* what);

}  // namespace scribreg
