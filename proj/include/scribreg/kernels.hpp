#pragma once

#include "scribreg/field.hpp"

#include <cmath>

namespace scribreg {

// Gaussian bandwidths: sigma1 spatial (pixels), sigma2 colour (normalised RGB),
// sigma3 deep feature.
struct KernelParams {
    double sigma1 = 6.0;
    double sigma2 = 0.5;
    double sigma3 = 50.0;

    void validate() const;
};

// Per-channel standardisation (x - mean) / std with the ImageNet statistics,
// the usual backbone input normalisation. The colour bandwidth sigma2 is
// expressed in these units, so images go through this before any kernel.
inline constexpr double kRgbMean[3] = {0.485, 0.456, 0.406};
inline constexpr double kRgbStd[3] = {0.229, 0.224, 0.225};
GridImage normalize_rgb(const GridImage& image);

// Which appearance terms enter the affinity. Position is always present.
struct KernelChannels {
    bool color = true;
    bool feature = true;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double t = a[k] - b[k];
        s += t * t;
    }
    return s;
}

inline double spatial_squared_distance(const GridShape& shape, int i, int j)
{
    const double dy = shape.row(i) - shape.row(j);
    const double dx = shape.col(i) - shape.col(j);
    return dx * dx + dy * dy;
}

// Gaussian affinity over the enabled channels. `feat` is read as a constant;
// nothing downstream differentiates through it.
inline double affinity(int i, int j, const GridImage& image, const FeatMap* feat, const KernelParams& params,
                       KernelChannels channels)
{
    double e = spatial_squared_distance(image.shape(), i, j) / (2.0 * params.sigma1 * params.sigma1);
    if (channels.color)
        e += squared_distance(image.pixel(i), image.pixel(j)) / (2.0 * params.sigma2 * params.sigma2);
    if (channels.feature && feat != nullptr)
        e += squared_distance(feat->pixel(i), feat->pixel(j)) / (2.0 * params.sigma3 * params.sigma3);
    return std::exp(-e);
}

// Position + colour + deep feature affinity used by the segmentation regulariser.
inline double kernel_full(int i, int j, const GridImage& image, const FeatMap& feat, const KernelParams& params)
{
    return affinity(i, j, image, &feat, params, {true, true});
}

// Position + colour only; weights the feature regulariser.
inline double kernel_shallow(int i, int j, const GridImage& image, const KernelParams& params)
{
    return affinity(i, j, image, nullptr, params, {true, false});
}

}  // namespace scribreg
