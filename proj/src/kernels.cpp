#include "scribreg/kernels.hpp"

namespace scribreg {

void KernelParams::validate() const
{
    if (!(sigma1 > 0.0) || !(sigma2 > 0.0) || !(sigma3 > 0.0))
        throw UsageError("kernel bandwidths must be strictly positive");
}

GridImage normalize_rgb(const GridImage& image)
{
    if (image.channels() != 3)
        throw UsageError("normalize_rgb expects an RGB image");
    GridImage out = image;
    for (std::size_t p = 0; p < out.pixels(); ++p)
        for (int c = 0; c < 3; ++c)
            out.at(p, c) = (out.at(p, c) - kRgbMean[c]) / kRgbStd[c];
    return out;
}

}  // namespace scribreg
