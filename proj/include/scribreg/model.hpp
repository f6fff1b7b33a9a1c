#pragma once

#include "scribreg/field.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>

namespace scribreg {

struct ModelConfig {
    int patch = 5;      // side of the RGB neighbourhood fed to the trunk (odd)
    int hidden = 64;    // trunk width
    int classes = 4;    // segmentation head outputs, background included
    int feat_dim = 16;  // feature head outputs

    int descriptor_size() const { return 3 * patch * patch + 2; }
    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Trainable arrays of the two-head network. The same struct carries gradients.
// Biases are 1×n rows.
struct ParamSet {
    Matrix trunk_weight;  // descriptor -> hidden
    Matrix trunk_bias;
    Matrix seg_weight;    // hidden -> classes
    Matrix seg_bias;
    Matrix feat_weight;   // hidden -> feat_dim
    Matrix feat_bias;

    static ParamSet zeros(const ModelConfig& config);
    // Glorot-uniform weights, zero biases.
    static ParamSet glorot(const ModelConfig& config, std::uint64_t seed);

    // Visits arrays in a fixed order with stable names.
    void for_each(const std::function<void(const std::string&, Matrix&)>& fn);
    void for_each(const std::function<void(const std::string&, const Matrix&)>& fn) const;

    ParamSet& operator+=(const ParamSet& other);
    ParamSet& operator*=(double s);
    std::size_t count() const;
};

// Per-pixel input: zero-padded patch×patch RGB neighbourhood (row-major,
// channel-interleaved) followed by (x/w, y/h).
RowMatrix pixel_descriptors(const GridImage& image, int patch);

struct ForwardCache {
    std::uint64_t version = 0;
    RowMatrix input;
    RowMatrix hidden_pre;
    RowMatrix hidden;
    RowMatrix feat_pre;
};

struct ForwardResult {
    Logits logits;
    ProbMap probs;
    FeatMap feat;
    ForwardCache cache;
};

// Shared affine+ReLU trunk feeding a softmax segmentation head and a ReLU
// feature head.
class TwoHeadNet {
public:
    TwoHeadNet(ModelConfig config, ParamSet params);
    TwoHeadNet(ModelConfig config, std::uint64_t seed) : TwoHeadNet(config, ParamSet::glorot(config, seed)) {}

    const ModelConfig& config() const { return config_; }
    const ParamSet& params() const { return params_; }
    // Mutable access bumps the version, invalidating outstanding caches.
    ParamSet& mutable_params();
    std::uint64_t version() const { return version_; }

    ForwardResult forward(const GridImage& image) const;

    // Reverse pass for upstream gradients on the logits and on the (post-ReLU)
    // features. Throws UsageError if the cache predates a parameter change.
    ParamSet backward(const Field& grad_logits, const Field& grad_feat, const ForwardCache& cache) const;

    void save(const std::filesystem::path& path) const;
    static TwoHeadNet load(const std::filesystem::path& path);

private:
    ModelConfig config_;
    ParamSet params_;
    std::uint64_t version_ = 1;
};

}  // namespace scribreg
