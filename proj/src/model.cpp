#include "scribreg/model.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <vector>

namespace scribreg {

namespace {

std::uint64_t next_version()
{
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1);
}

using ConstFieldMap = Eigen::Map<const RowMatrix>;

ConstFieldMap as_matrix(const Field& f)
{
    return ConstFieldMap(f.data(), static_cast<Eigen::Index>(f.pixels()), f.channels());
}

Field to_field(const RowMatrix& m, GridShape shape)
{
    Field f(shape, static_cast<int>(m.cols()));
    Eigen::Map<RowMatrix>(f.data(), m.rows(), m.cols()) = m;
    return f;
}

Matrix glorot_matrix(int rows, int cols, std::mt19937_64& rng)
{
    const double limit = std::sqrt(6.0 / (rows + cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix m(rows, cols);
    // Column-major fill order is part of the seed contract.
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            m(r, c) = dist(rng);
    return m;
}

}  // namespace

void ModelConfig::validate() const
{
    if (patch < 1 || patch % 2 == 0)
        throw UsageError("patch size must be a positive odd number");
    if (hidden < 1 || feat_dim < 1)
        throw UsageError("hidden and feature dimensions must be positive");
    if (classes < 2 || classes >= kIgnore)
        throw UsageError("class count must be in [2, 254]");
}

ParamSet ParamSet::zeros(const ModelConfig& c)
{
    ParamSet p;
    p.trunk_weight = Matrix::Zero(c.descriptor_size(), c.hidden);
    p.trunk_bias = Matrix::Zero(1, c.hidden);
    p.seg_weight = Matrix::Zero(c.hidden, c.classes);
    p.seg_bias = Matrix::Zero(1, c.classes);
    p.feat_weight = Matrix::Zero(c.hidden, c.feat_dim);
    p.feat_bias = Matrix::Zero(1, c.feat_dim);
    return p;
}

ParamSet ParamSet::glorot(const ModelConfig& c, std::uint64_t seed)
{
    c.validate();
    std::mt19937_64 rng(seed);
    ParamSet p = zeros(c);
    p.trunk_weight = glorot_matrix(c.descriptor_size(), c.hidden, rng);
    p.seg_weight = glorot_matrix(c.hidden, c.classes, rng);
    p.feat_weight = glorot_matrix(c.hidden, c.feat_dim, rng);
    return p;
}

void ParamSet::for_each(const std::function<void(const std::string&, Matrix&)>& fn)
{
    fn("trunk.weight", trunk_weight);
    fn("trunk.bias", trunk_bias);
    fn("seg.weight", seg_weight);
    fn("seg.bias", seg_bias);
    fn("feat.weight", feat_weight);
    fn("feat.bias", feat_bias);
}

void ParamSet::for_each(const std::function<void(const std::string&, const Matrix&)>& fn) const
{
    const_cast<ParamSet*>(this)->for_each([&](const std::string& name, Matrix& m) { fn(name, m); });
}

ParamSet& ParamSet::operator+=(const ParamSet& other)
{
    trunk_weight += other.trunk_weight;
    trunk_bias += other.trunk_bias;
    seg_weight += other.seg_weight;
    seg_bias += other.seg_bias;
    feat_weight += other.feat_weight;
    feat_bias += other.feat_bias;
    return *this;
}

ParamSet& ParamSet::operator*=(double s)
{
    for_each([s](const std::string&, Matrix& m) { m *= s; });
    return *this;
}

std::size_t ParamSet::count() const
{
    std::size_t n = 0;
    for_each([&n](const std::string&, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
}

RowMatrix pixel_descriptors(const GridImage& image, int patch)
{
    if (image.channels() != 3)
        throw UsageError("pixel_descriptors expects an RGB image");
    const auto& shape = image.shape();
    const int half = patch / 2;
    RowMatrix out = RowMatrix::Zero(static_cast<Eigen::Index>(shape.pixels()), 3 * patch * patch + 2);
    for (int y = 0; y < shape.h; ++y) {
        for (int x = 0; x < shape.w; ++x) {
            const int p = shape.index(y, x);
            double* row = out.row(p).data();
            int col = 0;
            for (int dy = -half; dy <= half; ++dy) {
                for (int dx = -half; dx <= half; ++dx, col += 3) {
                    const int yy = y + dy;
                    const int xx = x + dx;
                    if (yy < 0 || yy >= shape.h || xx < 0 || xx >= shape.w)
                        continue;
                    const auto rgb = image.pixel(shape.index(yy, xx));
                    row[col] = rgb[0];
                    row[col + 1] = rgb[1];
                    row[col + 2] = rgb[2];
                }
            }
            row[col] = static_cast<double>(x) / shape.w;
            row[col + 1] = static_cast<double>(y) / shape.h;
        }
    }
    return out;
}

TwoHeadNet::TwoHeadNet(ModelConfig config, ParamSet params)
    : config_(config), params_(std::move(params)), version_(next_version())
{
    config_.validate();
    const ParamSet ref = ParamSet::zeros(config_);
    const auto same = [](const Matrix& a, const Matrix& b) { return a.rows() == b.rows() && a.cols() == b.cols(); };
    if (!same(ref.trunk_weight, params_.trunk_weight) || !same(ref.trunk_bias, params_.trunk_bias) ||
        !same(ref.seg_weight, params_.seg_weight) || !same(ref.seg_bias, params_.seg_bias) ||
        !same(ref.feat_weight, params_.feat_weight) || !same(ref.feat_bias, params_.feat_bias))
        throw UsageError("parameter shapes do not match model config");
}

ParamSet& TwoHeadNet::mutable_params()
{
    version_ = next_version();
    return params_;
}

ForwardResult TwoHeadNet::forward(const GridImage& image) const
{
    const auto shape = image.shape();
    ForwardResult out;
    auto& cache = out.cache;
    cache.version = version_;
    cache.input = pixel_descriptors(image, config_.patch);

    cache.hidden_pre = cache.input * params_.trunk_weight;
    cache.hidden_pre.rowwise() += params_.trunk_bias.row(0);
    cache.hidden = cache.hidden_pre.cwiseMax(0.0);

    RowMatrix logits = cache.hidden * params_.seg_weight;
    logits.rowwise() += params_.seg_bias.row(0);

    cache.feat_pre = cache.hidden * params_.feat_weight;
    cache.feat_pre.rowwise() += params_.feat_bias.row(0);

    out.logits = to_field(logits, shape);
    out.feat = to_field(cache.feat_pre.cwiseMax(0.0), shape);

    // Softmax per row, max-shifted.
    RowMatrix probs = logits;
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        auto row = probs.row(r);
        row = (row.array() - row.maxCoeff()).exp().matrix();
        row /= row.sum();
    }
    out.probs = to_field(probs, shape);
    return out;
}

ParamSet TwoHeadNet::backward(const Field& grad_logits, const Field& grad_feat, const ForwardCache& cache) const
{
    if (cache.version != version_)
        throw UsageError("backward: forward cache is stale (parameters changed since forward)");
    const auto n = cache.input.rows();
    if (static_cast<Eigen::Index>(grad_logits.pixels()) != n || grad_logits.channels() != config_.classes ||
        static_cast<Eigen::Index>(grad_feat.pixels()) != n || grad_feat.channels() != config_.feat_dim)
        throw UsageError("backward: upstream gradient shape mismatch");

    ParamSet g;
    const auto g_logits = as_matrix(grad_logits);
    const RowMatrix g_feat_pre = as_matrix(grad_feat).cwiseProduct((cache.feat_pre.array() > 0.0).cast<double>().matrix());

    g.seg_weight = cache.hidden.transpose() * g_logits;
    g.seg_bias = g_logits.colwise().sum();
    g.feat_weight = cache.hidden.transpose() * g_feat_pre;
    g.feat_bias = g_feat_pre.colwise().sum();

    RowMatrix g_hidden = g_logits * params_.seg_weight.transpose() + g_feat_pre * params_.feat_weight.transpose();
    g_hidden = g_hidden.cwiseProduct((cache.hidden_pre.array() > 0.0).cast<double>().matrix());
    g.trunk_weight = cache.input.transpose() * g_hidden;
    g.trunk_bias = g_hidden.colwise().sum();
    return g;
}

// Checkpoint layout (all integers and values little-endian):
//   8 bytes   magic "SRBCKPT1"
//   u32       format version (1)
//   u32       array count
//   per array:
//     u32 name length, name bytes (UTF-8, no terminator)
//     u32 rank (2), u64 rows, u64 cols
//     rows*cols f64 values, row-major
// The first array is "config" (1×4: patch, hidden, classes, feat_dim).
namespace {

constexpr std::array<char, 8> kMagic{'S', 'R', 'B', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void put(std::ostream& os, T v)
{
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        os.write(bytes.data(), sizeof(T));
    } else {
        os.write(reinterpret_cast<const char*>(&v), sizeof(T));
    }
}

template <typename T>
T get(std::istream& is)
{
    std::array<char, sizeof(T)> bytes{};
    if (!is.read(bytes.data(), sizeof(T)))
        throw IoError("checkpoint truncated");
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
}

void put_array(std::ostream& os, const std::string& name, const Matrix& m)
{
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(os, 2);
    put<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            put<double>(os, m(r, c));
}

std::pair<std::string, Matrix> get_array(std::istream& is)
{
    const auto len = get<std::uint32_t>(is);
    if (len > 256)
        throw IoError("checkpoint corrupt: bad array name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len))
        throw IoError("checkpoint truncated");
    if (get<std::uint32_t>(is) != 2)
        throw IoError("checkpoint corrupt: unsupported rank in " + name);
    const auto rows = get<std::uint64_t>(is);
    const auto cols = get<std::uint64_t>(is);
    if (rows > (1u << 20) || cols > (1u << 20))
        throw IoError("checkpoint corrupt: implausible dimensions in " + name);
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            m(r, c) = get<double>(is);
    return {std::move(name), std::move(m)};
}

}  // namespace

void TwoHeadNet::save(const std::filesystem::path& path) const
{
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os)
        throw IoError("cannot write checkpoint " + path.string());
    os.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(os, kFormatVersion);
    put<std::uint32_t>(os, 7);
    Matrix cfg(1, 4);
    cfg << config_.patch, config_.hidden, config_.classes, config_.feat_dim;
    put_array(os, "config", cfg);
    params_.for_each([&](const std::string& name, const Matrix& m) { put_array(os, name, m); });
    if (!os)
        throw IoError("failed writing checkpoint " + path.string());
}

TwoHeadNet TwoHeadNet::load(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot open checkpoint " + path.string());
    std::array<char, 8> magic{};
    if (!is.read(magic.data(), magic.size()) || magic != kMagic)
        throw IoError("not a checkpoint file: " + path.string());
    if (get<std::uint32_t>(is) != kFormatVersion)
        throw IoError("unsupported checkpoint version");
    const auto count = get<std::uint32_t>(is);
    if (count != 7)
        throw IoError("checkpoint corrupt: expected 7 arrays");

    auto [cfg_name, cfg] = get_array(is);
    if (cfg_name != "config" || cfg.rows() != 1 || cfg.cols() != 4)
        throw IoError("checkpoint corrupt: missing config");
    ModelConfig config{static_cast<int>(cfg(0, 0)), static_cast<int>(cfg(0, 1)), static_cast<int>(cfg(0, 2)),
                       static_cast<int>(cfg(0, 3))};
    try {
        config.validate();
    } catch (const UsageError& e) {
        throw IoError(std::string("checkpoint corrupt: ") + e.what());
    }

    ParamSet params = ParamSet::zeros(config);
    params.for_each([&](const std::string& name, Matrix& m) {
        auto [got_name, got] = get_array(is);
        if (got_name != name || got.rows() != m.rows() || got.cols() != m.cols())
            throw IoError("checkpoint corrupt: unexpected array " + got_name);
        m = std::move(got);
    });
    return TwoHeadNet(config, std::move(params));
}

}  // namespace scribreg
