#pragma once

#include "scribreg/data.hpp"
#include "scribreg/feat_loss.hpp"
#include "scribreg/grid.hpp"
#include "scribreg/kernels.hpp"
#include "scribreg/metrics.hpp"
#include "scribreg/model.hpp"
#include "scribreg/seg_loss.hpp"

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace scribreg {

// Which labels supervise the feature head.
enum class SupervisionSource { Pseudo, GroundTruthScribbles, Both };

std::string to_string(SupervisionSource s);
SupervisionSource parse_supervision_source(const std::string& s);

struct TrainConfig {
    double lambda1 = 1e-2;
    double lambda2 = 1e-3;
    int r = 5;
    double gamma = 0.98;
    double sigma1 = 6.0;
    double sigma2 = 0.5;
    double sigma3 = 5.0;
    double lr = 0.1;
    double momentum = 0.9;
    int iterations = 2000;
    int batch_size = 4;
    std::uint64_t seed = 0;
    bool enable_dfr = true;
    bool enable_fd = true;
    bool enable_fr = true;
    bool feature_in_kernel = true;
    bool color_in_kernel = true;
    SupervisionSource supervision_source = SupervisionSource::Pseudo;
    int hidden = 64;
    int feat_dim = 16;
    int patch = 5;
    int eval_every = 0;  // 0: evaluate only after the last step

    void validate() const;
    // Sets one field from its textual value; throws UsageError on unknown keys or bad values.
    void set(const std::string& key, const std::string& value);
    KernelParams kernel() const { return {sigma1, sigma2, sigma3}; }
    ModelConfig model(int classes) const { return {patch, hidden, classes, feat_dim}; }
    // Flat key=value text, one field per line, in a fixed order.
    std::string to_text() const;
};

// Flat key=value lines; '#' starts a comment. Keys are TrainConfig field names.
TrainConfig parse_config(const std::string& text, TrainConfig base = {});
TrainConfig load_config_file(const std::filesystem::path& path, TrainConfig base = {});

struct LossBreakdown {
    double pce = 0.0;
    double dfr = 0.0;
    double fd = 0.0;
    double fr = 0.0;
    double total = 0.0;
    std::size_t annotated = 0;
    double pseudo_coverage = 0.0;

    LossBreakdown& operator+=(const LossBreakdown& o);
};

struct SceneGradient {
    LossBreakdown losses;
    ParamSet grads;
};

// Evaluates the combined objective L = pce + lambda1*dfr + lambda2*(fd + fr)
// for one scene and its exact parameter gradient. Pseudo-labels come from
// this forward pass. Throws NumericalError naming the first non-finite term.
//
// `kernel_features`, when given, replaces the live feature map inside the
// dfr affinity. Finite-difference checks pass the unperturbed features here so
// the numeric objective sees the same stop-gradient as the analytic one.
SceneGradient scene_objective(const TwoHeadNet& net, const Scene& scene, const PairWindow& window,
                              const TrainConfig& config, const FeatMap* kernel_features = nullptr);

// Feature-head supervision for a scene under the configured source.
LabelMask feature_supervision(const ProbMap& probs, const LabelMask& scribbles, const TrainConfig& config);

struct MetricsRecord {
    int iteration = 0;
    LossBreakdown losses;  // batch means, annotated count summed
    std::optional<double> val_miou;

    std::string to_json() const;
};

IouReport evaluate(const TwoHeadNet& net, std::span<const Scene> scenes, int classes);

class Trainer {
public:
    Trainer(TrainConfig config, int classes);

    // One momentum-SGD update on the mean objective over `batch`.
    MetricsRecord train_step(std::span<const Scene* const> batch);

    const TwoHeadNet& net() const { return net_; }
    TwoHeadNet& net() { return net_; }
    const TrainConfig& config() const { return config_; }
    int iteration() const { return iteration_; }

private:
    const PairWindow& window_for(GridShape shape);

    TrainConfig config_;
    int classes_;
    TwoHeadNet net_;
    ParamSet velocity_;
    int iteration_ = 0;
    std::map<std::pair<int, int>, std::unique_ptr<PairWindow>> windows_;
};

struct TrainResult {
    TwoHeadNet net;
    std::vector<MetricsRecord> history;
    IouReport val;
};

using MetricsSink = std::function<void(const MetricsRecord&)>;

// Runs config.iterations steps over data.train with seed-driven batch
// sampling, then evaluates on data.val.
TrainResult train(const TrainConfig& config, const Dataset& data, const MetricsSink& sink = {});

struct AblationRow {
    std::string name;
    std::map<std::string, std::string> overrides;
};

struct AblationResult {
    std::string name;
    TrainConfig config;
    IouReport val;
};

std::vector<AblationResult> run_ablation(const TrainConfig& base, std::span<const AblationRow> rows, const Dataset& data);

// Loss-term study: pce, pce+dfr, pce+dfr+fd, pce+dfr+fd+fr.
std::vector<AblationRow> loss_ablation_rows();
// Regulariser kernel study: XY, XY+RGB, XY+Feature, XY+RGB+Feature.
std::vector<AblationRow> kernel_ablation_rows();
// Feature-head supervision study: scribbles, scribbles+pseudo, pseudo.
std::vector<AblationRow> supervision_ablation_rows();

// Grid file: "key=value" lines before the first "[row NAME]" header form the
// base config; each row section lists its overrides.
struct AblationGrid {
    TrainConfig base;
    std::vector<AblationRow> rows;
};
AblationGrid parse_ablation_grid(const std::string& text, TrainConfig base = {});

std::string ablation_csv(std::span<const AblationResult> results, int classes);
std::string iou_csv(const IouReport& report);

}  // namespace scribreg
