#include "scribreg/trainer.hpp"

#include "scribreg/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

namespace scribreg {

namespace {

std::string trim(const std::string& s)
{
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos)
        return {};
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

bool parse_bool(const std::string& key, const std::string& v)
{
    if (v == "1" || v == "true" || v == "on" || v == "yes")
        return true;
    if (v == "0" || v == "false" || v == "off" || v == "no")
        return false;
    throw UsageError("bad boolean for " + key + ": '" + v + "'");
}

double parse_double(const std::string& key, const std::string& v)
{
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size())
        throw UsageError("bad number for " + key + ": '" + v + "'");
    return out;
}

long long parse_int(const std::string& key, const std::string& v)
{
    std::size_t used = 0;
    long long out = 0;
    try {
        out = std::stoll(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size())
        throw UsageError("bad integer for " + key + ": '" + v + "'");
    return out;
}

void add_scaled(Field& acc, const Field& g, double s)
{
    auto& a = acc.values();
    const auto& b = g.values();
    for (std::size_t k = 0; k < a.size(); ++k)
        a[k] += s * b[k];
}

void require_finite(double v, const char* term, const std::string& scene)
{
    if (!std::isfinite(v))
        throw NumericalError(std::string("non-finite ") + term + " loss (" + std::to_string(v) + ") on scene " + scene);
}

// Shortest text that parses back to the same double.
std::string exact(double v)
{
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

std::string fmt(double v)
{
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
}

}  // namespace

std::string to_string(SupervisionSource s)
{
    switch (s) {
    case SupervisionSource::Pseudo:
        return "pseudo";
    case SupervisionSource::GroundTruthScribbles:
        return "groundtruth_scribbles";
    case SupervisionSource::Both:
        return "both";
    }
    return "pseudo";
}

SupervisionSource parse_supervision_source(const std::string& s)
{
    if (s == "pseudo")
        return SupervisionSource::Pseudo;
    if (s == "groundtruth_scribbles")
        return SupervisionSource::GroundTruthScribbles;
    if (s == "both")
        return SupervisionSource::Both;
    throw UsageError("supervision_source must be pseudo, groundtruth_scribbles or both");
}

void TrainConfig::validate() const
{
    if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0))
        throw UsageError("loss weights must be non-negative");
    if (!(gamma > 0.0 && gamma < 1.0))
        throw UsageError("gamma must lie in (0, 1)");
    if (r < 1)
        throw UsageError("window radius must be >= 1");
    kernel().validate();
    if (!(lr > 0.0) || !(momentum >= 0.0 && momentum < 1.0))
        throw UsageError("learning rate must be positive and momentum in [0, 1)");
    if (iterations < 0 || batch_size < 1)
        throw UsageError("iterations must be >= 0 and batch_size >= 1");
    if (hidden < 1 || feat_dim < 1 || patch < 1 || patch % 2 == 0)
        throw UsageError("invalid model dimensions");
    if (eval_every < 0)
        throw UsageError("eval_every must be >= 0");
}

void TrainConfig::set(const std::string& key, const std::string& raw)
{
    const std::string v = trim(raw);
    if (key == "lambda1") lambda1 = parse_double(key, v);
    else if (key == "lambda2") lambda2 = parse_double(key, v);
    else if (key == "r") r = static_cast<int>(parse_int(key, v));
    else if (key == "gamma") gamma = parse_double(key, v);
    else if (key == "sigma1") sigma1 = parse_double(key, v);
    else if (key == "sigma2") sigma2 = parse_double(key, v);
    else if (key == "sigma3") sigma3 = parse_double(key, v);
    else if (key == "lr") lr = parse_double(key, v);
    else if (key == "momentum") momentum = parse_double(key, v);
    else if (key == "iterations") iterations = static_cast<int>(parse_int(key, v));
    else if (key == "batch_size") batch_size = static_cast<int>(parse_int(key, v));
    else if (key == "seed") seed = static_cast<std::uint64_t>(parse_int(key, v));
    else if (key == "enable_dfr") enable_dfr = parse_bool(key, v);
    else if (key == "enable_fd") enable_fd = parse_bool(key, v);
    else if (key == "enable_fr") enable_fr = parse_bool(key, v);
    else if (key == "feature_in_kernel") feature_in_kernel = parse_bool(key, v);
    else if (key == "color_in_kernel") color_in_kernel = parse_bool(key, v);
    else if (key == "supervision_source") supervision_source = parse_supervision_source(v);
    else if (key == "hidden") hidden = static_cast<int>(parse_int(key, v));
    else if (key == "feat_dim") feat_dim = static_cast<int>(parse_int(key, v));
    else if (key == "patch") patch = static_cast<int>(parse_int(key, v));
    else if (key == "eval_every") eval_every = static_cast<int>(parse_int(key, v));
    else throw UsageError("unknown config key '" + key + "'");
}

std::string TrainConfig::to_text() const
{
    std::ostringstream os;
    os << "lambda1=" << exact(lambda1) << "\nlambda2=" << exact(lambda2) << "\nr=" << r << "\ngamma=" << exact(gamma)
       << "\nsigma1=" << exact(sigma1) << "\nsigma2=" << exact(sigma2) << "\nsigma3=" << exact(sigma3)
       << "\nlr=" << exact(lr) << "\nmomentum=" << exact(momentum) << "\niterations=" << iterations
       << "\nbatch_size=" << batch_size << "\nseed=" << seed << "\nenable_dfr=" << enable_dfr
       << "\nenable_fd=" << enable_fd << "\nenable_fr=" << enable_fr << "\nfeature_in_kernel=" << feature_in_kernel
       << "\ncolor_in_kernel=" << color_in_kernel << "\nsupervision_source=" << to_string(supervision_source)
       << "\nhidden=" << hidden << "\nfeat_dim=" << feat_dim << "\npatch=" << patch << "\neval_every=" << eval_every
       << "\n";
    return os.str();
}

TrainConfig parse_config(const std::string& text, TrainConfig base)
{
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError("config line " + std::to_string(lineno) + ": expected key=value");
        base.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    }
    base.validate();
    return base;
}

TrainConfig load_config_file(const std::filesystem::path& path, TrainConfig base)
{
    std::ifstream is(path);
    if (!is)
        throw IoError("cannot open config " + path.string());
    std::stringstream buf;
    buf << is.rdbuf();
    return parse_config(buf.str(), base);
}

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o)
{
    pce += o.pce;
    dfr += o.dfr;
    fd += o.fd;
    fr += o.fr;
    total += o.total;
    annotated += o.annotated;
    pseudo_coverage += o.pseudo_coverage;
    return *this;
}

LabelMask feature_supervision(const ProbMap& probs, const LabelMask& scribbles, const TrainConfig& config)
{
    if (config.supervision_source == SupervisionSource::GroundTruthScribbles)
        return scribbles;
    LabelMask pseudo = select_pseudo_labels(probs, config.gamma).labels;
    if (config.supervision_source == SupervisionSource::Both) {
        for (std::size_t p = 0; p < pseudo.labels.size(); ++p)
            if (scribbles[p] != kIgnore)
                pseudo[p] = scribbles[p];
    }
    return pseudo;
}

SceneGradient scene_objective(const TwoHeadNet& net, const Scene& scene, const PairWindow& window,
                              const TrainConfig& config, const FeatMap* kernel_features)
{
    const auto fwd = net.forward(scene.image);
    const auto kernel = config.kernel();
    const GridImage kernel_image = normalize_rgb(scene.image);

    SceneGradient out;
    auto& losses = out.losses;
    const auto pce = partial_ce(fwd.probs, scene.scribbles);
    require_finite(pce.value, "pce", scene.id);
    losses.pce = pce.value;
    losses.annotated = scene.scribbles.labeled_count();
    Field grad_logits = pce.grad;
    Field grad_feat(fwd.feat.shape(), fwd.feat.channels());

    if (config.enable_dfr) {
        const auto dfr = dfr_loss(fwd.probs, kernel_image, kernel_features ? *kernel_features : fwd.feat, window, kernel,
                                  {config.color_in_kernel, config.feature_in_kernel});
        require_finite(dfr.value, "dfr", scene.id);
        losses.dfr = dfr.value;
        add_scaled(grad_logits, dfr.grad, config.lambda1);
    }

    const LabelMask supervision = feature_supervision(fwd.probs, scene.scribbles, config);
    losses.pseudo_coverage =
        static_cast<double>(supervision.labeled_count()) / static_cast<double>(supervision.labels.size());
    if (config.enable_fd || config.enable_fr) {
        const auto relations = build_relations(supervision, window, 0);
        if (config.enable_fd) {
            const auto fd = feature_distance_loss(fwd.feat, relations);
            require_finite(fd.value, "fd", scene.id);
            losses.fd = fd.value;
            add_scaled(grad_feat, fd.grad, config.lambda2);
        }
        if (config.enable_fr) {
            const auto fr = feature_reg_loss(fwd.feat, kernel_image, relations, kernel);
            require_finite(fr.value, "fr", scene.id);
            losses.fr = fr.value;
            add_scaled(grad_feat, fr.grad, config.lambda2);
        }
    }
    losses.total = losses.pce + config.lambda1 * losses.dfr + config.lambda2 * (losses.fd + losses.fr);
    require_finite(losses.total, "total", scene.id);
    out.grads = net.backward(grad_logits, grad_feat, fwd.cache);
    return out;
}

std::string MetricsRecord::to_json() const
{
    nlohmann::ordered_json j;
    j["iteration"] = iteration;
    j["pce"] = losses.pce;
    j["dfr"] = losses.dfr;
    j["fd"] = losses.fd;
    j["fr"] = losses.fr;
    j["total"] = losses.total;
    j["annotated"] = losses.annotated;
    j["pseudo_coverage"] = losses.pseudo_coverage;
    j["val_miou"] = val_miou ? nlohmann::ordered_json(*val_miou) : nlohmann::ordered_json(nullptr);
    return j.dump();
}

IouReport evaluate(const TwoHeadNet& net, std::span<const Scene> scenes, int classes)
{
    if (scenes.empty())
        throw UsageError("evaluate needs at least one scene");
    std::vector<LabelMask> predictions(scenes.size());
    parallel_for(scenes.size(), [&](std::size_t k) { predictions[k] = argmax_labels(net.forward(scenes[k].image).probs); });
    ConfusionMatrix cm(classes);
    for (std::size_t k = 0; k < scenes.size(); ++k)
        cm.add(predictions[k], scenes[k].dense);
    return cm.report();
}

Trainer::Trainer(TrainConfig config, int classes)
    : config_(config), classes_(classes), net_(config.model(classes), config.seed),
      velocity_(ParamSet::zeros(config.model(classes)))
{
    config_.validate();
}

const PairWindow& Trainer::window_for(GridShape shape)
{
    auto& slot = windows_[{shape.h, shape.w}];
    if (!slot)
        slot = std::make_unique<PairWindow>(shape, config_.r);
    return *slot;
}

MetricsRecord Trainer::train_step(std::span<const Scene* const> batch)
{
    if (batch.empty())
        throw UsageError("train_step needs a non-empty batch");
    for (const auto* s : batch)
        window_for(s->image.shape());

    std::vector<SceneGradient> results(batch.size());
    parallel_for(batch.size(), [&](std::size_t k) {
        results[k] = scene_objective(net_, *batch[k], *windows_.at({batch[k]->image.shape().h, batch[k]->image.shape().w}),
                                     config_);
    });

    MetricsRecord rec;
    rec.iteration = ++iteration_;
    ParamSet grads = std::move(results[0].grads);
    rec.losses = results[0].losses;
    for (std::size_t k = 1; k < results.size(); ++k) {
        grads += results[k].grads;
        rec.losses += results[k].losses;
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    grads *= inv;
    const auto annotated = rec.losses.annotated;
    rec.losses.pce *= inv;
    rec.losses.dfr *= inv;
    rec.losses.fd *= inv;
    rec.losses.fr *= inv;
    rec.losses.total *= inv;
    rec.losses.pseudo_coverage *= inv;
    rec.losses.annotated = annotated;

    velocity_ *= config_.momentum;
    velocity_ += grads;
    ParamSet step = velocity_;
    step *= -config_.lr;
    net_.mutable_params() += step;
    return rec;
}

TrainResult train(const TrainConfig& config, const Dataset& data, const MetricsSink& sink)
{
    config.validate();
    if (data.train.empty())
        throw UsageError("training set is empty");
    Trainer trainer(config, data.classes);
    std::mt19937_64 rng(config.seed ^ 0xb47c4ULL);
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t batch = std::min<std::size_t>(config.batch_size, order.size());

    TrainResult result{trainer.net(), {}, {}};
    std::vector<const Scene*> picked(batch);
    for (int it = 0; it < config.iterations; ++it) {
        // Partial Fisher-Yates: the first `batch` entries are a uniform sample without replacement.
        for (std::size_t k = 0; k < batch; ++k) {
            const std::size_t j = std::uniform_int_distribution<std::size_t>(k, order.size() - 1)(rng);
            std::swap(order[k], order[j]);
            picked[k] = &data.train[order[k]];
        }
        auto rec = trainer.train_step(picked);
        const bool last = it + 1 == config.iterations;
        if (!data.val.empty() && (last || (config.eval_every > 0 && rec.iteration % config.eval_every == 0)))
            rec.val_miou = evaluate(trainer.net(), data.val, data.classes).miou;
        if (sink)
            sink(rec);
        result.history.push_back(rec);
    }
    result.net = trainer.net();
    if (!data.val.empty())
        result.val = evaluate(result.net, data.val, data.classes);
    return result;
}

std::vector<AblationResult> run_ablation(const TrainConfig& base, std::span<const AblationRow> rows, const Dataset& data)
{
    std::vector<AblationResult> out;
    for (const auto& row : rows) {
        TrainConfig cfg = base;
        for (const auto& [k, v] : row.overrides)
            cfg.set(k, v);
        cfg.validate();
        auto trained = train(cfg, data);
        out.push_back({row.name, cfg, trained.val});
    }
    return out;
}

std::vector<AblationRow> loss_ablation_rows()
{
    return {
        {"pce", {{"enable_dfr", "0"}, {"enable_fd", "0"}, {"enable_fr", "0"}}},
        {"pce+dfr", {{"enable_dfr", "1"}, {"enable_fd", "0"}, {"enable_fr", "0"}, {"feature_in_kernel", "1"}}},
        {"pce+dfr+fd", {{"enable_dfr", "1"}, {"enable_fd", "1"}, {"enable_fr", "0"}, {"feature_in_kernel", "1"}}},
        {"pce+dfr+fd+fr", {{"enable_dfr", "1"}, {"enable_fd", "1"}, {"enable_fr", "1"}, {"feature_in_kernel", "1"}}},
    };
}

std::vector<AblationRow> kernel_ablation_rows()
{
    return {
        // Rows without the feature term drop the feature head's losses entirely.
        {"XY", {{"color_in_kernel", "0"}, {"feature_in_kernel", "0"}, {"enable_fd", "0"}, {"enable_fr", "0"}}},
        {"XY+RGB", {{"color_in_kernel", "1"}, {"feature_in_kernel", "0"}, {"enable_fd", "0"}, {"enable_fr", "0"}}},
        {"XY+Feature", {{"color_in_kernel", "0"}, {"feature_in_kernel", "1"}, {"enable_fd", "1"}, {"enable_fr", "1"}}},
        {"XY+RGB+Feature", {{"color_in_kernel", "1"}, {"feature_in_kernel", "1"}, {"enable_fd", "1"}, {"enable_fr", "1"}}},
    };
}

std::vector<AblationRow> supervision_ablation_rows()
{
    return {
        {"GT", {{"supervision_source", "groundtruth_scribbles"}}},
        {"GT+M", {{"supervision_source", "both"}}},
        {"M", {{"supervision_source", "pseudo"}}},
    };
}

AblationGrid parse_ablation_grid(const std::string& text, TrainConfig base)
{
    AblationGrid grid;
    std::istringstream is(text);
    std::string line;
    std::string base_text;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.rfind("[row ", 0) != 0)
                throw UsageError("grid line " + std::to_string(lineno) + ": expected [row NAME]");
            const std::string name = trim(line.substr(5, line.size() - 6));
            if (name.empty())
                throw UsageError("grid line " + std::to_string(lineno) + ": empty row name");
            grid.rows.push_back({name, {}});
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError("grid line " + std::to_string(lineno) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        TrainConfig probe;
        probe.set(key, value);  // rejects unknown keys early
        if (grid.rows.empty())
            base_text += key + "=" + value + "\n";
        else
            grid.rows.back().overrides[key] = value;
    }
    if (grid.rows.empty())
        throw UsageError("grid defines no rows");
    grid.base = parse_config(base_text, base);
    return grid;
}

std::string iou_csv(const IouReport& report)
{
    std::ostringstream os;
    os << "class,iou\n";
    for (std::size_t c = 0; c < report.per_class.size(); ++c)
        os << c << ',' << (std::isnan(report.per_class[c]) ? std::string("nan") : fmt(report.per_class[c])) << '\n';
    os << "mIoU," << fmt(report.miou) << '\n';
    return os.str();
}

std::string ablation_csv(std::span<const AblationResult> results, int classes)
{
    std::ostringstream os;
    os << "row,miou";
    for (int c = 0; c < classes; ++c)
        os << ",iou_" << c;
    os << '\n';
    for (const auto& r : results) {
        os << r.name << ',' << fmt(r.val.miou);
        for (int c = 0; c < classes; ++c) {
            const double v = c < static_cast<int>(r.val.per_class.size()) ? r.val.per_class[c] : std::nan("");
            os << ',' << (std::isnan(v) ? std::string("nan") : fmt(v));
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace scribreg
