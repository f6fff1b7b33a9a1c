#include "scribreg/data.hpp"
#include "scribreg/gradcheck.hpp"
#include "scribreg/model.hpp"
#include "scribreg/trainer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <regex>
#include <sstream>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitIo = 3;

const std::vector<std::string> kConfigKeys{
    "lambda1", "lambda2", "r", "gamma", "sigma1", "sigma2", "sigma3", "lr", "momentum", "iterations", "batch_size",
    "seed", "enable_dfr", "enable_fd", "enable_fr", "feature_in_kernel", "color_in_kernel", "supervision_source",
    "hidden", "feat_dim", "patch", "eval_every"};

scribreg::GridShape parse_size(const std::string& text)
{
    static const std::regex pattern(R"((\d+)x(\d+))");
    std::smatch m;
    if (!std::regex_match(text, m, pattern))
        throw scribreg::UsageError("size must look like HxW, got '" + text + "'");
    return scribreg::GridShape(std::stoi(m[1]), std::stoi(m[2]));
}

scribreg::TrainConfig build_config(const std::string& config_path, const std::map<std::string, std::string>& overrides)
{
    scribreg::TrainConfig cfg;
    if (!config_path.empty())
        cfg = scribreg::load_config_file(config_path);
    for (const auto& [key, value] : overrides)
        if (!value.empty())
            cfg.set(key, value);
    cfg.validate();
    return cfg;
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream os(path, std::ios::trunc);
    if (!os || !(os << text))
        throw scribreg::IoError("cannot write " + path.string());
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"scribreg: scribble-supervised segmentation with dynamic feature regularisation"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic scribble-segmentation dataset");
    std::string gen_out;
    int gen_scenes = 200;
    int gen_val = -1;
    std::string gen_size = "48x48";
    int gen_classes = 4;
    std::uint64_t gen_seed = 1;
    std::string gen_ambiguous = "off";
    double gen_fraction = 0.6;
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--scenes", gen_scenes, "training scenes")->check(CLI::NonNegativeNumber);
    gen->add_option("--val-scenes", gen_val, "validation scenes (default: scenes/4, at least 1)");
    gen->add_option("--size", gen_size, "image size HxW");
    gen->add_option("--classes", gen_classes, "class count including background (>= 2)");
    gen->add_option("--seed", gen_seed, "base seed");
    gen->add_option("--ambiguous", gen_ambiguous, "force a same-colour different-class touching pair per scene")
        ->check(CLI::IsMember({"on", "off"}));
    gen->add_option("--length-fraction", gen_fraction, "scribble length relative to region extent");

    // train
    auto* tr = app.add_subcommand("train", "train the two-head model");
    std::string tr_data, tr_config, tr_out;
    std::map<std::string, std::string> tr_overrides;
    tr->add_option("--data", tr_data, "dataset directory")->required();
    tr->add_option("--config", tr_config, "key=value config file");
    tr->add_option("--out", tr_out, "output directory for checkpoint.bin and metrics.jsonl")->required();
    for (const auto& key : kConfigKeys)
        tr->add_option("--" + key, tr_overrides[key], "override config key " + key)
            ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    // eval
    auto* ev = app.add_subcommand("eval", "per-class IoU and mIoU of a checkpoint as CSV");
    std::string ev_ckpt, ev_data, ev_split = "val";
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
    ev->add_option("--data", ev_data, "dataset directory")->required();
    ev->add_option("--split", ev_split, "train or val")->check(CLI::IsMember({"train", "val"}));

    // ablate
    auto* ab = app.add_subcommand("ablate", "train each row of an ablation grid and print a mIoU table");
    std::string ab_grid, ab_data, ab_config, ab_out;
    std::map<std::string, std::string> ab_overrides;
    ab->add_option("--grid", ab_grid, "grid file, or builtin: losses | kernels | supervision")->required();
    ab->add_option("--data", ab_data, "dataset directory")->required();
    ab->add_option("--config", ab_config, "base key=value config file (grid base lines apply on top)");
    ab->add_option("--out", ab_out, "also write the CSV here");
    for (const auto& key : kConfigKeys)
        ab->add_option("--" + key, ab_overrides[key], "override base config key " + key)
            ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "run oracle equivalence and finite-difference gradient checks");
    std::uint64_t gc_seed = 0;
    gc->add_option("--seed", gc_seed, "instance seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*gen) {
            if (gen_classes < 2)
                throw scribreg::UsageError("--classes must be >= 2 (background + at least one foreground class)");
            scribreg::DatasetSpec spec;
            spec.layout.size = parse_size(gen_size);
            spec.layout.classes = gen_classes;
            spec.layout.ambiguous = gen_ambiguous == "on";
            spec.train_scenes = gen_scenes;
            spec.val_scenes = gen_val >= 0 ? gen_val : std::max(1, gen_scenes / 4);
            spec.length_fraction = gen_fraction;
            spec.seed = gen_seed;
            const auto data = scribreg::generate_dataset(spec);
            scribreg::write_dataset(gen_out, data);
            std::printf("wrote %zu train + %zu val scenes to %s\nannotated fraction: %.4f\n", data.train.size(),
                        data.val.size(), gen_out.c_str(), data.annotated_fraction());
        } else if (*tr) {
            const auto cfg = build_config(tr_config, tr_overrides);
            const auto data = scribreg::load_dataset(tr_data);
            std::filesystem::create_directories(tr_out);
            std::ofstream metrics(std::filesystem::path(tr_out) / "metrics.jsonl", std::ios::trunc);
            if (!metrics)
                throw scribreg::IoError("cannot write metrics in " + tr_out);
            const auto result = scribreg::train(cfg, data, [&](const scribreg::MetricsRecord& rec) {
                metrics << rec.to_json() << '\n';
            });
            result.net.save(std::filesystem::path(tr_out) / "checkpoint.bin");
            write_text(std::filesystem::path(tr_out) / "config.txt", cfg.to_text());
            std::cout << scribreg::iou_csv(result.val);
        } else if (*ev) {
            const auto net = scribreg::TwoHeadNet::load(ev_ckpt);
            const auto data = scribreg::load_dataset(ev_data);
            if (data.classes != net.config().classes)
                throw scribreg::UsageError("checkpoint and dataset disagree on the class count");
            const auto& scenes = ev_split == "train" ? data.train : data.val;
            std::cout << scribreg::iou_csv(scribreg::evaluate(net, scenes, data.classes));
        } else if (*ab) {
            const auto base = build_config(ab_config, ab_overrides);
            scribreg::AblationGrid grid;
            if (ab_grid == "losses" || ab_grid == "kernels" || ab_grid == "supervision") {
                grid.base = base;
                grid.rows = ab_grid == "losses"    ? scribreg::loss_ablation_rows()
                            : ab_grid == "kernels" ? scribreg::kernel_ablation_rows()
                                                   : scribreg::supervision_ablation_rows();
            } else {
                std::ifstream is(ab_grid);
                if (!is)
                    throw scribreg::IoError("cannot open grid " + ab_grid);
                std::stringstream buf;
                buf << is.rdbuf();
                grid = scribreg::parse_ablation_grid(buf.str(), base);
            }
            const auto data = scribreg::load_dataset(ab_data);
            const auto results = scribreg::run_ablation(grid.base, grid.rows, data);
            const auto csv = scribreg::ablation_csv(results, data.classes);
            std::cout << csv;
            if (!ab_out.empty())
                write_text(ab_out, csv);
        } else if (*gc) {
            bool ok = true;
            for (const auto& r : scribreg::run_gradcheck(gc_seed)) {
                std::printf("[%s] %s: %.3e (tol %.1e)%s%s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.measured,
                            r.tolerance, r.detail.empty() ? "" : " ", r.detail.c_str());
                ok = ok && r.pass;
            }
            return ok ? kExitOk : kExitNumerical;
        }
    } catch (const scribreg::UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const scribreg::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const scribreg::IoError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return kExitIo;
    }
    return kExitOk;
}
