#include "ismaf/gradient_suite.hpp"
#include "ismaf/serialize.hpp"
#include "ismaf/train.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

using namespace ismaf;

namespace {

constexpr double kGradTolerance = 1e-4;

TrainConfig config_from(const std::string& path, const std::vector<std::string>& overrides)
{
    TrainConfig cfg = path.empty() ? TrainConfig{} : load_config(path);
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
        set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

void write_text(const std::string& path, const std::string& text)
{
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out || !(out << text)) throw std::runtime_error("cannot write " + path);
}

int run_synth(const SyntheticSpec& spec, const std::string& out)
{
    const Dataset data = generate_synthetic(spec);
    save_dataset(data, out);
    fmt::print("wrote {} posts, {} comments, {} users to {}\n", data.posts.size(), data.comments.size(),
               data.users.size(), out);
    return 0;
}

int run_train(const TrainConfig& cfg, const std::string& data_dir, const std::string& model_out,
              const std::string& report, bool quiet)
{
    const Dataset data = load_dataset(data_dir);
    TrainHooks hooks;
    if (!quiet)
        hooks.on_epoch = [](const EpochLog& e) {
            fmt::print(stderr, "epoch {:3d}  lr {:.6f}  loss {:.4f} (ce {:.4f} scl {:.4f} cmca {:.4f} ml {:.4f} af {:.4f})  val_acc {:.4f}\n",
                       e.epoch, e.lr, e.mean.total, e.mean.ce, e.mean.scl, e.mean.cmca, e.mean.ml, e.mean.af,
                       e.val_acc);
        };
    const TrainResult result = train(cfg, data, hooks);
    save_model(result.model, model_out);
    MetricsReport test = evaluate(result.model, data, Split::test);
    test.history = result.history;
    write_text(report, format_report(test));
    if (!quiet) fmt::print(stderr, "best epoch {}, model written to {}\n", result.best_epoch, model_out);
    if (result.error) {
        fmt::print(stderr, "error: training diverged: {}\n", *result.error);
        return 2;
    }
    return 0;
}

int run_eval(const std::string& model_path, const std::string& data_dir, const std::string& split,
             const std::string& report, bool zero_social)
{
    const Model model = load_model(model_path);
    const Dataset data = load_dataset(data_dir);
    write_text(report, format_report(evaluate(model, data, parse_split(split), zero_social)));
    return 0;
}

int run_gradcheck(const GradientSuiteOptions& options)
{
    const auto start = std::chrono::steady_clock::now();
    bool ok = true;
    for (const GradientCase& c : run_gradient_suite(options)) {
        const bool pass = c.result.max_relative_error < kGradTolerance;
        ok = ok && pass;
        fmt::print("{:8s} max_rel_err {:.3e}  checked {:5d}  nonsmooth {:3d}  worst {}[{}]  {}\n", c.loss,
                   c.result.max_relative_error, c.result.entries_checked, c.result.nonsmooth_skipped,
                   c.result.worst_param, c.result.worst_index, pass ? "ok" : "FAIL");
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    fmt::print("seed {}  {:.2f} s  {}\n", options.seed, secs, ok ? "pass" : "fail");
    return ok ? 0 : 1;
}

int run_sweep(const TrainConfig& cfg, const std::string& data_dir, int index, const std::string& range,
              const std::string& out)
{
    const Dataset data = load_dataset(data_dir);
    const auto rows = sweep_lambda(cfg, data, index, parse_range(range), [&](const SweepRow& r) {
        fmt::print(stderr, "lambda{} = {:.4f}: acc {:.4f} f1 {:.4f}\n", index, r.value, r.acc, r.f1);
    });
    write_text(out, format_sweep(index, rows));
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"ismaf: multimodal rumor detection from text, image and social context"};
    app.require_subcommand(1);

    SyntheticSpec spec;
    std::string synth_out;
    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
    synth->add_option("--n", spec.n, "number of posts")->check(CLI::Range(20, 1000000));
    synth->add_option("--d", spec.d, "visual feature width")->check(CLI::PositiveNumber);
    synth->add_option("--separation", spec.separation, "class signal strength")->check(CLI::NonNegativeNumber);
    synth->add_option("--graph-noise", spec.graph_noise, "fraction of randomly wired social links")
        ->check(CLI::Range(0.0, 1.0));
    synth->add_option("--seed", spec.seed, "random seed");
    synth->add_option("--vocab", spec.vocab_size, "vocabulary size")->check(CLI::Range(8, 1000000));
    synth->add_option("--seq-len", spec.seq_len, "tokens per post")->check(CLI::PositiveNumber);
    synth->add_option("--out", synth_out, "output directory")->required();

    std::string config_path, data_dir, model_path, report_path, split = "test", range = "0:1:0.1";
    std::vector<std::string> overrides;
    bool quiet = false, zero_social = false;
    int lambda_index = 0;

    auto* trn = app.add_subcommand("train", "train a model");
    trn->add_option("--config", config_path, "flat key = value config file");
    trn->add_option("--set", overrides, "override a config key (key=value), repeatable");
    trn->add_option("--data", data_dir, "dataset directory")->required();
    trn->add_option("--out", model_path, "model file to write")->required();
    trn->add_option("--report", report_path, "test metrics report (default stdout)");
    trn->add_flag("--quiet", quiet, "no per-epoch progress");

    auto* ev = app.add_subcommand("eval", "evaluate a model on one split");
    ev->add_option("--model", model_path, "model file")->required();
    ev->add_option("--data", data_dir, "dataset directory")->required();
    ev->add_option("--split", split, "train, val or test");
    ev->add_option("--report", report_path, "report file (default stdout)");
    ev->add_flag("--zero-social", zero_social, "replace social representations by zeros");

    GradientSuiteOptions grad;
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every loss term");
    gc->add_option("--seed", grad.seed, "random seed");
    gc->add_option("--step", grad.h, "central difference step")->check(CLI::PositiveNumber);

    auto* sw = app.add_subcommand("sweep", "train and test across values of one loss weight");
    sw->add_option("--lambda-index", lambda_index, "which weight, 1..4")->required()->check(CLI::Range(1, 4));
    sw->add_option("--range", range, "start:stop:step, inclusive");
    sw->add_option("--config", config_path, "flat key = value config file");
    sw->add_option("--set", overrides, "override a config key (key=value), repeatable");
    sw->add_option("--data", data_dir, "dataset directory")->required();
    sw->add_option("--out", report_path, "table output (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) return run_synth(spec, synth_out);
        if (*trn) return run_train(config_from(config_path, overrides), data_dir, model_path, report_path, quiet);
        if (*ev) return run_eval(model_path, data_dir, split, report_path, zero_social);
        if (*gc) return run_gradcheck(grad);
        if (*sw) return run_sweep(config_from(config_path, overrides), data_dir, lambda_index, range, report_path);
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 1;
    }
    return 1;
}
