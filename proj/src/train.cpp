#include "ismaf/train.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ismaf {

using namespace ad;

// ============================================================================
// Metrics
// ============================================================================

Confusion confusion_of(std::span<const int> predicted, std::span<const int> actual)
{
    if (predicted.size() != actual.size()) throw DimensionError("confusion_of: size mismatch");
    Confusion c;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const bool p = predicted[i] == 1, a = actual[i] == 1;
        if (p && a) ++c.tp;
        else if (p) ++c.fp;
        else if (a) ++c.fn;
        else ++c.tn;
    }
    return c;
}

MetricsReport metrics_from(const Confusion& c)
{
    auto ratio = [](std::size_t num, std::size_t den) {
        return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    MetricsReport r;
    r.counts = c;
    r.acc = ratio(c.tp + c.tn, c.total());
    r.precision = ratio(c.tp, c.tp + c.fp);
    r.recall = ratio(c.tp, c.tp + c.fn);
    r.f1 = r.precision + r.recall == 0.0 ? 0.0 : 2.0 * r.precision * r.recall / (r.precision + r.recall);
    return r;
}

std::string format_report(const MetricsReport& r)
{
    std::string out = "ismaf-metrics 1\n";
    out += fmt::format("split {}\nsamples {}\n", r.split.empty() ? "-" : r.split, r.counts.total());
    out += fmt::format("acc {:.4f}\nprecision {:.4f}\nrecall {:.4f}\nf1 {:.4f}\n", r.acc, r.precision, r.recall, r.f1);
    out += fmt::format("tp {}\nfp {}\ntn {}\nfn {}\n", r.counts.tp, r.counts.fp, r.counts.tn, r.counts.fn);
    out += fmt::format("epochs {}\n", r.history.size());
    for (std::size_t e = 0; e < r.history.size(); ++e) {
        const LossBreakdown& l = r.history[e];
        out += fmt::format("epoch {} total {:.6f} ce {:.6f} scl {:.6f} cmca {:.6f} ml {:.6f} af {:.6f}\n", e + 1,
                           l.total, l.ce, l.scl, l.cmca, l.ml, l.af);
    }
    return out;
}

// ============================================================================
// Optimizer
// ============================================================================

void Adam::step(ParamStore& params, const GradMap& grads, double lr)
{
    ++t_;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (const auto& [name, g] : grads) {
        if (!params.trainable(name)) continue;
        Tensor& w = params.mutable_value(name);
        auto [it, fresh] = moments_.try_emplace(name);
        if (fresh) it->second = {Tensor::zeros_like(w), Tensor::zeros_like(w)};
        auto m = it->second.first.data(), v = it->second.second.data();
        auto wd = w.data();
        const auto gd = g.data();
        for (std::size_t i = 0; i < wd.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * gd[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * gd[i] * gd[i];
            wd[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
    }
}

// ============================================================================
// Training
// ============================================================================

std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> indices, std::size_t batch_size,
                                                   std::mt19937_64& rng)
{
    if (batch_size == 0) throw std::invalid_argument("make_batches: batch size must be positive");
    std::shuffle(indices.begin(), indices.end(), rng);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < indices.size(); i += batch_size)
        batches.emplace_back(indices.begin() + static_cast<std::ptrdiff_t>(i),
                             indices.begin() + static_cast<std::ptrdiff_t>(std::min(indices.size(), i + batch_size)));
    if (batches.size() > 1 && batches.back().size() == 1) {
        batches[batches.size() - 2].push_back(batches.back().front());
        batches.pop_back();
    }
    return batches;
}

namespace {

std::vector<int> labels_of(const Dataset& data)
{
    std::vector<int> labels;
    labels.reserve(data.posts.size());
    for (const auto& p : data.posts) labels.push_back(p.label);
    return labels;
}

bool finite(const LossBreakdown& l)
{
    return std::isfinite(l.total) && std::isfinite(l.ce) && std::isfinite(l.scl) && std::isfinite(l.cmca) &&
           std::isfinite(l.ml) && std::isfinite(l.af);
}

bool finite(const GradMap& grads)
{
    return std::all_of(grads.begin(), grads.end(), [](const auto& kv) { return kv.second.all_finite(); });
}

double accuracy(const Model& model, const Dataset& data, const SocialGraph& graph,
                std::span<const std::size_t> posts)
{
    return evaluate(model, data, graph, posts).acc;
}

} // namespace

TrainResult train(const TrainConfig& config, const Dataset& data, const TrainHooks& hooks)
{
    config.validate();
    data.validate();
    const SplitAssignment split = split_dataset(labels_of(data), config.split, config.seed);
    const auto train_idx = split.indices(Split::train);
    const auto val_idx = split.indices(Split::val);

    Model model = init_model(config, input_shape_of(data));
    const SocialGraph graph = build_graph(model, data);

    TrainResult result{model, {}, {}, 0, std::nullopt};
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32), 0x5eedu};
    std::mt19937_64 rng(seq);
    Adam adam;
    double best_acc = -1.0;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const double lr = config.lr * std::pow(config.lr_decay, static_cast<double>(epoch - 1));
        LossBreakdown sum;
        const auto batches = make_batches(train_idx, config.batch_size, rng);
        for (const auto& batch : batches) {
            Tape tape;
            ForwardOptions opts;
            opts.training = true;
            opts.rng = &rng;
            const ForwardResult f = forward(tape, model, data, graph, batch, opts);
            GradMap grads;
            if (finite(f.breakdown)) grads = tape.backward(f.total);
            if (!finite(f.breakdown) || !finite(grads)) {
                result.error = fmt::format("non-finite loss or gradient at epoch {}; returning the epoch {} checkpoint",
                                           epoch, result.best_epoch);
                return result;
            }
            if (hooks.before_update) hooks.before_update(model.params, grads);
            adam.step(model.params, grads, lr);
            sum.ce += f.breakdown.ce;
            sum.scl += f.breakdown.scl;
            sum.cmca += f.breakdown.cmca;
            sum.ml += f.breakdown.ml;
            sum.af += f.breakdown.af;
            sum.total += f.breakdown.total;
        }
        const double nb = static_cast<double>(batches.size());
        const LossBreakdown mean{sum.ce / nb, sum.scl / nb, sum.cmca / nb, sum.ml / nb, sum.af / nb, sum.total / nb};
        const double val_acc = accuracy(model, data, graph, val_idx);
        result.history.push_back(mean);
        result.val_acc.push_back(val_acc);
        if (val_acc > best_acc) {
            best_acc = val_acc;
            result.best_epoch = epoch;
            result.model.params = model.params;
        }
        if (hooks.on_epoch) hooks.on_epoch({epoch, mean, val_acc, lr});
    }
    return result;
}

MetricsReport evaluate(const Model& model, const Dataset& data, const SocialGraph& graph,
                       std::span<const std::size_t> posts, bool zero_social)
{
    if (posts.empty()) throw std::invalid_argument("evaluate: empty split");
    const std::vector<double> probs = predict(model, data, graph, posts, zero_social);
    std::vector<int> predicted, actual;
    for (std::size_t i = 0; i < posts.size(); ++i) {
        predicted.push_back(predict_label(probs[i]));
        actual.push_back(data.posts[posts[i]].label);
    }
    return metrics_from(confusion_of(predicted, actual));
}

MetricsReport evaluate(const Model& model, const Dataset& data, Split split, bool zero_social)
{
    data.validate();
    const SplitAssignment assignment = split_dataset(labels_of(data), model.config.split, model.config.seed);
    const SocialGraph graph = build_graph(model, data);
    MetricsReport r = evaluate(model, data, graph, assignment.indices(split), zero_social);
    r.split = split_name(split);
    return r;
}

// ============================================================================
// Sweep
// ============================================================================

std::vector<double> SweepRange::values() const
{
    if (!std::isfinite(start) || !std::isfinite(stop) || !std::isfinite(step))
        throw std::invalid_argument("sweep range must be finite");
    if (stop < start) throw std::invalid_argument("sweep range: stop is below start");
    if (stop == start) return {start};
    if (!(step > 0)) throw std::invalid_argument("sweep range: step must be positive");
    const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
    std::vector<double> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(start + static_cast<double>(i) * step);
    return out;
}

SweepRange parse_range(const std::string& text)
{
    const auto a = text.find(':');
    const auto b = a == std::string::npos ? a : text.find(':', a + 1);
    if (b == std::string::npos) throw std::invalid_argument("range '" + text + "' is not start:stop:step");
    try {
        std::size_t used = 0;
        SweepRange r;
        const std::string parts[3] = {text.substr(0, a), text.substr(a + 1, b - a - 1), text.substr(b + 1)};
        double* dst[3] = {&r.start, &r.stop, &r.step};
        for (int i = 0; i < 3; ++i) {
            *dst[i] = std::stod(parts[i], &used);
            if (used != parts[i].size()) throw std::invalid_argument(parts[i]);
        }
        r.values();
        return r;
    } catch (const std::logic_error&) {
        throw std::invalid_argument("range '" + text + "' is not start:stop:step with numeric parts");
    }
}

std::vector<SweepRow> sweep_lambda(const TrainConfig& config, const Dataset& data, int index, const SweepRange& range,
                                   const std::function<void(const SweepRow&)>& on_row)
{
    if (index < 1 || index > 4) throw std::invalid_argument("lambda index must be 1, 2, 3 or 4");
    std::vector<SweepRow> rows;
    for (double value : range.values()) {
        TrainConfig c = config;
        c.epochs = config.sweep_epochs;
        double* slots[4] = {&c.lambda.scl, &c.lambda.cmca, &c.lambda.ml, &c.lambda.af};
        *slots[index - 1] = value;
        const TrainResult tr = train(c, data);
        if (tr.error) throw std::runtime_error("sweep at lambda" + std::to_string(index) + " = " +
                                               fmt::format("{}", value) + ": " + *tr.error);
        const MetricsReport m = evaluate(tr.model, data, Split::test);
        rows.push_back({value, m.acc, m.f1});
        if (on_row) on_row(rows.back());
    }
    return rows;
}

std::string format_sweep(int index, const std::vector<SweepRow>& rows)
{
    std::string out = fmt::format("lambda{}\tacc\tf1\n", index);
    for (const SweepRow& r : rows) out += fmt::format("{:.4f}\t{:.4f}\t{:.4f}\n", r.value, r.acc, r.f1);
    return out;
}

} // namespace ismaf
