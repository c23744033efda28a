#pragma once

// Training loop, evaluation metrics and the loss-weight sweep.

#include "ismaf/model.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ismaf {

struct Confusion {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

    std::size_t total() const { return tp + fp + tn + fn; }
    friend bool operator==(const Confusion&, const Confusion&) = default;
};

// Rumor (label 1) is the positive class.
Confusion confusion_of(std::span<const int> predicted, std::span<const int> actual);

struct MetricsReport {
    std::string split;
    double acc = 0, precision = 0, recall = 0, f1 = 0;
    Confusion counts;
    std::vector<LossBreakdown> history;  // per-epoch means, empty when not from a training run

    friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

// Precision/recall are 0 when their denominators are; f1 is 0 when both are.
MetricsReport metrics_from(const Confusion& c);

// Structured text: one `key value` pair per line, metrics to 4 decimals.
std::string format_report(const MetricsReport& report);

struct Adam {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    // One bias-corrected step on every trainable entry that has a gradient.
    void step(ad::ParamStore& params, const ad::GradMap& grads, double lr);

private:
    std::map<std::string, std::pair<Tensor, Tensor>> moments_;
    std::size_t t_ = 0;
};

struct EpochLog {
    std::size_t epoch = 0;  // 1-based
    LossBreakdown mean;
    double val_acc = 0;
    double lr = 0;
};

struct TrainHooks {
    std::function<void(const EpochLog&)> on_epoch;
    // Runs after gradients are computed and before the optimizer step; the
    // place where adversarial perturbation training would go. Unused by default.
    std::function<void(ad::ParamStore&, ad::GradMap&)> before_update;
};

struct TrainResult {
    Model model;                          // parameters of the best validation epoch
    std::vector<LossBreakdown> history;   // per-epoch mean of the batch losses
    std::vector<double> val_acc;
    std::size_t best_epoch = 0;           // 0 when no epoch ran
    std::optional<std::string> error;     // set when training stopped on a non-finite loss
};

// Mini-batches are drawn without replacement from a per-epoch shuffle; a
// trailing batch of one post joins the previous batch.
std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> indices, std::size_t batch_size,
                                                   std::mt19937_64& rng);

TrainResult train(const TrainConfig& config, const Dataset& data, const TrainHooks& hooks = {});

MetricsReport evaluate(const Model& model, const Dataset& data, const SocialGraph& graph,
                       std::span<const std::size_t> posts, bool zero_social = false);
// Recomputes the split from the model's config and seed.
MetricsReport evaluate(const Model& model, const Dataset& data, Split split, bool zero_social = false);

struct SweepRange {
    double start = 0, stop = 1, step = 0.1;

    std::vector<double> values() const;  // start, start + step, ..., up to stop inclusive
};
SweepRange parse_range(const std::string& text);  // "start:stop:step"

struct SweepRow {
    double value = 0;
    double acc = 0;
    double f1 = 0;
};

// Trains once per value of lambda<index> (1..4) for config.sweep_epochs
// epochs and evaluates on the test split.
std::vector<SweepRow> sweep_lambda(const TrainConfig& config, const Dataset& data, int index, const SweepRange& range,
                                   const std::function<void(const SweepRow&)>& on_row = {});
std::string format_sweep(int index, const std::vector<SweepRow>& rows);

} // namespace ismaf
