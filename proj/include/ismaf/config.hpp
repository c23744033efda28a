#pragma once

// Training configuration and its flat `key = value` text form.

#include "ismaf/data.hpp"
#include "ismaf/fusion.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ismaf {

struct TrainConfig {
    std::size_t d = 300;
    std::size_t heads = 8;
    std::size_t batch_size = 64;
    std::size_t epochs = 50;
    double lr = 0.002;
    double lr_decay = 0.98;
    double dropout = 0.5;
    double tau_scl = 0.5;
    double tau_cmca = 0.5;
    LossWeights lambda;
    double theta = 0.5;
    std::uint64_t seed = 0;
    SplitFractions split;

    bool use_mre = true;
    bool use_cmca = true;
    bool use_ml = true;
    bool use_af = true;
    FusionKind fusion = FusionKind::adaptive;

    std::size_t gat_layers = 2;
    std::size_t lift_tokens = 0;  // 0 picks the largest divisor of d up to 6
    std::vector<std::size_t> kernel_sizes{3, 4, 5};
    double leaky_slope = 0.2;
    bool connect_heterogeneous = true;
    std::size_t fusion_depth = 1;
    std::size_t common_dim = 0;   // 0 -> d
    std::size_t sweep_epochs = 10;

    // Throws std::invalid_argument naming the offending key.
    void validate() const;

    // The weights actually applied: a disabled component contributes 0.
    LossWeights effective_lambda() const;
    // The fusion actually run: with adaptive fusion disabled, IS-concat.
    FusionKind effective_fusion() const;
    std::size_t effective_lift_tokens() const;
    std::size_t effective_common_dim() const { return common_dim == 0 ? d : common_dim; }

    friend bool operator==(const TrainConfig&, const TrainConfig&);
};

// Applies one key. Unknown keys and malformed values throw.
void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);

// Lines of `key = value`; blank lines and `#` comments are ignored.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);

// Every key, one per line, in a form parse_config reads back exactly.
std::string config_to_text(const TrainConfig& cfg);

} // namespace ismaf
