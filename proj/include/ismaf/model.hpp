#pragma once

// The full network: encoders, bridging, fusion and classifier wired
// together for one mini-batch of posts.

#include "ismaf/bridging.hpp"
#include "ismaf/config.hpp"
#include "ismaf/encoders.hpp"
#include "ismaf/fusion.hpp"
#include "ismaf/social_graph.hpp"

#include <random>
#include <span>
#include <vector>

namespace ismaf {

// Input sizes fixed when the model is created.
struct InputShape {
    int vocab_size = 0;
    std::size_t seq_len = 0;
    std::size_t visual_dim = 0;

    friend bool operator==(const InputShape&, const InputShape&) = default;
};

InputShape input_shape_of(const Dataset& data, std::size_t min_seq_len = 5);

struct Model {
    TrainConfig config;
    InputShape input;
    ad::ParamStore params;

    TextEncoderConfig text_config() const;
    GatConfig gat_config() const;
    AttentionConfig attention_config() const;
};

// Parameters are seeded from config.seed.
Model init_model(const TrainConfig& config, const InputShape& input);

// The social graph over `data` as seen by this model's frozen word embeddings.
SocialGraph build_graph(const Model& model, const Dataset& data);

struct ForwardOptions {
    bool training = false;           // enables dropout; needs rng
    std::mt19937_64* rng = nullptr;
    bool compute_losses = true;
    bool zero_social = false;        // replace R_G by zeros
    const Tensor* frozen_fusion_input = nullptr;  // see adaptive_fuse
};

struct ForwardResult {
    ad::Var rumor_prob;  // batch x 1
    LossTerms terms;
    ad::Var total;
    LossBreakdown breakdown;
    bool scl_skipped = false;
    Tensor fusion_input;  // X fed to adaptive fusion; empty for the alternates
};

// `posts` index data.posts. Losses follow config.effective_lambda(): a
// disabled component is not computed and reads 0 in the breakdown.
ForwardResult forward(ad::Tape& tape, const Model& model, const Dataset& data, const SocialGraph& graph,
                      std::span<const std::size_t> posts, const ForwardOptions& options);
// Same network evaluated with another parameter store of the same layout.
ForwardResult forward(ad::Tape& tape, const Model& model, const ad::ParamStore& params, const Dataset& data,
                      const SocialGraph& graph, std::span<const std::size_t> posts, const ForwardOptions& options);

// Rumor probabilities without dropout or gradient recording.
std::vector<double> predict(const Model& model, const Dataset& data, const SocialGraph& graph,
                            std::span<const std::size_t> posts, bool zero_social = false);

} // namespace ismaf
