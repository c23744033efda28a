#pragma once

// Unimodal encoders: text CNN, visual projection and the signed GAT that
// turns the social graph into per-post social representations.

#include "ismaf/ops.hpp"
#include "ismaf/social_graph.hpp"

#include <span>
#include <vector>

namespace ismaf {

// ---------------------------------------------------------------------------
// Text
// ---------------------------------------------------------------------------

struct TextEncoderConfig {
    int vocab_size = 0;
    std::size_t embed_dim = 0;
    std::size_t seq_len = 0;
    std::vector<std::size_t> kernel_sizes{3, 4, 5};
    std::vector<std::size_t> filters;  // per kernel size, sums to the output width

    std::size_t output_dim() const;
    void validate() const;
};

// Splits `d` output channels over the kernel sizes as evenly as possible,
// earlier kernels taking the remainder. seq_len is raised to the largest
// kernel size when shorter.
TextEncoderConfig make_text_config(int vocab_size, std::size_t d, std::size_t seq_len,
                                   std::vector<std::size_t> kernel_sizes = {3, 4, 5});

// text.embedding is a frozen lookup table whose padding row is zero;
// text.conv<k>.w / .b are the trainable filters.
void init_text_params(ad::ParamStore& store, const TextEncoderConfig& cfg);

// Tokens for a batch of posts, padded with kPadToken to cfg.seq_len.
// Empty sequences and ids outside the vocabulary are rejected.
std::vector<std::size_t> pad_tokens(std::span<const std::vector<int>> batch, const TextEncoderConfig& cfg);

// R_T: per kernel size, a 1-D convolution over the embedded sequence, relu
// and a global max-pool; pooled maps are concatenated. Returns batch x d.
ad::Var encode_text(ad::Tape& tape, const ad::ParamStore& store, const TextEncoderConfig& cfg,
                    std::span<const std::vector<int>> batch);

// ---------------------------------------------------------------------------
// Visual
// ---------------------------------------------------------------------------

void init_visual_params(ad::ParamStore& store, std::size_t visual_dim, std::size_t d);

// R_V = relu(V W + b) for a batch x visual_dim matrix of backbone features.
ad::Var project_visual(ad::Tape& tape, const ad::ParamStore& store, const ad::Var& visual);

// ---------------------------------------------------------------------------
// Social
// ---------------------------------------------------------------------------

struct GatConfig {
    std::size_t heads = 8;
    std::size_t layers = 2;
    double threshold = 0.5;
    double leaky_slope = 0.2;
    bool connect_heterogeneous = true;

    std::size_t head_width(std::size_t d) const { return (d + heads - 1) / heads; }
    void validate() const;
};

void init_gat_params(ad::ParamStore& store, const GatConfig& cfg, std::size_t d);

// One signed GAT layer: per head, e_ij = leaky_relu(a . [W h_i || W h_j]),
// alpha_ij = sign(e_ij) * softmax_j(|e_ij|), out = elu(sum_j alpha_ij W h_j);
// heads are concatenated and projected back to d.
ad::Var signed_gat_layer(ad::Tape& tape, const ad::ParamStore& store, const GatConfig& cfg, std::size_t layer,
                         const SocialGraph& graph, const ad::Var& features);

// All layers, starting from the graph's node embeddings. Returns nodes x d.
ad::Var run_gat(ad::Tape& tape, const ad::ParamStore& store, const GatConfig& cfg, const SocialGraph& graph);

// R_G: rows of the updated node matrix for the given posts.
ad::Var extract_social(const ad::Var& node_features, const SocialGraph& graph,
                       std::span<const std::string> post_ids);

} // namespace ismaf
