#pragma once

// Bridging the intrinsic (text, image) and social modalities: supervised
// contrastive enhancement, self- and co-attention, cross-modal consistency
// alignment and mutual learning between two label heads.

#include "ismaf/ops.hpp"

#include <span>
#include <string>
#include <vector>

namespace ismaf {

// Each d-vector is viewed as `tokens` tokens of d/tokens entries; attention
// runs over that sequence and is mean-pooled back to d.
struct AttentionConfig {
    std::size_t d = 0;
    std::size_t heads = 8;
    std::size_t tokens = 6;

    std::size_t token_dim() const { return d / tokens; }
    std::size_t inner_dim() const { return heads * ((token_dim() + heads - 1) / heads); }
    void validate() const;
};

// Largest divisor of d that does not exceed `preferred`.
std::size_t lift_tokens_for(std::size_t d, std::size_t preferred);

// Parameter prefixes of one attention block. q/k/v name token projections
// (<prefix>.w: token_dim x inner, <prefix>.b), out names the inner x d output map.
struct AttentionNames {
    std::string q, k, v, out;

    static AttentionNames self(const std::string& modality);
    static AttentionNames co(const std::string& query_modality, const std::string& kv_modality);
};

void init_attention_params(ad::ParamStore& store, const AttentionConfig& cfg, const AttentionNames& names);
void init_bridging_params(ad::ParamStore& store, const AttentionConfig& cfg, std::size_t common_dim);

// Generic block: queries lifted from `query_src`, keys/values from `kv_src`
// (both batch x d). Returns batch x d.
ad::Var attention_block(ad::Tape& tape, const ad::ParamStore& store, const AttentionConfig& cfg,
                        const AttentionNames& names, const ad::Var& query_src, const ad::Var& kv_src);

// Z_m for m in {"T", "V"}.
ad::Var self_attention(ad::Tape& tape, const ad::ParamStore& store, const AttentionConfig& cfg, const ad::Var& r_m,
                       const std::string& modality);

struct CoAttention {
    ad::Var tv;  // text queries over visual keys/values
    ad::Var vt;  // visual queries over text keys/values
};
CoAttention co_attention(ad::Tape& tape, const ad::ParamStore& store, const AttentionConfig& cfg, const ad::Var& z_t,
                         const ad::Var& z_v);

// Z = (Z_TV + Z_VT) / 2.
ad::Var intrinsic_rep(const ad::Var& z_tv, const ad::Var& z_vt);

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

struct SclResult {
    ad::Var loss;
    bool all_skipped = false;  // no anchor had a positive; loss is 0
};

// Supervised contrastive loss over row-normalized representations (batch x
// any width), anchors without positives skipped, denominator over all
// other samples. Throws for fewer than two samples.
SclResult scl_loss(const ad::Var& reps, std::span<const int> labels, double tau);

// Symmetrized cross-modal consistency loss between aligned rows of z and r
// using cosine similarity.
ad::Var cmca_loss(const ad::Var& z, const ad::Var& r, double tau);

struct CommonSpace {
    ad::Var e_z;
    ad::Var e_rg;
};
CommonSpace project_common(ad::Tape& tape, const ad::ParamStore& store, const ad::Var& z, const ad::Var& r_g);

struct LabelDistributions {
    ad::Var p_z;
    ad::Var p_rg;
};
LabelDistributions label_distributions(ad::Tape& tape, const ad::ParamStore& store, const CommonSpace& common);

// Row-wise KL(P || Q) with entries clamped to [1e-12, 1] inside the logs.
// Returns rows x 1.
ad::Var kl_divergence(const ad::Var& p, const ad::Var& q);

// Batch mean of (KL(P||Q) + KL(Q||P)) / 2.
ad::Var mutual_learning_loss(const ad::Var& p_z, const ad::Var& p_rg);

} // namespace ismaf
