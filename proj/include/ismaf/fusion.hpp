#pragma once

#include "ismaf/ops.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>

namespace ismaf {

enum class FusionKind : std::uint8_t { adaptive, is_concat, is_att };

FusionKind parse_fusion(const std::string& name);  // "af", "is-concat", "is-att"
const char* fusion_name(FusionKind kind);

struct AttentionConfig;

// Encoder 3d -> d (tanh) and decoder d -> 3d (linear). With depth > 1 each
// side gains depth-1 hidden tanh layers of width 2d.
void init_fusion_params(ad::ParamStore& store, std::size_t d, std::size_t depth = 1);
void init_classifier_params(ad::ParamStore& store, std::size_t d);
void init_alternate_params(ad::ParamStore& store, FusionKind kind, const AttentionConfig& attn);

struct FusionResult {
    ad::Var fused;           // X_fuse = enc(X), batch x d
    ad::Var reconstruction;  // X_hat = dec(enc(X)), batch x 3d
    ad::Var loss;            // batch mean of |X_hat - X|^2
};

// X = Z_TV (+) Z_VT (+) R_G. The loss is computed on a constant copy of X,
// so its gradient reaches the encoder and decoder but not the inputs.
// `frozen_x` replaces that copy; finite-difference checks pin it to the
// unperturbed X so they measure the same objective backprop differentiates.
FusionResult adaptive_fuse(ad::Tape& tape, const ad::ParamStore& store, const ad::Var& z_tv, const ad::Var& z_vt,
                           const ad::Var& r_g, std::size_t depth = 1, const Tensor* frozen_x = nullptr);

// Batch mean over rows of the squared Euclidean distance.
ad::Var reconstruction_loss(const ad::Var& reconstruction, const ad::Var& target);

// Ablation alternates: IS-concat maps Z (+) R_G linearly to d, IS-att lets
// Z attend over R_G.
ad::Var fuse_alternate(ad::Tape& tape, const ad::ParamStore& store, FusionKind kind, const AttentionConfig& attn,
                       const ad::Var& z, const ad::Var& r_g);

// Two-class softmax over a linear layer; column 1 is the rumor probability.
ad::Var classify(ad::Tape& tape, const ad::ParamStore& store, const ad::Var& fused);

// argmax with ties going to class 0.
int predict_label(double rumor_probability);

// Mean binary cross-entropy with yhat clamped to [1e-12, 1 - 1e-12].
ad::Var ce_loss(const ad::Var& rumor_prob, std::span<const int> labels);
double ce_loss(std::span<const double> rumor_prob, std::span<const int> labels);

struct LossWeights {
    double scl = 0.3;
    double cmca = 0.7;
    double ml = 0.4;
    double af = 0.4;

    void validate() const;
    std::array<double, 4> as_array() const { return {scl, cmca, ml, af}; }
};

struct LossBreakdown {
    double ce = 0, scl = 0, cmca = 0, ml = 0, af = 0;
    double total = 0;

    friend bool operator==(const LossBreakdown&, const LossBreakdown&) = default;
};

double overall_loss(const LossBreakdown& parts, const LossWeights& weights);

struct LossTerms {
    ad::Var ce, scl, cmca, ml, af;
};
ad::Var overall_loss(const LossTerms& terms, const LossWeights& weights);

} // namespace ismaf
