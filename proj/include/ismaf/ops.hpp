#pragma once

// Differentiable operations on Var. Matrices are row-major; a batch of
// vectors is a matrix with one row per item.

#include "ismaf/kernels.hpp"
#include "ismaf/tape.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace ismaf::ad {

inline constexpr double kEps = 1e-12;

// ---- linear algebra -------------------------------------------------------
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

// ---- elementwise ----------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_row(const Var& a, const Var& row);  // broadcast a bias row over every row of a
Var relu(const Var& a);
Var tanh(const Var& a);
Var elu(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var exp(const Var& a);
Var log(const Var& a);                               // log(x + eps)
Var log_clamped(const Var& a, double lo, double hi);  // log(clamp(x, lo, hi))

// ---- reductions -----------------------------------------------------------
Var sum(const Var& a);
Var mean(const Var& a);
Var sum_cols(const Var& a);   // per row: m x n -> m x 1
Var mean_rows(const Var& a);  // per column: m x n -> 1 x n
Var segment_max_rows(const Var& a, std::size_t group);   // (g*group) x n -> g x n
Var segment_mean_rows(const Var& a, std::size_t group);  // (g*group) x n -> g x n

// ---- structure ------------------------------------------------------------
Var reshape(const Var& a, Shape shape);
Var concat_cols(std::span<const Var> parts);
Var concat_cols(std::initializer_list<Var> parts);
Var slice_cols(const Var& a, std::size_t begin, std::size_t width);
std::vector<Var> split_cols(const Var& a, std::span<const std::size_t> widths);
Var gather_rows(const Var& a, std::span<const std::size_t> rows);
// Rows of `a` hold `batch` sequences of `seq_len` steps. Emits one row per
// window of `k` consecutive steps, the window's rows laid side by side.
Var unfold_windows(const Var& a, std::size_t batch, std::size_t seq_len, std::size_t k);

// ---- normalization / attention -------------------------------------------
Var softmax_rows(const Var& a);
Var row_l2_normalize(const Var& a);  // x / (|x| + eps)
Var cosine_sim(const Var& a, const Var& b);
// log sum_j exp(a_ij) over entries with mask_ij != 0; rows with an empty mask give 0.
Var masked_logsumexp_rows(const Var& a, const Tensor& mask);

// Multi-head scaled dot-product attention over `batch` independent token
// sequences (see kernels::attention), scale 1/sqrt(width/heads).
Var attention(const Var& q, const Var& k, const Var& v, std::size_t batch, std::size_t heads);

// Training: zero each entry with probability `rate`, scale survivors by
// 1/(1-rate). Eval: identity.
Var dropout(const Var& a, double rate, std::mt19937_64& rng, bool training);

// Signed graph attention aggregation over projected node features.
// `attn` holds one row per head: [a_dst | a_src].
Var signed_gat(const Var& projected, const Var& attn, const kernels::EdgeIndex& edges, std::size_t heads,
               double slope);

} // namespace ismaf::ad
