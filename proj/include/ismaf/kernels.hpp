#pragma once

// Data-parallel inner loops. Every kernel exists twice: a plain serial loop
// nest kept as the reference, and an OpenMP version that partitions output
// rows across threads. Each output element is written by exactly one thread
// with the same accumulation order as the serial loop, so the two variants
// agree bitwise.

#include "ismaf/tensor.hpp"

#include <cstddef>
#include <vector>

namespace ismaf::kernels {

// In-edges per destination node: sources[offsets[i] .. offsets[i+1]).
struct EdgeIndex {
    std::vector<std::size_t> offsets;
    std::vector<std::size_t> sources;

    std::size_t node_count() const { return offsets.empty() ? 0 : offsets.size() - 1; }
    std::size_t edge_count() const { return sources.size(); }
};

struct Neighbor {
    std::size_t index;
    double cosine;
};

// For each row i, every j > i with cos(x_i, x_j) >= threshold, ascending j.
using NeighborLists = std::vector<std::vector<Neighbor>>;

// Per-edge, per-head attention state produced by the forward pass and
// consumed by the backward pass. Row e of each tensor matches sources[e].
struct GatAttention {
    Tensor score;  // leaky_relu(a . [Wh_i || Wh_j]), shape E x H
    Tensor coeff;  // sign(score) * softmax_j(|score|), shape E x H
};

namespace serial {
Tensor matmul(const Tensor& a, const Tensor& b);
NeighborLists cosine_neighbors(const Tensor& x, double threshold, double eps);
// Scaled dot-product attention for `batch` independent sequences. Rows of
// q hold batch*seq_q tokens, rows of k and v batch*seq_k tokens; columns are
// split into `heads` equal slices. probs (optional) receives the softmax
// weights laid out [batch][head][seq_q][seq_k].
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t batch, std::size_t heads,
                 double scale, std::vector<double>* probs);
Tensor gat_aggregate(const Tensor& projected, const Tensor& attn, const EdgeIndex& edges, std::size_t heads,
                     double slope, GatAttention* state);
} // namespace serial

namespace omp {
Tensor matmul(const Tensor& a, const Tensor& b);
NeighborLists cosine_neighbors(const Tensor& x, double threshold, double eps);
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t batch, std::size_t heads,
                 double scale, std::vector<double>* probs);
Tensor gat_aggregate(const Tensor& projected, const Tensor& attn, const EdgeIndex& edges, std::size_t heads,
                     double slope, GatAttention* state);
} // namespace omp

// Default dispatch used by the autodiff engine.
inline Tensor matmul(const Tensor& a, const Tensor& b) { return omp::matmul(a, b); }
inline NeighborLists cosine_neighbors(const Tensor& x, double threshold, double eps)
{
    return omp::cosine_neighbors(x, threshold, eps);
}
inline Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t batch, std::size_t heads,
                        double scale, std::vector<double>* probs)
{
    return omp::attention(q, k, v, batch, heads, scale, probs);
}
inline Tensor gat_aggregate(const Tensor& projected, const Tensor& attn, const EdgeIndex& edges,
                            std::size_t heads, double slope, GatAttention* state)
{
    return omp::gat_aggregate(projected, attn, edges, heads, slope, state);
}

int max_threads();

} // namespace ismaf::kernels
