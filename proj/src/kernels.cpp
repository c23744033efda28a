#include "ismaf/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ismaf::kernels {

namespace {

// Below this many multiply-adds the thread fork costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 14;

void check_matmul(const Tensor& a, const Tensor& b)
{
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
        throw DimensionError("matmul: cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
}

inline void matmul_row(const double* a_row, const Tensor& b, std::size_t k, std::size_t n, double* out)
{
    const double* bv = b.data().data();
    for (std::size_t j = 0; j < n; ++j) out[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
        const double av = a_row[p];
        if (av == 0.0) continue;
        const double* b_row = bv + p * n;
        for (std::size_t j = 0; j < n; ++j) out[j] += av * b_row[j];
    }
}

std::vector<double> row_norms(const Tensor& x, double eps)
{
    std::vector<double> norms(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double s = 0.0;
        for (double v : x.row(i)) s += v * v;
        norms[i] = std::sqrt(s) + eps;
    }
    return norms;
}

inline void neighbor_row(const Tensor& x, const std::vector<double>& norms, std::size_t i, double threshold,
                         std::vector<Neighbor>& out)
{
    const auto xi = x.row(i);
    for (std::size_t j = i + 1; j < x.rows(); ++j) {
        const auto xj = x.row(j);
        double dot = 0.0;
        for (std::size_t c = 0; c < xi.size(); ++c) dot += xi[c] * xj[c];
        const double cos = dot / (norms[i] * norms[j]);
        if (cos >= threshold) out.push_back({j, cos});
    }
}

void check_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t batch, std::size_t heads)
{
    if (batch == 0 || q.rows() % batch != 0 || k.rows() % batch != 0 || k.rows() != v.rows())
        throw DimensionError("attention: rows " + shape_str(q.shape()) + "/" + shape_str(k.shape()) + "/" +
                             shape_str(v.shape()) + " do not split into " + std::to_string(batch) + " sequences");
    if (q.cols() != k.cols() || q.cols() != v.cols() || heads == 0 || q.cols() % heads != 0)
        throw DimensionError("attention: width " + std::to_string(q.cols()) + " not shared or not divisible by " +
                             std::to_string(heads) + " heads");
}

inline void attention_sequence(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t batch,
                               std::size_t heads, double scale, std::size_t b, double* out, double* probs)
{
    const std::size_t width = q.cols(), dh = width / heads;
    const std::size_t sq = q.rows() / batch, sk = k.rows() / batch;
    std::vector<double> p(sk);
    for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t i = 0; i < sq; ++i) {
            const double* qi = q.data().data() + (b * sq + i) * width + h * dh;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < sk; ++j) {
                const double* kj = k.data().data() + (b * sk + j) * width + h * dh;
                double dot = 0.0;
                for (std::size_t c = 0; c < dh; ++c) dot += qi[c] * kj[c];
                p[j] = dot * scale;
                mx = std::max(mx, p[j]);
            }
            double denom = 0.0;
            for (std::size_t j = 0; j < sk; ++j) denom += (p[j] = std::exp(p[j] - mx));
            double* oi = out + (b * sq + i) * width + h * dh;
            for (std::size_t c = 0; c < dh; ++c) oi[c] = 0.0;
            for (std::size_t j = 0; j < sk; ++j) {
                p[j] /= denom;
                const double* vj = v.data().data() + (b * sk + j) * width + h * dh;
                for (std::size_t c = 0; c < dh; ++c) oi[c] += p[j] * vj[c];
            }
            if (probs) std::copy(p.begin(), p.end(), probs + ((b * heads + h) * sq + i) * sk);
        }
}

void check_gat(const Tensor& projected, const Tensor& attn, const EdgeIndex& edges, std::size_t heads)
{
    if (heads == 0 || projected.cols() % heads != 0)
        throw DimensionError("gat: width " + std::to_string(projected.cols()) + " not divisible by " +
                             std::to_string(heads) + " heads");
    const std::size_t dh = projected.cols() / heads;
    if (attn.rows() != heads || attn.cols() != 2 * dh)
        throw DimensionError("gat: attention vector shape " + shape_str(attn.shape()) + ", expected [" +
                             std::to_string(heads) + "x" + std::to_string(2 * dh) + "]");
    if (edges.node_count() != projected.rows())
        throw DimensionError("gat: edge index covers " + std::to_string(edges.node_count()) + " nodes, features have " +
                             std::to_string(projected.rows()));
    for (std::size_t i = 0; i < edges.node_count(); ++i)
        if (edges.offsets[i + 1] == edges.offsets[i])
            throw ContractError("gat: node " + std::to_string(i) + " has no in-edges (missing self-loop)");
}

inline void gat_node(const Tensor& projected, const Tensor& attn, const EdgeIndex& edges, std::size_t heads,
                     double slope, std::size_t i, double* out, double* score, double* coeff)
{
    const std::size_t width = projected.cols();
    const std::size_t dh = width / heads;
    const std::size_t begin = edges.offsets[i], end = edges.offsets[i + 1];
    const double* hi = projected.data().data() + i * width;

    for (std::size_t c = 0; c < width; ++c) out[c] = 0.0;
    for (std::size_t h = 0; h < heads; ++h) {
        const double* a_dst = attn.data().data() + h * 2 * dh;
        const double* a_src = a_dst + dh;
        double self_term = 0.0;
        for (std::size_t c = 0; c < dh; ++c) self_term += a_dst[c] * hi[h * dh + c];

        double max_mag = 0.0;
        for (std::size_t e = begin; e < end; ++e) {
            const double* hj = projected.data().data() + edges.sources[e] * width + h * dh;
            double s = self_term;
            for (std::size_t c = 0; c < dh; ++c) s += a_src[c] * hj[c];
            const double lr = s > 0.0 ? s : slope * s;
            score[e * heads + h] = lr;
            max_mag = std::max(max_mag, std::abs(lr));
        }
        double denom = 0.0;
        for (std::size_t e = begin; e < end; ++e) {
            const double w = std::exp(std::abs(score[e * heads + h]) - max_mag);
            coeff[e * heads + h] = w;
            denom += w;
        }
        for (std::size_t e = begin; e < end; ++e) {
            const double sign = score[e * heads + h] >= 0.0 ? 1.0 : -1.0;
            const double alpha = sign * coeff[e * heads + h] / denom;
            coeff[e * heads + h] = alpha;
            const double* hj = projected.data().data() + edges.sources[e] * width + h * dh;
            for (std::size_t c = 0; c < dh; ++c) out[h * dh + c] += alpha * hj[c];
        }
    }
}

} // namespace

int max_threads()
{
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

// ============================================================================
// Serial reference
// ============================================================================

namespace serial {

Tensor matmul(const Tensor& a, const Tensor& b)
{
    check_matmul(a, b);
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor c(Shape{m, n});
    for (std::size_t i = 0; i < m; ++i) matmul_row(a.data().data() + i * k, b, k, n, c.data().data() + i * n);
    return c;
}

NeighborLists cosine_neighbors(const Tensor& x, double threshold, double eps)
{
    const auto norms = row_norms(x, eps);
    NeighborLists out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) neighbor_row(x, norms, i, threshold, out[i]);
    return out;
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t batch, std::size_t heads,
                 double scale, std::vector<double>* probs)
{
    check_attention(q, k, v, batch, heads);
    Tensor out(q.shape());
    if (probs) probs->assign(batch * heads * (q.rows() / batch) * (k.rows() / batch), 0.0);
    for (std::size_t b = 0; b < batch; ++b)
        attention_sequence(q, k, v, batch, heads, scale, b, out.data().data(), probs ? probs->data() : nullptr);
    return out;
}

Tensor gat_aggregate(const Tensor& projected, const Tensor& attn, const EdgeIndex& edges, std::size_t heads,
                     double slope, GatAttention* state)
{
    check_gat(projected, attn, edges, heads);
    const std::size_t n = projected.rows(), width = projected.cols();
    Tensor out(Shape{n, width});
    Tensor score(Shape{edges.edge_count(), heads});
    Tensor coeff(Shape{edges.edge_count(), heads});
    for (std::size_t i = 0; i < n; ++i)
        gat_node(projected, attn, edges, heads, slope, i, out.data().data() + i * width, score.data().data(),
                 coeff.data().data());
    if (state) *state = {std::move(score), std::move(coeff)};
    return out;
}

} // namespace serial

// ============================================================================
// OpenMP
// ============================================================================

namespace omp {

Tensor matmul(const Tensor& a, const Tensor& b)
{
    check_matmul(a, b);
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor c(Shape{m, n});
    const double* av = a.data().data();
    double* cv = c.data().data();
    const long rows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
    for (long i = 0; i < rows; ++i) matmul_row(av + i * k, b, k, n, cv + i * n);
    return c;
}

NeighborLists cosine_neighbors(const Tensor& x, double threshold, double eps)
{
    const auto norms = row_norms(x, eps);
    const std::size_t n = x.rows();
    NeighborLists out(n);
    const long rows = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic, 16) if (n * n * x.cols() > kParallelWork)
    for (long i = 0; i < rows; ++i) neighbor_row(x, norms, i, threshold, out[i]);
    return out;
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t batch, std::size_t heads,
                 double scale, std::vector<double>* probs)
{
    check_attention(q, k, v, batch, heads);
    Tensor out(q.shape());
    if (probs) probs->assign(batch * heads * (q.rows() / batch) * (k.rows() / batch), 0.0);
    double* ov = out.data().data();
    double* pv = probs ? probs->data() : nullptr;
    const long seqs = static_cast<long>(batch);
#pragma omp parallel for schedule(static) if (q.rows() * k.rows() / batch * q.cols() > kParallelWork)
    for (long b = 0; b < seqs; ++b) attention_sequence(q, k, v, batch, heads, scale, b, ov, pv);
    return out;
}

Tensor gat_aggregate(const Tensor& projected, const Tensor& attn, const EdgeIndex& edges, std::size_t heads,
                     double slope, GatAttention* state)
{
    check_gat(projected, attn, edges, heads);
    const std::size_t n = projected.rows(), width = projected.cols();
    Tensor out(Shape{n, width});
    Tensor score(Shape{edges.edge_count(), heads});
    Tensor coeff(Shape{edges.edge_count(), heads});
    double* ov = out.data().data();
    double* sv = score.data().data();
    double* cv = coeff.data().data();
    const long nodes = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic, 64) if (edges.edge_count() * width > kParallelWork)
    for (long i = 0; i < nodes; ++i) gat_node(projected, attn, edges, heads, slope, i, ov + i * width, sv, cv);
    if (state) *state = {std::move(score), std::move(coeff)};
    return out;
}

} // namespace omp

} // namespace ismaf::kernels
