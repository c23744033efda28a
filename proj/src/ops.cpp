#include "ismaf/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ismaf::ad {

namespace {

void require_same_numel(const char* op, const Var& a, const Var& b)
{
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                             " differ");
}

template <typename F>
Tensor map_values(const Tensor& t, F f)
{
    Tensor out(t.shape());
    for (std::size_t i = 0; i < t.numel(); ++i) out[i] = f(t[i]);
    return out;
}

// Unary op whose derivative depends on the input and output values only.
template <typename Fwd, typename Deriv>
Var unary(const Var& a, Fwd fwd, Deriv deriv)
{
    Tensor y = map_values(a.value(), fwd);
    auto yv = std::make_shared<const Tensor>(y);
    return Tape::record(std::move(y), {a}, [a, yv, deriv](const Tensor& g, GradSink& sink) {
        Tensor dx(a.shape());
        for (std::size_t i = 0; i < g.numel(); ++i) dx[i] = g[i] * deriv(a.value()[i], (*yv)[i]);
        sink.add(0, dx);
    });
}

Tensor as_matrix(const Tensor& t)
{
    return t.rank() == 2 ? t : t.reshaped(Shape{t.rows(), t.cols()});
}

} // namespace

// ============================================================================
// Linear algebra
// ============================================================================

Var matmul(const Var& a, const Var& b)
{
    const Tensor am = as_matrix(a.value());
    const Tensor bm = as_matrix(b.value());
    if (am.cols() != bm.rows())
        throw DimensionError("matmul: cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
    Tensor c = kernels::matmul(am, bm);
    return Tape::record(std::move(c), {a, b}, [a, b](const Tensor& g, GradSink& sink) {
        const Tensor gm = as_matrix(g);
        if (sink.wants(0)) sink.add(0, kernels::matmul(gm, as_matrix(b.value()).transposed()));
        if (sink.wants(1)) sink.add(1, kernels::matmul(as_matrix(a.value()).transposed(), gm));
    });
}

Var transpose(const Var& a)
{
    return Tape::record(as_matrix(a.value()).transposed(), {a}, [](const Tensor& g, GradSink& sink) {
        sink.add(0, g.transposed());
    });
}

// ============================================================================
// Elementwise
// ============================================================================

Var add(const Var& a, const Var& b)
{
    require_same_numel("add", a, b);
    Tensor y = a.value();
    y.add_inplace(b.value());
    return Tape::record(std::move(y), {a, b}, [](const Tensor& g, GradSink& sink) {
        sink.add(0, g);
        sink.add(1, g);
    });
}

Var sub(const Var& a, const Var& b)
{
    require_same_numel("sub", a, b);
    Tensor y = a.value();
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] -= b.value()[i];
    return Tape::record(std::move(y), {a, b}, [](const Tensor& g, GradSink& sink) {
        sink.add(0, g);
        if (sink.wants(1)) sink.add(1, map_values(g, [](double v) { return -v; }));
    });
}

Var mul(const Var& a, const Var& b)
{
    require_same_numel("mul", a, b);
    Tensor y = a.value();
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] *= b.value()[i];
    return Tape::record(std::move(y), {a, b}, [a, b](const Tensor& g, GradSink& sink) {
        for (std::size_t k = 0; k < 2; ++k) {
            if (!sink.wants(k)) continue;
            const Tensor& other = k == 0 ? b.value() : a.value();
            Tensor d(g.shape());
            for (std::size_t i = 0; i < g.numel(); ++i) d[i] = g[i] * other[i];
            sink.add(k, d);
        }
    });
}

Var scale(const Var& a, double s)
{
    return Tape::record(map_values(a.value(), [s](double v) { return v * s; }), {a},
                        [s](const Tensor& g, GradSink& sink) {
                            sink.add(0, map_values(g, [s](double v) { return v * s; }));
                        });
}

Var add_row(const Var& a, const Var& row)
{
    const std::size_t m = a.rows(), n = a.cols();
    if (row.numel() != n)
        throw DimensionError("add_row: bias " + shape_str(row.shape()) + " for rows of " + shape_str(a.shape()));
    Tensor y = as_matrix(a.value());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) y.at(i, j) += row.value()[j];
    return Tape::record(std::move(y), {a, row}, [m, n, row](const Tensor& g, GradSink& sink) {
        sink.add(0, g);
        if (sink.wants(1)) {
            Tensor d(row.shape());
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) d[j] += g[i * n + j];
            sink.add(1, d);
        }
    });
}

Var relu(const Var& a)
{
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(const Var& a)
{
    return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var elu(const Var& a)
{
    return unary(
        a, [](double x) { return x > 0.0 ? x : std::expm1(x); }, [](double x, double y) { return x > 0.0 ? 1.0 : y + 1.0; });
}

Var leaky_relu(const Var& a, double slope)
{
    return unary(
        a, [slope](double x) { return x > 0.0 ? x : slope * x; },
        [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var exp(const Var& a)
{
    return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a)
{
    return unary(a, [](double x) { return std::log(x + kEps); }, [](double x, double) { return 1.0 / (x + kEps); });
}

Var log_clamped(const Var& a, double lo, double hi)
{
    return unary(
        a, [lo, hi](double x) { return std::log(std::clamp(x, lo, hi)); },
        [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 / x : 0.0; });
}

// ============================================================================
// Reductions
// ============================================================================

Var sum(const Var& a)
{
    const double s = std::accumulate(a.value().data().begin(), a.value().data().end(), 0.0);
    const Shape shape = a.shape();
    return Tape::record(Tensor::scalar(s), {a}, [shape](const Tensor& g, GradSink& sink) {
        sink.add(0, Tensor(shape, g.item()));
    });
}

Var mean(const Var& a)
{
    if (a.numel() == 0) throw DimensionError("mean of empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Var sum_cols(const Var& a)
{
    const std::size_t m = a.rows(), n = a.cols();
    Tensor y(Shape{m, 1});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) y[i] += a.value()[i * n + j];
    const Shape shape = a.shape();
    return Tape::record(std::move(y), {a}, [m, n, shape](const Tensor& g, GradSink& sink) {
        Tensor d(shape);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) d[i * n + j] = g[i];
        sink.add(0, d);
    });
}

Var mean_rows(const Var& a)
{
    const std::size_t m = a.rows(), n = a.cols();
    if (m == 0) throw DimensionError("mean_rows of empty tensor");
    Tensor y(Shape{1, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) y[j] += a.value()[i * n + j];
    for (std::size_t j = 0; j < n; ++j) y[j] /= static_cast<double>(m);
    const Shape shape = a.shape();
    return Tape::record(std::move(y), {a}, [m, n, shape](const Tensor& g, GradSink& sink) {
        Tensor d(shape);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) d[i * n + j] = g[j] / static_cast<double>(m);
        sink.add(0, d);
    });
}

Var segment_max_rows(const Var& a, std::size_t group)
{
    const std::size_t m = a.rows(), n = a.cols();
    if (group == 0 || m % group != 0)
        throw DimensionError("segment_max_rows: " + std::to_string(m) + " rows not divisible into groups of " +
                             std::to_string(group));
    const std::size_t groups = m / group;
    Tensor y(Shape{groups, n});
    std::vector<std::size_t> arg(groups * n);
    for (std::size_t s = 0; s < groups; ++s)
        for (std::size_t j = 0; j < n; ++j) {
            std::size_t best = s * group;
            for (std::size_t r = s * group + 1; r < (s + 1) * group; ++r)
                if (a.value()[r * n + j] > a.value()[best * n + j]) best = r;
            arg[s * n + j] = best;
            y[s * n + j] = a.value()[best * n + j];
        }
    const Shape shape = a.shape();
    return Tape::record(std::move(y), {a}, [arg = std::move(arg), n, shape](const Tensor& g, GradSink& sink) {
        Tensor d(shape);
        for (std::size_t k = 0; k < arg.size(); ++k) d[arg[k] * n + k % n] += g[k];
        sink.add(0, d);
    });
}

Var segment_mean_rows(const Var& a, std::size_t group)
{
    const std::size_t m = a.rows(), n = a.cols();
    if (group == 0 || m % group != 0)
        throw DimensionError("segment_mean_rows: " + std::to_string(m) + " rows not divisible into groups of " +
                             std::to_string(group));
    const std::size_t groups = m / group;
    const double inv = 1.0 / static_cast<double>(group);
    Tensor y(Shape{groups, n});
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t j = 0; j < n; ++j) y[(r / group) * n + j] += a.value()[r * n + j];
    for (double& v : y.data()) v *= inv;
    const Shape shape = a.shape();
    return Tape::record(std::move(y), {a}, [m, n, group, inv, shape](const Tensor& g, GradSink& sink) {
        Tensor d(shape);
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t j = 0; j < n; ++j) d[r * n + j] = g[(r / group) * n + j] * inv;
        sink.add(0, d);
    });
}

// ============================================================================
// Structure
// ============================================================================

Var reshape(const Var& a, Shape shape)
{
    const Shape old = a.shape();
    return Tape::record(a.value().reshaped(std::move(shape)), {a}, [old](const Tensor& g, GradSink& sink) {
        sink.add(0, g.reshaped(old));
    });
}

Var concat_cols(std::span<const Var> parts)
{
    if (parts.empty()) throw DimensionError("concat_cols of nothing");
    const std::size_t m = parts.front().rows();
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const Var& p : parts) {
        if (p.rows() != m)
            throw DimensionError("concat_cols: row count " + std::to_string(p.rows()) + " vs " + std::to_string(m));
        widths.push_back(p.cols());
        total += p.cols();
    }
    Tensor y(Shape{m, total});
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        for (std::size_t i = 0; i < m; ++i)
            std::copy_n(parts[k].value().data().begin() + i * widths[k], widths[k], y.data().begin() + i * total + off);
        off += widths[k];
    }
    std::vector<Shape> shapes;
    for (const Var& p : parts) shapes.push_back(p.shape());
    return Tape::record(std::move(y), {parts.begin(), parts.end()},
                        [m, total, widths, shapes](const Tensor& g, GradSink& sink) {
                            std::size_t off = 0;
                            for (std::size_t k = 0; k < widths.size(); ++k) {
                                if (sink.wants(k)) {
                                    Tensor d(shapes[k]);
                                    for (std::size_t i = 0; i < m; ++i)
                                        std::copy_n(g.data().begin() + i * total + off, widths[k],
                                                    d.data().begin() + i * widths[k]);
                                    sink.add(k, d);
                                }
                                off += widths[k];
                            }
                        });
}

Var concat_cols(std::initializer_list<Var> parts)
{
    return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t width)
{
    const std::size_t m = a.rows(), n = a.cols();
    if (begin + width > n)
        throw DimensionError("slice_cols [" + std::to_string(begin) + ", +" + std::to_string(width) + ") of " +
                             shape_str(a.shape()));
    Tensor y(Shape{m, width});
    for (std::size_t i = 0; i < m; ++i)
        std::copy_n(a.value().data().begin() + i * n + begin, width, y.data().begin() + i * width);
    const Shape shape = a.shape();
    return Tape::record(std::move(y), {a}, [m, n, begin, width, shape](const Tensor& g, GradSink& sink) {
        Tensor d(shape);
        for (std::size_t i = 0; i < m; ++i)
            std::copy_n(g.data().begin() + i * width, width, d.data().begin() + i * n + begin);
        sink.add(0, d);
    });
}

std::vector<Var> split_cols(const Var& a, std::span<const std::size_t> widths)
{
    const std::size_t total = std::accumulate(widths.begin(), widths.end(), std::size_t{0});
    if (total != a.cols())
        throw DimensionError("split_cols: widths sum to " + std::to_string(total) + ", tensor has " +
                             std::to_string(a.cols()) + " columns");
    std::vector<Var> out;
    std::size_t off = 0;
    for (std::size_t w : widths) {
        out.push_back(slice_cols(a, off, w));
        off += w;
    }
    return out;
}

Var gather_rows(const Var& a, std::span<const std::size_t> rows)
{
    const std::size_t m = a.rows(), n = a.cols();
    Tensor y(Shape{rows.size(), n});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= m)
            throw std::out_of_range("gather_rows: row " + std::to_string(rows[i]) + " of " + std::to_string(m));
        std::copy_n(a.value().data().begin() + rows[i] * n, n, y.data().begin() + i * n);
    }
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    const Shape shape = a.shape();
    return Tape::record(std::move(y), {a}, [idx = std::move(idx), n, shape](const Tensor& g, GradSink& sink) {
        Tensor d(shape);
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t j = 0; j < n; ++j) d[idx[i] * n + j] += g[i * n + j];
        sink.add(0, d);
    });
}

Var unfold_windows(const Var& a, std::size_t batch, std::size_t seq_len, std::size_t k)
{
    const std::size_t d = a.cols();
    if (a.rows() != batch * seq_len)
        throw DimensionError("unfold_windows: " + std::to_string(a.rows()) + " rows for " + std::to_string(batch) +
                             " sequences of length " + std::to_string(seq_len));
    if (k == 0 || k > seq_len)
        throw DimensionError("unfold_windows: window " + std::to_string(k) + " over length " + std::to_string(seq_len));
    const std::size_t windows = seq_len - k + 1;
    Tensor y(Shape{batch * windows, k * d});
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t w = 0; w < windows; ++w)
            std::copy_n(a.value().data().begin() + (b * seq_len + w) * d, k * d,
                        y.data().begin() + (b * windows + w) * k * d);
    const Shape shape = a.shape();
    return Tape::record(std::move(y), {a}, [=](const Tensor& g, GradSink& sink) {
        Tensor dx(shape);
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t w = 0; w < windows; ++w)
                for (std::size_t c = 0; c < k * d; ++c)
                    dx[(b * seq_len + w) * d + c] += g[(b * windows + w) * k * d + c];
        sink.add(0, dx);
    });
}

// ============================================================================
// Normalization / attention
// ============================================================================

Var softmax_rows(const Var& a)
{
    const std::size_t m = a.rows(), n = a.cols();
    Tensor y(a.shape());
    for (std::size_t i = 0; i < m; ++i) {
        const double* x = a.value().data().data() + i * n;
        double* out = y.data().data() + i * n;
        const double mx = *std::max_element(x, x + n);
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += (out[j] = std::exp(x[j] - mx));
        for (std::size_t j = 0; j < n; ++j) out[j] /= s;
    }
    auto yv = std::make_shared<const Tensor>(y);
    return Tape::record(std::move(y), {a}, [m, n, yv](const Tensor& g, GradSink& sink) {
        Tensor dx(yv->shape());
        for (std::size_t i = 0; i < m; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * (*yv)[i * n + j];
            for (std::size_t j = 0; j < n; ++j) dx[i * n + j] = (*yv)[i * n + j] * (g[i * n + j] - dot);
        }
        sink.add(0, dx);
    });
}

Var row_l2_normalize(const Var& a)
{
    const std::size_t m = a.rows(), n = a.cols();
    Tensor y(a.shape());
    std::vector<double> norms(m);
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += a.value()[i * n + j] * a.value()[i * n + j];
        norms[i] = std::sqrt(s);
        for (std::size_t j = 0; j < n; ++j) y[i * n + j] = a.value()[i * n + j] / (norms[i] + kEps);
    }
    return Tape::record(std::move(y), {a}, [a, m, n, norms = std::move(norms)](const Tensor& g, GradSink& sink) {
        Tensor dx(a.shape());
        for (std::size_t i = 0; i < m; ++i) {
            const double s = norms[i] + kEps;
            double xg = 0.0;
            for (std::size_t j = 0; j < n; ++j) xg += a.value()[i * n + j] * g[i * n + j];
            const double coef = norms[i] > 0.0 ? xg / (s * s * norms[i]) : 0.0;
            for (std::size_t j = 0; j < n; ++j) dx[i * n + j] = g[i * n + j] / s - coef * a.value()[i * n + j];
        }
        sink.add(0, dx);
    });
}

Var cosine_sim(const Var& a, const Var& b)
{
    if (a.numel() != b.numel())
        throw DimensionError("cosine_sim: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const Shape row{1, a.numel()};
    return sum(mul(row_l2_normalize(reshape(a, row)), row_l2_normalize(reshape(b, row))));
}

Var masked_logsumexp_rows(const Var& a, const Tensor& mask)
{
    if (mask.numel() != a.numel())
        throw DimensionError("masked_logsumexp_rows: mask " + shape_str(mask.shape()) + " for " + shape_str(a.shape()));
    const std::size_t m = a.rows(), n = a.cols();
    Tensor y(Shape{m, 1});
    for (std::size_t i = 0; i < m; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j)
            if (mask[i * n + j] != 0.0) mx = std::max(mx, a.value()[i * n + j]);
        if (!std::isfinite(mx)) continue;
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            if (mask[i * n + j] != 0.0) s += std::exp(a.value()[i * n + j] - mx);
        y[i] = mx + std::log(s);
    }
    auto yv = std::make_shared<const Tensor>(y);
    return Tape::record(std::move(y), {a}, [a, mask, m, n, yv](const Tensor& g, GradSink& sink) {
        Tensor dx(a.shape());
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (mask[i * n + j] != 0.0) dx[i * n + j] = g[i] * std::exp(a.value()[i * n + j] - (*yv)[i]);
        sink.add(0, dx);
    });
}

Var attention(const Var& q, const Var& k, const Var& v, std::size_t batch, std::size_t heads)
{
    const Tensor qm = as_matrix(q.value()), km = as_matrix(k.value()), vm = as_matrix(v.value());
    if (heads == 0 || qm.cols() % heads != 0)
        throw DimensionError("attention: width " + std::to_string(qm.cols()) + " not divisible by " +
                             std::to_string(heads) + " heads");
    const double sc = 1.0 / std::sqrt(static_cast<double>(qm.cols() / heads));
    auto probs = std::make_shared<std::vector<double>>();
    Tensor out = kernels::attention(qm, km, vm, batch, heads, sc, probs.get());
    return Tape::record(std::move(out), {q, k, v}, [q, k, v, batch, heads, sc, probs](const Tensor& g, GradSink& sink) {
        const Tensor& qv = q.value();
        const Tensor& kv = k.value();
        const Tensor& vv = v.value();
        const std::size_t width = qv.cols(), dh = width / heads;
        const std::size_t sq = qv.rows() / batch, sk = kv.rows() / batch;
        Tensor dq(qv.shape()), dk(kv.shape()), dv(vv.shape());
        std::vector<double> dp(sk);
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t h = 0; h < heads; ++h)
                for (std::size_t i = 0; i < sq; ++i) {
                    const double* p = probs->data() + ((b * heads + h) * sq + i) * sk;
                    const std::size_t qi = (b * sq + i) * width + h * dh;
                    double weighted = 0.0;
                    for (std::size_t j = 0; j < sk; ++j) {
                        const std::size_t kj = (b * sk + j) * width + h * dh;
                        double d = 0.0;
                        for (std::size_t c = 0; c < dh; ++c) {
                            d += g[qi + c] * vv[kj + c];
                            dv[kj + c] += p[j] * g[qi + c];
                        }
                        dp[j] = d;
                        weighted += p[j] * d;
                    }
                    for (std::size_t j = 0; j < sk; ++j) {
                        const std::size_t kj = (b * sk + j) * width + h * dh;
                        const double ds = p[j] * (dp[j] - weighted) * sc;
                        for (std::size_t c = 0; c < dh; ++c) {
                            dq[qi + c] += ds * kv[kj + c];
                            dk[kj + c] += ds * qv[qi + c];
                        }
                    }
                }
        sink.add(0, dq);
        sink.add(1, dk);
        sink.add(2, dv);
    });
}

Var dropout(const Var& a, double rate, std::mt19937_64& rng, bool training)
{
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout rate must lie in [0, 1)");
    if (!training || rate == 0.0) return a;
    Tensor mask(a.shape());
    std::bernoulli_distribution keep(1.0 - rate);
    const double s = 1.0 / (1.0 - rate);
    for (double& v : mask.data()) v = keep(rng) ? s : 0.0;
    return mul(a, Var(std::move(mask)));
}

Var signed_gat(const Var& projected, const Var& attn, const kernels::EdgeIndex& edges, std::size_t heads,
               double slope)
{
    auto state = std::make_shared<kernels::GatAttention>();
    Tensor out = kernels::gat_aggregate(as_matrix(projected.value()), as_matrix(attn.value()), edges, heads, slope,
                                        state.get());
    return Tape::record(std::move(out), {projected, attn},
                        [projected, attn, &edges, heads, slope, state](const Tensor& g, GradSink& sink) {
                            const Tensor& hp = projected.value();
                            const Tensor& av = attn.value();
                            const std::size_t width = hp.cols(), dh = width / heads;
                            Tensor d_hp(hp.shape());
                            Tensor d_attn(av.shape());
                            std::vector<double> dp;
                            for (std::size_t i = 0; i < edges.node_count(); ++i) {
                                const std::size_t begin = edges.offsets[i], end = edges.offsets[i + 1];
                                dp.assign(end - begin, 0.0);
                                for (std::size_t h = 0; h < heads; ++h) {
                                    const double* gi = g.data().data() + i * width + h * dh;
                                    double weighted = 0.0;
                                    for (std::size_t e = begin; e < end; ++e) {
                                        const std::size_t j = edges.sources[e];
                                        const double alpha = state->coeff[e * heads + h];
                                        const double sign = state->score[e * heads + h] >= 0.0 ? 1.0 : -1.0;
                                        double d_alpha = 0.0;
                                        for (std::size_t c = 0; c < dh; ++c) {
                                            d_alpha += gi[c] * hp[j * width + h * dh + c];
                                            d_hp[j * width + h * dh + c] += alpha * gi[c];
                                        }
                                        dp[e - begin] = sign * d_alpha;
                                        weighted += std::abs(alpha) * dp[e - begin];
                                    }
                                    const double* a_dst = av.data().data() + h * 2 * dh;
                                    const double* a_src = a_dst + dh;
                                    for (std::size_t e = begin; e < end; ++e) {
                                        const std::size_t j = edges.sources[e];
                                        const double score = state->score[e * heads + h];
                                        const double sign = score >= 0.0 ? 1.0 : -1.0;
                                        const double d_mag =
                                            std::abs(state->coeff[e * heads + h]) * (dp[e - begin] - weighted);
                                        const double ds = d_mag * sign * (score > 0.0 ? 1.0 : slope);
                                        for (std::size_t c = 0; c < dh; ++c) {
                                            d_attn[h * 2 * dh + c] += ds * hp[i * width + h * dh + c];
                                            d_attn[h * 2 * dh + dh + c] += ds * hp[j * width + h * dh + c];
                                            d_hp[i * width + h * dh + c] += ds * a_dst[c];
                                            d_hp[j * width + h * dh + c] += ds * a_src[c];
                                        }
                                    }
                                }
                            }
                            sink.add(0, d_hp);
                            sink.add(1, d_attn);
                        });
}

} // namespace ismaf::ad
