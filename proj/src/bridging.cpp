#include "ismaf/bridging.hpp"

#include <stdexcept>

namespace ismaf {

using namespace ad;

void AttentionConfig::validate() const
{
    if (d == 0 || heads == 0 || tokens == 0) throw std::invalid_argument("attention: d, heads and tokens must be positive");
    if (d % tokens != 0)
        throw std::invalid_argument("attention: d = " + std::to_string(d) + " is not divisible into " +
                                    std::to_string(tokens) + " tokens");
}

std::size_t lift_tokens_for(std::size_t d, std::size_t preferred)
{
    for (std::size_t t = std::min(d, preferred); t > 1; --t)
        if (d % t == 0) return t;
    return 1;
}

AttentionNames AttentionNames::self(const std::string& modality)
{
    const std::string p = "attn.self." + modality;
    return {p + ".q", p + ".k", p + ".v", p + ".o"};
}

AttentionNames AttentionNames::co(const std::string& query_modality, const std::string& kv_modality)
{
    return {"attn.co." + query_modality + ".q", "attn.co." + kv_modality + ".k", "attn.co." + kv_modality + ".v",
            "attn.co." + query_modality + kv_modality + ".o"};
}

void init_attention_params(ParamStore& store, const AttentionConfig& cfg, const AttentionNames& names)
{
    cfg.validate();
    auto projection = [&](const std::string& prefix, std::size_t in, std::size_t out) {
        if (store.contains(prefix + ".w")) return;
        store.create(prefix + ".w", Shape{in, out});
        store.create(prefix + ".b", Shape{out}, ParamStore::Init::zeros);
    };
    projection(names.q, cfg.token_dim(), cfg.inner_dim());
    projection(names.k, cfg.token_dim(), cfg.inner_dim());
    projection(names.v, cfg.token_dim(), cfg.inner_dim());
    projection(names.out, cfg.inner_dim(), cfg.d);
}

void init_bridging_params(ParamStore& store, const AttentionConfig& cfg, std::size_t common_dim)
{
    init_attention_params(store, cfg, AttentionNames::self("T"));
    init_attention_params(store, cfg, AttentionNames::self("V"));
    init_attention_params(store, cfg, AttentionNames::co("T", "V"));
    init_attention_params(store, cfg, AttentionNames::co("V", "T"));
    for (const char* side : {"ml.z", "ml.g"}) {
        const std::string p = side;
        store.create(p + ".w", Shape{cfg.d, common_dim});
        store.create(p + ".b", Shape{common_dim}, ParamStore::Init::zeros);
        store.create(p + ".fc.w", Shape{common_dim, 2});
        store.create(p + ".fc.b", Shape{2}, ParamStore::Init::zeros);
    }
}

namespace {

Var affine(Tape& tape, const ParamStore& store, const std::string& prefix, const Var& x)
{
    return add_row(matmul(x, tape.param(store, prefix + ".w")), tape.param(store, prefix + ".b"));
}

Tensor off_diagonal(std::size_t n)
{
    Tensor m(Shape{n, n}, 1.0);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 0.0;
    return m;
}

} // namespace

Var attention_block(Tape& tape, const ParamStore& store, const AttentionConfig& cfg, const AttentionNames& names,
                    const Var& query_src, const Var& kv_src)
{
    cfg.validate();
    if (query_src.cols() != cfg.d || kv_src.cols() != cfg.d || query_src.rows() != kv_src.rows())
        throw DimensionError("attention_block: inputs " + shape_str(query_src.shape()) + " and " +
                             shape_str(kv_src.shape()) + " for d = " + std::to_string(cfg.d));
    const std::size_t batch = query_src.rows();
    const Shape lifted{batch * cfg.tokens, cfg.token_dim()};
    const Var q_tokens = reshape(query_src, lifted);
    const Var kv_tokens = reshape(kv_src, lifted);
    const Var mixed = attention(affine(tape, store, names.q, q_tokens), affine(tape, store, names.k, kv_tokens),
                                affine(tape, store, names.v, kv_tokens), batch, cfg.heads);
    return segment_mean_rows(affine(tape, store, names.out, mixed), cfg.tokens);
}

Var self_attention(Tape& tape, const ParamStore& store, const AttentionConfig& cfg, const Var& r_m,
                   const std::string& modality)
{
    if (modality != "T" && modality != "V") throw std::invalid_argument("self_attention: modality must be T or V");
    return attention_block(tape, store, cfg, AttentionNames::self(modality), r_m, r_m);
}

CoAttention co_attention(Tape& tape, const ParamStore& store, const AttentionConfig& cfg, const Var& z_t,
                         const Var& z_v)
{
    return {attention_block(tape, store, cfg, AttentionNames::co("T", "V"), z_t, z_v),
            attention_block(tape, store, cfg, AttentionNames::co("V", "T"), z_v, z_t)};
}

Var intrinsic_rep(const Var& z_tv, const Var& z_vt)
{
    return scale(add(z_tv, z_vt), 0.5);
}

// ============================================================================
// Losses
// ============================================================================

SclResult scl_loss(const Var& reps, std::span<const int> labels, double tau)
{
    const std::size_t n = reps.rows();
    if (n < 2) throw std::invalid_argument("scl_loss needs at least two samples");
    if (labels.size() != n) throw DimensionError("scl_loss: label count does not match batch");
    if (!(tau > 0)) throw std::invalid_argument("scl_loss: temperature must be positive");

    Tensor positives(Shape{n, n});
    Tensor has_positive(Shape{n, 1});
    std::size_t anchors = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t count = 0;
        for (std::size_t j = 0; j < n; ++j) count += (j != i && labels[j] == labels[i]);
        if (count == 0) continue;
        ++anchors;
        has_positive[i] = 1.0;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i && labels[j] == labels[i]) positives.at(i, j) = 1.0 / static_cast<double>(count);
    }
    if (anchors == 0) return {Var(Tensor::scalar(0.0)), true};

    const Var normed = row_l2_normalize(reps);
    const Var sim = scale(matmul(normed, transpose(normed)), 1.0 / tau);
    const Var lse = masked_logsumexp_rows(sim, off_diagonal(n));
    const Var per_anchor = sub(sum(mul(lse, Var(has_positive))), sum(mul(sim, Var(positives))));
    return {scale(per_anchor, 1.0 / static_cast<double>(anchors)), false};
}

Var cmca_loss(const Var& z, const Var& r, double tau)
{
    const std::size_t n = z.rows();
    if (n == 0 || z.numel() == 0) throw std::invalid_argument("cmca_loss needs at least one pair");
    if (r.rows() != n || r.cols() != z.cols())
        throw DimensionError("cmca_loss: " + shape_str(z.shape()) + " vs " + shape_str(r.shape()));
    if (!(tau > 0)) throw std::invalid_argument("cmca_loss: temperature must be positive");

    const Var zn = row_l2_normalize(z);
    const Var rn = row_l2_normalize(r);
    const Var s_zz = scale(matmul(zn, transpose(zn)), 1.0 / tau);
    const Var s_rr = scale(matmul(rn, transpose(rn)), 1.0 / tau);
    const Var s_zr = scale(matmul(zn, transpose(rn)), 1.0 / tau);
    const Var s_rz = transpose(s_zr);

    // Denominator of anchor i: every same-side sample except i, every other-side sample.
    Tensor mask(Shape{n, 2 * n}, 1.0);
    for (std::size_t i = 0; i < n; ++i) mask.at(i, i) = 0.0;
    const Var lse_z = masked_logsumexp_rows(concat_cols({s_zz, s_zr}), mask);
    const Var lse_r = masked_logsumexp_rows(concat_cols({s_rr, s_rz}), mask);
    const Var positives = sum(mul(s_zr, Var(Tensor::identity(n))));
    const Var total = sub(add(sum(lse_z), sum(lse_r)), scale(positives, 2.0));
    return scale(total, 1.0 / (2.0 * static_cast<double>(n)));
}

CommonSpace project_common(Tape& tape, const ParamStore& store, const Var& z, const Var& r_g)
{
    return {relu(affine(tape, store, "ml.z", z)), relu(affine(tape, store, "ml.g", r_g))};
}

LabelDistributions label_distributions(Tape& tape, const ParamStore& store, const CommonSpace& common)
{
    return {softmax_rows(affine(tape, store, "ml.z.fc", common.e_z)),
            softmax_rows(affine(tape, store, "ml.g.fc", common.e_rg))};
}

Var kl_divergence(const Var& p, const Var& q)
{
    if (p.shape() != q.shape())
        throw DimensionError("kl_divergence: " + shape_str(p.shape()) + " vs " + shape_str(q.shape()));
    const Var lp = log_clamped(p, kEps, 1.0);
    const Var lq = log_clamped(q, kEps, 1.0);
    const Shape rows{p.rows(), p.cols()};
    return sum_cols(mul(reshape(p, rows), reshape(sub(lp, lq), rows)));
}

Var mutual_learning_loss(const Var& p_z, const Var& p_rg)
{
    const double n = static_cast<double>(p_z.rows());
    return scale(add(sum(kl_divergence(p_z, p_rg)), sum(kl_divergence(p_rg, p_z))), 0.5 / n);
}

} // namespace ismaf
