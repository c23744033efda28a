#include "ismaf/fusion.hpp"

#include "ismaf/bridging.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ismaf {

using namespace ad;

FusionKind parse_fusion(const std::string& name)
{
    if (name == "af" || name == "adaptive") return FusionKind::adaptive;
    if (name == "is-concat") return FusionKind::is_concat;
    if (name == "is-att") return FusionKind::is_att;
    throw std::invalid_argument("unknown fusion kind '" + name + "' (expected af, is-concat or is-att)");
}

const char* fusion_name(FusionKind kind)
{
    switch (kind) {
    case FusionKind::adaptive: return "af";
    case FusionKind::is_concat: return "is-concat";
    case FusionKind::is_att: return "is-att";
    }
    return "?";
}

namespace {

Var affine(Tape& tape, const ParamStore& store, const std::string& prefix, const Var& x)
{
    return add_row(matmul(x, tape.param(store, prefix + ".w")), tape.param(store, prefix + ".b"));
}

void create_affine(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out)
{
    store.create(prefix + ".w", Shape{in, out});
    store.create(prefix + ".b", Shape{out}, ParamStore::Init::zeros);
}

} // namespace

void init_fusion_params(ParamStore& store, std::size_t d, std::size_t depth)
{
    if (depth == 0) throw std::invalid_argument("fusion depth must be at least 1");
    for (std::size_t l = 0; l < depth; ++l) {
        const std::size_t in = l == 0 ? 3 * d : 2 * d;
        const std::size_t out = l + 1 == depth ? d : 2 * d;
        create_affine(store, "fuse.enc" + std::to_string(l), in, out);
        create_affine(store, "fuse.dec" + std::to_string(l), out, in);
    }
}

void init_classifier_params(ParamStore& store, std::size_t d)
{
    create_affine(store, "cls", d, 2);
}

void init_alternate_params(ParamStore& store, FusionKind kind, const AttentionConfig& attn)
{
    if (kind == FusionKind::is_concat && !store.contains("isconcat.w")) create_affine(store, "isconcat", 2 * attn.d, attn.d);
    if (kind == FusionKind::is_att) init_attention_params(store, attn, {"isatt.q", "isatt.k", "isatt.v", "isatt.o"});
}

Var reconstruction_loss(const Var& reconstruction, const Var& target)
{
    const Var diff = sub(reconstruction, target);
    return scale(sum(mul(diff, diff)), 1.0 / static_cast<double>(target.rows()));
}

FusionResult adaptive_fuse(Tape& tape, const ParamStore& store, const Var& z_tv, const Var& z_vt, const Var& r_g,
                           std::size_t depth, const Tensor* frozen_x)
{
    if (z_tv.shape() != z_vt.shape() || z_tv.shape() != r_g.shape())
        throw DimensionError("adaptive_fuse: inputs " + shape_str(z_tv.shape()) + ", " + shape_str(z_vt.shape()) +
                             ", " + shape_str(r_g.shape()));
    const Var x = concat_cols({z_tv, z_vt, r_g});
    auto encode = [&](Var h) {
        for (std::size_t l = 0; l < depth; ++l) h = tanh(affine(tape, store, "fuse.enc" + std::to_string(l), h));
        return h;
    };
    auto decode = [&](Var h) {
        for (std::size_t l = depth; l-- > 0;) {
            h = affine(tape, store, "fuse.dec" + std::to_string(l), h);
            if (l > 0) h = tanh(h);
        }
        return h;
    };
    // The reconstruction pass sees X as a constant, so L_af trains only the
    // encoder and decoder. Letting it reach the upstream features lets it
    // shrink them toward trivially reconstructible values, which wipes out R_G.
    if (frozen_x && frozen_x->shape() != x.shape())
        throw DimensionError("adaptive_fuse: frozen input " + shape_str(frozen_x->shape()) + " for " +
                             shape_str(x.shape()));
    const Var target(frozen_x ? *frozen_x : x.value());
    const Var recon = decode(encode(target));
    return {encode(x), recon, reconstruction_loss(recon, target)};
}

Var fuse_alternate(Tape& tape, const ParamStore& store, FusionKind kind, const AttentionConfig& attn, const Var& z,
                   const Var& r_g)
{
    switch (kind) {
    case FusionKind::is_concat: return affine(tape, store, "isconcat", concat_cols({z, r_g}));
    case FusionKind::is_att:
        return attention_block(tape, store, attn, {"isatt.q", "isatt.k", "isatt.v", "isatt.o"}, z, r_g);
    case FusionKind::adaptive: break;
    }
    throw std::invalid_argument("fuse_alternate: adaptive fusion is not an alternate");
}

Var classify(Tape& tape, const ParamStore& store, const Var& fused)
{
    return softmax_rows(affine(tape, store, "cls", fused));
}

int predict_label(double rumor_probability)
{
    return rumor_probability > 0.5 ? 1 : 0;
}

namespace {

void check_labels(std::span<const int> labels, std::size_t n)
{
    if (labels.size() != n) throw DimensionError("ce_loss: label count does not match predictions");
    for (int y : labels)
        if (y != 0 && y != 1) throw std::invalid_argument("ce_loss: labels must be 0 or 1");
}

} // namespace

Var ce_loss(const Var& rumor_prob, std::span<const int> labels)
{
    const std::size_t n = rumor_prob.numel();
    check_labels(labels, n);
    Tensor pos(Shape{n, 1}), neg(Shape{n, 1});
    for (std::size_t i = 0; i < n; ++i) (labels[i] ? pos : neg)[i] = 1.0;
    const Var p = reshape(rumor_prob, Shape{n, 1});
    const Var q = add(scale(p, -1.0), Var(Tensor(Shape{n, 1}, 1.0)));
    const Var ll = add(mul(Var(pos), log_clamped(p, kEps, 1.0 - kEps)), mul(Var(neg), log_clamped(q, kEps, 1.0 - kEps)));
    return scale(sum(ll), -1.0 / static_cast<double>(n));
}

double ce_loss(std::span<const double> rumor_prob, std::span<const int> labels)
{
    check_labels(labels, rumor_prob.size());
    double s = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double p = std::clamp(rumor_prob[i], kEps, 1.0 - kEps);
        s += labels[i] ? std::log(p) : std::log(1.0 - p);
    }
    return -s / static_cast<double>(labels.size());
}

void LossWeights::validate() const
{
    for (double w : as_array())
        if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("loss weights must be finite and non-negative");
}

double overall_loss(const LossBreakdown& p, const LossWeights& w)
{
    w.validate();
    return p.ce + w.scl * p.scl + w.cmca * p.cmca + w.ml * p.ml + w.af * p.af;
}

Var overall_loss(const LossTerms& t, const LossWeights& w)
{
    w.validate();
    Var total = t.ce;
    const std::array<std::pair<const Var*, double>, 4> parts = {
        {{&t.scl, w.scl}, {&t.cmca, w.cmca}, {&t.ml, w.ml}, {&t.af, w.af}}};
    for (const auto& [term, weight] : parts)
        if (weight != 0.0) total = add(total, scale(*term, weight));
    return total;
}

} // namespace ismaf
