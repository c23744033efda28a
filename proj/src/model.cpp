#include "ismaf/model.hpp"

#include <algorithm>
#include <stdexcept>

namespace ismaf {

using namespace ad;

InputShape input_shape_of(const Dataset& data, std::size_t min_seq_len)
{
    if (data.posts.empty()) throw std::invalid_argument("dataset has no posts");
    return {data.max_token() + 1, std::max(data.max_length(), min_seq_len), data.visual_dim()};
}

TextEncoderConfig Model::text_config() const
{
    return make_text_config(input.vocab_size, config.d, input.seq_len, config.kernel_sizes);
}

GatConfig Model::gat_config() const
{
    GatConfig g;
    g.heads = config.heads;
    g.layers = config.gat_layers;
    g.threshold = config.theta;
    g.leaky_slope = config.leaky_slope;
    g.connect_heterogeneous = config.connect_heterogeneous;
    return g;
}

AttentionConfig Model::attention_config() const
{
    return {config.d, config.heads, config.effective_lift_tokens()};
}

Model init_model(const TrainConfig& config, const InputShape& input)
{
    config.validate();
    if (input.vocab_size < 2 || input.visual_dim == 0) throw std::invalid_argument("init_model: empty input shape");
    Model m{config, input, ParamStore(config.seed)};
    const std::size_t d = config.d;
    init_text_params(m.params, m.text_config());
    init_visual_params(m.params, input.visual_dim, d);
    init_gat_params(m.params, m.gat_config(), d);
    init_bridging_params(m.params, m.attention_config(), config.effective_common_dim());
    init_fusion_params(m.params, d, config.fusion_depth);
    init_alternate_params(m.params, FusionKind::is_concat, m.attention_config());
    init_alternate_params(m.params, FusionKind::is_att, m.attention_config());
    init_classifier_params(m.params, d);
    return m;
}

SocialGraph build_graph(const Model& model, const Dataset& data)
{
    GraphBuildOptions opts;
    opts.threshold = model.config.theta;
    opts.connect_heterogeneous = model.config.connect_heterogeneous;
    return build_social_graph(data, model.params.get("text.embedding"), opts);
}

namespace {

Var zero_scalar()
{
    return Var(Tensor::scalar(0.0));
}

} // namespace

ForwardResult forward(Tape& tape, const Model& model, const Dataset& data, const SocialGraph& graph,
                      std::span<const std::size_t> posts, const ForwardOptions& options)
{
    return forward(tape, model, model.params, data, graph, posts, options);
}

ForwardResult forward(Tape& tape, const Model& model, const ParamStore& store, const Dataset& data,
                      const SocialGraph& graph, std::span<const std::size_t> posts, const ForwardOptions& options)
{
    if (posts.empty()) throw std::invalid_argument("forward: empty batch");
    if (options.training && !options.rng) throw std::invalid_argument("forward: training needs a random generator");
    const TrainConfig& cfg = model.config;
    const std::size_t n = posts.size();

    std::vector<std::vector<int>> tokens;
    std::vector<std::string> ids;
    std::vector<int> labels;
    Tensor visual(Shape{n, model.input.visual_dim});
    for (std::size_t b = 0; b < n; ++b) {
        const PostRecord& p = data.posts.at(posts[b]);
        if (p.visual_feat.size() != model.input.visual_dim)
            throw DimensionError("forward: post " + p.id + " has " + std::to_string(p.visual_feat.size()) +
                                 " visual features, model expects " + std::to_string(model.input.visual_dim));
        tokens.push_back(p.tokens);
        ids.push_back(p.id);
        labels.push_back(p.label);
        std::copy(p.visual_feat.begin(), p.visual_feat.end(), visual.row(b).begin());
    }

    // Unimodal representations.
    const Var r_t = encode_text(tape, store, model.text_config(), tokens);
    const Var r_v = project_visual(tape, store, Var(visual));
    const Var r_g = options.zero_social ? Var(Tensor(Shape{n, cfg.d}))
                                        : extract_social(run_gat(tape, store, model.gat_config(), graph), graph, ids);

    // Bridging.
    const AttentionConfig attn = model.attention_config();
    const Var z_t = self_attention(tape, store, attn, r_t, "T");
    const Var z_v = self_attention(tape, store, attn, r_v, "V");
    const CoAttention co = co_attention(tape, store, attn, z_t, z_v);
    const Var z = intrinsic_rep(co.tv, co.vt);

    // Fusion.
    const FusionKind kind = cfg.effective_fusion();
    ForwardResult out;
    Var fused, af = zero_scalar();
    if (kind == FusionKind::adaptive) {
        FusionResult fr = adaptive_fuse(tape, store, co.tv, co.vt, r_g, cfg.fusion_depth, options.frozen_fusion_input);
        fused = fr.fused;
        af = fr.loss;
        out.fusion_input = concat_cols({co.tv, co.vt, r_g}).value();
    } else {
        fused = fuse_alternate(tape, store, kind, attn, z, r_g);
    }
    if (options.training) fused = dropout(fused, cfg.dropout, *options.rng, true);

    out.rumor_prob = slice_cols(classify(tape, store, fused), 1, 1);
    if (!options.compute_losses) return out;

    LossTerms& t = out.terms;
    t.ce = ce_loss(out.rumor_prob, labels);
    t.scl = t.cmca = t.ml = zero_scalar();
    t.af = af;
    if (cfg.use_mre && n >= 2) {
        SclResult s = scl_loss(concat_cols({r_t, r_v, r_g}), labels, cfg.tau_scl);
        t.scl = s.loss;
        out.scl_skipped = s.all_skipped;
    }
    if (cfg.use_cmca) t.cmca = cmca_loss(z, r_g, cfg.tau_cmca);
    if (cfg.use_ml) {
        const LabelDistributions dist = label_distributions(tape, store, project_common(tape, store, z, r_g));
        t.ml = mutual_learning_loss(dist.p_z, dist.p_rg);
    }
    out.total = overall_loss(t, cfg.effective_lambda());
    out.breakdown = {t.ce.item(), t.scl.item(), t.cmca.item(), t.ml.item(), t.af.item(), out.total.item()};
    return out;
}

std::vector<double> predict(const Model& model, const Dataset& data, const SocialGraph& graph,
                            std::span<const std::size_t> posts, bool zero_social)
{
    if (posts.empty()) return {};
    Tape tape(false);
    ForwardOptions opts;
    opts.compute_losses = false;
    opts.zero_social = zero_social;
    const ForwardResult r = forward(tape, model, data, graph, posts, opts);
    const auto probs = r.rumor_prob.value().data();
    return {probs.begin(), probs.end()};
}

} // namespace ismaf
