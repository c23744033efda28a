#include "ismaf/gradient_suite.hpp"

#include "ismaf/model.hpp"

#include <functional>
#include <random>
#include <stdexcept>

namespace ismaf {

namespace {

// The first `batch` posts in an order alternating the two labels, so
// contrastive terms have positives and negatives.
std::vector<std::size_t> mixed_batch(const Dataset& data, std::size_t batch)
{
    std::vector<std::size_t> by_label[2];
    for (std::size_t i = 0; i < data.posts.size(); ++i) by_label[data.posts[i].label].push_back(i);
    std::vector<std::size_t> out;
    for (std::size_t k = 0; out.size() < batch; ++k) {
        if (k >= by_label[0].size() && k >= by_label[1].size()) throw std::invalid_argument("corpus too small");
        for (int y : {1, 0})
            if (k < by_label[y].size() && out.size() < batch) out.push_back(by_label[y][k]);
    }
    return out;
}

} // namespace

std::vector<GradientCase> run_gradient_suite(const GradientSuiteOptions& options)
{
    SyntheticSpec spec;
    spec.n = 20;
    spec.d = 6;
    spec.separation = 2.0;
    spec.graph_noise = 0.2;
    spec.seed = options.seed;
    spec.vocab_size = 24;
    spec.seq_len = 6;
    spec.comments_per_post = 1;
    spec.users = 4;
    const Dataset data = generate_synthetic(spec);

    TrainConfig cfg;
    cfg.d = 8;
    cfg.heads = 2;
    cfg.gat_layers = 2;
    cfg.kernel_sizes = {2, 3};
    cfg.theta = 0.3;
    cfg.seed = options.seed;
    cfg.tau_scl = 0.5;
    cfg.tau_cmca = 0.5;
    Model model = init_model(cfg, input_shape_of(data));
    // Zero-initialized biases put relu units fed by padding windows exactly
    // on their kink; move every exact zero off it.
    std::mt19937_64 jitter_rng(options.seed);
    std::uniform_real_distribution<double> jitter(-0.1, 0.1);
    for (const auto& name : model.params.names()) {
        if (!model.params.trainable(name)) continue;
        for (double& v : model.params.mutable_value(name).data())
            if (v == 0.0) v = jitter(jitter_rng);
    }
    const SocialGraph graph = build_graph(model, data);
    const std::vector<std::size_t> batch = mixed_batch(data, options.batch);

    using Pick = std::function<ad::Var(const ForwardResult&)>;
    const std::vector<std::pair<std::string, Pick>> losses = {
        {"ce", [](const ForwardResult& f) { return f.terms.ce; }},
        {"scl", [](const ForwardResult& f) { return f.terms.scl; }},
        {"cmca", [](const ForwardResult& f) { return f.terms.cmca; }},
        {"ml", [](const ForwardResult& f) { return f.terms.ml; }},
        {"af", [](const ForwardResult& f) { return f.terms.af; }},
        {"overall", [](const ForwardResult& f) { return f.total; }},
    };

    // The reconstruction target is a constant in the backward pass; hold it
    // at its unperturbed value so central differences see the same objective.
    ad::Tape base(false);
    const Tensor frozen = forward(base, model, data, graph, batch, ForwardOptions{}).fusion_input;
    ForwardOptions opts;
    opts.frozen_fusion_input = &frozen;

    std::vector<GradientCase> out;
    for (const auto& [name, pick] : losses) {
        const ad::LossFn fn = [&, pick = pick](ad::Tape& tape, const ad::ParamStore& params) {
            return pick(forward(tape, model, params, data, graph, batch, opts));
        };
        ad::GradCheckOptions gc{options.h, options.max_per_param, options.seed, options.skip_nonsmooth,
                                options.tolerance};
        out.push_back({name, ad::grad_check(fn, model.params, gc)});
    }
    return out;
}

} // namespace ismaf
