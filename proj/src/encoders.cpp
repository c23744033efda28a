#include "ismaf/encoders.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace ismaf {

using namespace ad;

// ============================================================================
// Text
// ============================================================================

std::size_t TextEncoderConfig::output_dim() const
{
    return std::accumulate(filters.begin(), filters.end(), std::size_t{0});
}

void TextEncoderConfig::validate() const
{
    if (vocab_size < 2) throw std::invalid_argument("text encoder: vocab_size must be at least 2");
    if (embed_dim == 0) throw std::invalid_argument("text encoder: embed_dim must be positive");
    if (kernel_sizes.empty() || kernel_sizes.size() != filters.size())
        throw std::invalid_argument("text encoder: one filter count per kernel size required");
    for (std::size_t k : kernel_sizes)
        if (k == 0 || k > seq_len)
            throw std::invalid_argument("text encoder: kernel size " + std::to_string(k) + " does not fit seq_len " +
                                        std::to_string(seq_len));
}

TextEncoderConfig make_text_config(int vocab_size, std::size_t d, std::size_t seq_len,
                                   std::vector<std::size_t> kernel_sizes)
{
    if (kernel_sizes.empty()) throw std::invalid_argument("text encoder: no kernel sizes");
    if (d < kernel_sizes.size())
        throw std::invalid_argument("text encoder: width " + std::to_string(d) + " smaller than kernel count");
    TextEncoderConfig cfg;
    cfg.vocab_size = vocab_size;
    cfg.embed_dim = d;
    cfg.seq_len = std::max(seq_len, *std::max_element(kernel_sizes.begin(), kernel_sizes.end()));
    const std::size_t base = d / kernel_sizes.size(), extra = d % kernel_sizes.size();
    for (std::size_t i = 0; i < kernel_sizes.size(); ++i) cfg.filters.push_back(base + (i < extra ? 1 : 0));
    cfg.kernel_sizes = std::move(kernel_sizes);
    cfg.validate();
    return cfg;
}

void init_text_params(ParamStore& store, const TextEncoderConfig& cfg)
{
    cfg.validate();
    const Tensor& table = store.create("text.embedding",
                                       Shape{static_cast<std::size_t>(cfg.vocab_size), cfg.embed_dim},
                                       ParamStore::Init::xavier_uniform, false);
    Tensor padded = table;
    for (double& v : padded.row(kPadToken)) v = 0.0;
    store.set("text.embedding", std::move(padded));
    for (std::size_t i = 0; i < cfg.kernel_sizes.size(); ++i) {
        const std::string p = "text.conv" + std::to_string(cfg.kernel_sizes[i]);
        store.create(p + ".w", Shape{cfg.kernel_sizes[i] * cfg.embed_dim, cfg.filters[i]});
        store.create(p + ".b", Shape{cfg.filters[i]}, ParamStore::Init::zeros);
    }
}

std::vector<std::size_t> pad_tokens(std::span<const std::vector<int>> batch, const TextEncoderConfig& cfg)
{
    std::vector<std::size_t> ids(batch.size() * cfg.seq_len, static_cast<std::size_t>(kPadToken));
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& tokens = batch[b];
        if (tokens.empty() || std::all_of(tokens.begin(), tokens.end(), [](int t) { return t == kPadToken; }))
            throw std::invalid_argument("encode_text: empty token sequence at batch position " + std::to_string(b));
        if (tokens.size() > cfg.seq_len)
            throw std::invalid_argument("encode_text: sequence of " + std::to_string(tokens.size()) +
                                        " tokens exceeds seq_len " + std::to_string(cfg.seq_len));
        for (std::size_t t = 0; t < tokens.size(); ++t) {
            if (tokens[t] < 0 || tokens[t] >= cfg.vocab_size)
                throw std::out_of_range("encode_text: unknown token id " + std::to_string(tokens[t]));
            ids[b * cfg.seq_len + t] = static_cast<std::size_t>(tokens[t]);
        }
    }
    return ids;
}

Var encode_text(Tape& tape, const ParamStore& store, const TextEncoderConfig& cfg,
                std::span<const std::vector<int>> batch)
{
    if (batch.empty()) throw std::invalid_argument("encode_text: empty batch");
    const auto ids = pad_tokens(batch, cfg);
    const Var table = tape.param(store, "text.embedding");
    if (table.cols() != cfg.embed_dim || table.rows() != static_cast<std::size_t>(cfg.vocab_size))
        throw DimensionError("encode_text: embedding table " + shape_str(table.shape()) + " does not match config");
    const Var embedded = gather_rows(table, ids);

    std::vector<Var> pooled;
    for (std::size_t i = 0; i < cfg.kernel_sizes.size(); ++i) {
        const std::size_t k = cfg.kernel_sizes[i];
        const std::string p = "text.conv" + std::to_string(k);
        const Var windows = unfold_windows(embedded, batch.size(), cfg.seq_len, k);
        const Var conv = relu(add_row(matmul(windows, tape.param(store, p + ".w")), tape.param(store, p + ".b")));
        pooled.push_back(segment_max_rows(conv, cfg.seq_len - k + 1));
    }
    return concat_cols(pooled);
}

// ============================================================================
// Visual
// ============================================================================

void init_visual_params(ParamStore& store, std::size_t visual_dim, std::size_t d)
{
    store.create("visual.w", Shape{visual_dim, d});
    store.create("visual.b", Shape{d}, ParamStore::Init::zeros);
}

Var project_visual(Tape& tape, const ParamStore& store, const Var& visual)
{
    const Var w = tape.param(store, "visual.w");
    if (visual.cols() != w.rows())
        throw DimensionError("project_visual: features " + shape_str(visual.shape()) + " for weights " +
                             shape_str(w.shape()));
    return relu(add_row(matmul(visual, w), tape.param(store, "visual.b")));
}

// ============================================================================
// Social
// ============================================================================

void GatConfig::validate() const
{
    if (heads == 0) throw std::invalid_argument("gat: heads must be at least 1");
    if (threshold < 0.0 || threshold >= 1.0) throw std::invalid_argument("gat: threshold must lie in [0, 1)");
}

void init_gat_params(ParamStore& store, const GatConfig& cfg, std::size_t d)
{
    cfg.validate();
    const std::size_t dh = cfg.head_width(d), wide = dh * cfg.heads;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const std::string p = "gat" + std::to_string(l);
        store.create(p + ".w", Shape{d, wide});
        store.create(p + ".attn", Shape{cfg.heads, 2 * dh});
        store.create(p + ".out.w", Shape{wide, d});
        store.create(p + ".out.b", Shape{d}, ParamStore::Init::zeros);
    }
}

Var signed_gat_layer(Tape& tape, const ParamStore& store, const GatConfig& cfg, std::size_t layer,
                     const SocialGraph& graph, const Var& features)
{
    const std::string p = "gat" + std::to_string(layer);
    const Var projected = matmul(features, tape.param(store, p + ".w"));
    const Var mixed = signed_gat(projected, tape.param(store, p + ".attn"), graph.in_edges(), cfg.heads,
                                 cfg.leaky_slope);
    return add_row(matmul(elu(mixed), tape.param(store, p + ".out.w")), tape.param(store, p + ".out.b"));
}

Var run_gat(Tape& tape, const ParamStore& store, const GatConfig& cfg, const SocialGraph& graph)
{
    Var h(graph.embeddings());
    for (std::size_t l = 0; l < cfg.layers; ++l) h = signed_gat_layer(tape, store, cfg, l, graph, h);
    return h;
}

Var extract_social(const Var& node_features, const SocialGraph& graph, std::span<const std::string> post_ids)
{
    std::vector<std::size_t> rows;
    rows.reserve(post_ids.size());
    for (const auto& id : post_ids) rows.push_back(graph.node_of(NodeKind::post, id));
    return gather_rows(node_features, rows);
}

} // namespace ismaf
