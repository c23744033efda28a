#include "ismaf/social_graph.hpp"

#include "ismaf/ops.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace ismaf {

namespace {

std::string key(NodeKind kind, const std::string& id)
{
    return std::to_string(static_cast<int>(kind)) + ":" + id;
}

double cosine(std::span<const double> a, std::span<const double> b)
{
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return dot / ((std::sqrt(na) + ad::kEps) * (std::sqrt(nb) + ad::kEps));
}

} // namespace

std::size_t SocialGraph::node_of(NodeKind kind, const std::string& id) const
{
    auto it = lookup_.find(key(kind, id));
    if (it == lookup_.end()) throw std::out_of_range("no graph node for '" + id + "'");
    return it->second;
}

bool SocialGraph::has_edge(std::size_t a, std::size_t b) const
{
    const auto begin = in_edges_.sources.begin() + static_cast<std::ptrdiff_t>(in_edges_.offsets[a]);
    const auto end = in_edges_.sources.begin() + static_cast<std::ptrdiff_t>(in_edges_.offsets[a + 1]);
    return std::binary_search(begin, end, b);
}

double SocialGraph::edge_weight(std::size_t a, std::size_t b) const
{
    if (a > b) std::swap(a, b);
    for (const auto& e : edges_)
        if (e.a == a && e.b == b) return e.weight;
    throw std::out_of_range("no edge " + std::to_string(a) + "-" + std::to_string(b));
}

SocialGraph SocialGraph::from_parts(std::vector<GraphNode> nodes, Tensor embeddings, std::vector<GraphEdge> edges)
{
    const std::size_t n = nodes.size();
    if (embeddings.rows() != n)
        throw DimensionError("graph has " + std::to_string(n) + " nodes but " + std::to_string(embeddings.rows()) +
                             " embedding rows");
    SocialGraph g;
    g.nodes_ = std::move(nodes);
    g.embeddings_ = std::move(embeddings);
    for (std::size_t i = 0; i < n; ++i)
        if (!g.lookup_.emplace(key(g.nodes_[i].kind, g.nodes_[i].id), i).second)
            throw std::invalid_argument("duplicate graph node '" + g.nodes_[i].id + "'");

    std::vector<bool> looped(n, false);
    for (auto& e : edges) {
        if (e.a >= n || e.b >= n) throw std::out_of_range("edge endpoint outside the graph");
        if (e.a > e.b) std::swap(e.a, e.b);
        if (e.a == e.b) looped[e.a] = true;
    }
    for (std::size_t i = 0; i < n; ++i)
        if (!looped[i]) edges.push_back({i, i, 1.0, false});
    std::sort(edges.begin(), edges.end(), [](const GraphEdge& x, const GraphEdge& y) {
        return std::pair(x.a, x.b) < std::pair(y.a, y.b);
    });
    g.edges_ = std::move(edges);

    std::vector<std::vector<std::size_t>> incoming(n);
    for (const auto& e : g.edges_) {
        incoming[e.b].push_back(e.a);
        if (e.a != e.b) incoming[e.a].push_back(e.b);
    }
    g.in_edges_.offsets.assign(1, 0);
    for (auto& list : incoming) {
        std::sort(list.begin(), list.end());
        g.in_edges_.sources.insert(g.in_edges_.sources.end(), list.begin(), list.end());
        g.in_edges_.offsets.push_back(g.in_edges_.sources.size());
    }
    return g;
}

Tensor mean_token_embedding(const std::vector<int>& tokens, const Tensor& word_embeddings)
{
    const std::size_t d = word_embeddings.cols();
    Tensor out(Shape{d});
    std::size_t count = 0;
    for (int t : tokens) {
        if (t == kPadToken) continue;
        if (t < 0 || static_cast<std::size_t>(t) >= word_embeddings.rows())
            throw std::out_of_range("token id " + std::to_string(t) + " outside vocabulary of " +
                                    std::to_string(word_embeddings.rows()));
        const auto row = word_embeddings.row(static_cast<std::size_t>(t));
        for (std::size_t c = 0; c < d; ++c) out[c] += row[c];
        ++count;
    }
    if (count)
        for (double& v : out.data()) v /= static_cast<double>(count);
    return out;
}

void standardize_columns(Tensor& m)
{
    const std::size_t rows = m.rows(), cols = m.cols();
    if (rows == 0) return;
    for (std::size_t c = 0; c < cols; ++c) {
        double mean = 0.0, var = 0.0;
        for (std::size_t r = 0; r < rows; ++r) mean += m.at(r, c);
        mean /= static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r) var += (m.at(r, c) - mean) * (m.at(r, c) - mean);
        const double sd = std::sqrt(var / static_cast<double>(rows));
        for (std::size_t r = 0; r < rows; ++r) m.at(r, c) = sd > 0.0 ? (m.at(r, c) - mean) / sd : m.at(r, c) - mean;
    }
}

SocialGraph build_social_graph(const Dataset& data, const Tensor& post_text, const Tensor& comment_text,
                               const GraphBuildOptions& options)
{
    const std::size_t np = data.posts.size(), nc = data.comments.size(), nu = data.users.size();
    if (post_text.rows() != np || (nc && comment_text.rows() != nc))
        throw DimensionError("text representations do not match the post/comment counts");
    const std::size_t d = post_text.cols();
    if (nc && comment_text.cols() != d) throw DimensionError("post and comment representations differ in width");

    std::vector<GraphNode> nodes;
    nodes.reserve(np + nc + nu);
    for (const auto& p : data.posts) nodes.push_back({p.id, NodeKind::post});
    for (const auto& c : data.comments) nodes.push_back({c.id, NodeKind::comment});
    for (const auto& u : data.users) nodes.push_back({u.id, NodeKind::user});

    std::map<std::string, std::size_t> user_index, post_index;
    for (std::size_t u = 0; u < nu; ++u) user_index.emplace(data.users[u].id, np + nc + u);
    for (std::size_t p = 0; p < np; ++p) post_index.emplace(data.posts[p].id, p);
    auto user_node = [&](const std::string& id) {
        auto it = user_index.find(id);
        if (it == user_index.end()) throw std::invalid_argument("unknown user '" + id + "'");
        return it->second;
    };

    Tensor emb(Shape{np + nc + nu, d});
    std::vector<std::size_t> authored(nu, 0);
    auto add_to_user = [&](std::size_t unode, std::span<const double> row) {
        for (std::size_t c = 0; c < d; ++c) emb.at(unode, c) += row[c];
        ++authored[unode - np - nc];
    };
    for (std::size_t p = 0; p < np; ++p) {
        std::copy_n(post_text.row(p).begin(), d, emb.row(p).begin());
        add_to_user(user_node(data.posts[p].user_id), post_text.row(p));
    }
    for (std::size_t c = 0; c < nc; ++c) {
        std::copy_n(comment_text.row(c).begin(), d, emb.row(np + c).begin());
        add_to_user(user_node(data.comments[c].user_id), comment_text.row(c));
    }
    for (std::size_t u = 0; u < nu; ++u)
        if (authored[u])
            for (std::size_t c = 0; c < d; ++c) emb.at(np + nc + u, c) /= static_cast<double>(authored[u]);

    if (options.standardize) standardize_columns(emb);

    std::map<std::pair<std::size_t, std::size_t>, bool> pairs;  // -> structural
    auto link = [&](std::size_t a, std::size_t b, bool structural) {
        if (a == b) return;
        auto [it, inserted] = pairs.emplace(std::minmax(a, b), structural);
        if (!inserted) it->second = it->second || structural;
    };
    for (std::size_t p = 0; p < np; ++p) link(p, user_node(data.posts[p].user_id), true);
    for (std::size_t c = 0; c < nc; ++c) {
        auto it = post_index.find(data.comments[c].post_id);
        if (it == post_index.end()) throw std::invalid_argument("comment on unknown post '" + data.comments[c].post_id + "'");
        link(np + c, it->second, true);
        link(np + c, user_node(data.comments[c].user_id), true);
    }

    const auto neighbors = kernels::cosine_neighbors(emb, options.threshold, ad::kEps);
    for (std::size_t i = 0; i < neighbors.size(); ++i)
        for (const auto& nb : neighbors[i])
            if (options.connect_heterogeneous || nodes[i].kind == nodes[nb.index].kind) link(i, nb.index, false);

    std::vector<GraphEdge> edges;
    edges.reserve(pairs.size() + nodes.size());
    for (const auto& [ab, structural] : pairs)
        edges.push_back({ab.first, ab.second, cosine(emb.row(ab.first), emb.row(ab.second)), structural});
    for (std::size_t i = 0; i < nodes.size(); ++i) edges.push_back({i, i, 1.0, false});
    return SocialGraph::from_parts(std::move(nodes), std::move(emb), std::move(edges));
}

SocialGraph build_social_graph(const Dataset& data, const Tensor& word_embeddings, const GraphBuildOptions& options)
{
    const std::size_t d = word_embeddings.cols();
    Tensor posts(Shape{data.posts.size(), d});
    Tensor comments(Shape{data.comments.size(), d});
    for (std::size_t p = 0; p < data.posts.size(); ++p) {
        const Tensor r = mean_token_embedding(data.posts[p].tokens, word_embeddings);
        std::copy_n(r.data().begin(), d, posts.row(p).begin());
    }
    for (std::size_t c = 0; c < data.comments.size(); ++c) {
        const Tensor r = mean_token_embedding(data.comments[c].tokens, word_embeddings);
        std::copy_n(r.data().begin(), d, comments.row(c).begin());
    }
    return build_social_graph(data, posts, comments, options);
}

} // namespace ismaf
