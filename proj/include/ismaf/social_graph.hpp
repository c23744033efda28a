#pragma once

#include "ismaf/data.hpp"
#include "ismaf/kernels.hpp"
#include "ismaf/tensor.hpp"

#include <string>
#include <unordered_map>
#include <vector>

namespace ismaf {

enum class NodeKind : std::uint8_t { post = 0, comment = 1, user = 2 };

struct GraphNode {
    std::string id;
    NodeKind kind;
};

// Undirected edge; a == b for self-loops.
struct GraphEdge {
    std::size_t a;
    std::size_t b;
    double weight;    // cosine similarity of the endpoint embeddings, 1 on self-loops
    bool structural;  // authorship or comment-of relation
};

struct GraphBuildOptions {
    double threshold = 0.5;
    bool connect_heterogeneous = true;  // similarity edges across node kinds
    // Center every feature column and scale it to unit variance over all
    // nodes before similarities are taken; the GAT then sees O(1) inputs.
    bool standardize = true;
};

// Posts, then comments, then users, each in dataset order.
class SocialGraph {
public:
    const std::vector<GraphNode>& nodes() const { return nodes_; }
    const std::vector<GraphEdge>& edges() const { return edges_; }
    const Tensor& embeddings() const { return embeddings_; }
    const kernels::EdgeIndex& in_edges() const { return in_edges_; }
    std::size_t size() const { return nodes_.size(); }

    std::size_t node_of(NodeKind kind, const std::string& id) const;
    bool has_edge(std::size_t a, std::size_t b) const;
    double edge_weight(std::size_t a, std::size_t b) const;

    // Assembles a graph from explicit parts, adding any missing self-loop.
    static SocialGraph from_parts(std::vector<GraphNode> nodes, Tensor embeddings, std::vector<GraphEdge> edges);

private:
    std::vector<GraphNode> nodes_;
    Tensor embeddings_;
    std::vector<GraphEdge> edges_;
    kernels::EdgeIndex in_edges_;
    std::unordered_map<std::string, std::size_t> lookup_;
};

// Per column: subtract the mean, divide by the population standard
// deviation (columns with zero spread are only centered).
void standardize_columns(Tensor& m);

// Text representation used for post and comment nodes: the mean embedding
// of the non-padding tokens (zero for an all-padding sequence).
Tensor mean_token_embedding(const std::vector<int>& tokens, const Tensor& word_embeddings);

// post_text and comment_text hold one row per post / comment in dataset
// order. Users are embedded as the mean of the posts and comments they
// authored, or zero when they authored nothing.
SocialGraph build_social_graph(const Dataset& data, const Tensor& post_text, const Tensor& comment_text,
                               const GraphBuildOptions& options);

SocialGraph build_social_graph(const Dataset& data, const Tensor& word_embeddings, const GraphBuildOptions& options);

} // namespace ismaf
