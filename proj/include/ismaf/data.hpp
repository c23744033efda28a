#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ismaf {

// Token id 0 is padding everywhere; real vocabulary ids start at 1.
inline constexpr int kPadToken = 0;

struct PostRecord {
    std::string id;
    std::vector<int> tokens;
    std::vector<double> visual_feat;
    std::string user_id;
    std::vector<std::string> comment_ids;
    int label = 0;  // 1 = rumor
};

struct CommentRecord {
    std::string id;
    std::vector<int> tokens;
    std::string user_id;
    std::string post_id;
};

struct UserRecord {
    std::string id;
};

struct Dataset {
    std::vector<PostRecord> posts;
    std::vector<CommentRecord> comments;
    std::vector<UserRecord> users;

    int max_token() const;
    std::size_t max_length() const;
    std::size_t visual_dim() const;
    // Throws std::invalid_argument on dangling references, bad labels,
    // inconsistent visual dimensions, non-finite features or negative tokens.
    void validate() const;
};

Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const Dataset& data, const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

enum class Split : std::uint8_t { train = 0, val = 1, test = 2 };

Split parse_split(const std::string& name);
const char* split_name(Split s);

struct SplitFractions {
    double train = 0.7;
    double val = 0.1;
    double test = 0.2;
};

struct SplitAssignment {
    std::vector<Split> of_post;  // indexed like Dataset::posts

    std::vector<std::size_t> indices(Split s) const;
};

// Split sizes are floor(train*N), floor(val*N) and the remainder. Each
// label is spread over the splits with per-split counts within one sample
// of the exact proportion. Deterministic in `seed`.
SplitAssignment split_dataset(const std::vector<int>& labels, const SplitFractions& fractions, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

struct SyntheticSpec {
    std::size_t n = 600;
    std::size_t d = 32;          // informs the default visual width only
    double separation = 5.0;     // distance between class means of visual features
    double graph_noise = 0.1;    // 0 = social wiring follows the label, 1 = random
    std::uint64_t seed = 42;
    std::size_t visual_dim = 0;  // 0 -> d
    int vocab_size = 200;
    std::size_t seq_len = 16;
    std::size_t comments_per_post = 3;
    std::size_t users = 0;       // 0 -> max(4, n / 10)
};

Dataset generate_synthetic(const SyntheticSpec& spec);

} // namespace ismaf
