#include "ismaf/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>
#include <unordered_set>

namespace ismaf {

using nlohmann::json;

int Dataset::max_token() const
{
    int m = 0;
    for (const auto& p : posts)
        for (int t : p.tokens) m = std::max(m, t);
    for (const auto& c : comments)
        for (int t : c.tokens) m = std::max(m, t);
    return m;
}

std::size_t Dataset::max_length() const
{
    std::size_t m = 0;
    for (const auto& p : posts) m = std::max(m, p.tokens.size());
    for (const auto& c : comments) m = std::max(m, c.tokens.size());
    return m;
}

std::size_t Dataset::visual_dim() const
{
    return posts.empty() ? 0 : posts.front().visual_feat.size();
}

void Dataset::validate() const
{
    std::unordered_set<std::string> user_ids, comment_ids, post_ids;
    for (const auto& u : users)
        if (!user_ids.insert(u.id).second) throw std::invalid_argument("duplicate user id '" + u.id + "'");
    for (const auto& c : comments)
        if (!comment_ids.insert(c.id).second) throw std::invalid_argument("duplicate comment id '" + c.id + "'");
    const std::size_t dv = visual_dim();
    for (const auto& p : posts) {
        if (!post_ids.insert(p.id).second) throw std::invalid_argument("duplicate post id '" + p.id + "'");
        if (p.label != 0 && p.label != 1)
            throw std::invalid_argument("post '" + p.id + "' has label " + std::to_string(p.label));
        if (p.visual_feat.size() != dv)
            throw std::invalid_argument("post '" + p.id + "' visual_feat has " + std::to_string(p.visual_feat.size()) +
                                        " entries, expected " + std::to_string(dv));
        if (!std::all_of(p.visual_feat.begin(), p.visual_feat.end(), [](double v) { return std::isfinite(v); }))
            throw std::invalid_argument("post '" + p.id + "' has non-finite visual features");
        if (!user_ids.contains(p.user_id))
            throw std::invalid_argument("post '" + p.id + "' references unknown user '" + p.user_id + "'");
        for (const auto& cid : p.comment_ids)
            if (!comment_ids.contains(cid))
                throw std::invalid_argument("post '" + p.id + "' references unknown comment '" + cid + "'");
    }
    for (const auto& c : comments) {
        if (!user_ids.contains(c.user_id))
            throw std::invalid_argument("comment '" + c.id + "' references unknown user '" + c.user_id + "'");
        if (!post_ids.contains(c.post_id))
            throw std::invalid_argument("comment '" + c.id + "' references unknown post '" + c.post_id + "'");
    }
    auto check_tokens = [](const std::string& id, const std::vector<int>& tokens) {
        for (int t : tokens)
            if (t < 0) throw std::invalid_argument("'" + id + "' contains negative token id");
    };
    for (const auto& p : posts) check_tokens(p.id, p.tokens);
    for (const auto& c : comments) check_tokens(c.id, c.tokens);
}

// ============================================================================
// JSONL I/O
// ============================================================================

namespace {

template <typename F>
void for_each_line(const std::filesystem::path& path, F f)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            f(json::parse(line));
        } catch (const json::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

} // namespace

Dataset load_dataset(const std::filesystem::path& dir)
{
    Dataset data;
    for_each_line(dir / "users.jsonl", [&](const json& j) { data.users.push_back({j.at("id").get<std::string>()}); });
    for_each_line(dir / "comments.jsonl", [&](const json& j) {
        data.comments.push_back({j.at("id").get<std::string>(), j.at("tokens").get<std::vector<int>>(),
                                 j.at("user_id").get<std::string>(), j.at("post_id").get<std::string>()});
    });
    for_each_line(dir / "posts.jsonl", [&](const json& j) {
        PostRecord p;
        p.id = j.at("id").get<std::string>();
        p.tokens = j.at("tokens").get<std::vector<int>>();
        p.visual_feat = j.at("visual_feat").get<std::vector<double>>();
        p.user_id = j.at("user_id").get<std::string>();
        p.comment_ids = j.at("comment_ids").get<std::vector<std::string>>();
        p.label = j.at("label").get<int>();
        data.posts.push_back(std::move(p));
    });
    data.validate();
    return data;
}

void save_dataset(const Dataset& data, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    auto open = [&](const char* name) {
        std::ofstream out(dir / name);
        if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
        return out;
    };
    {
        auto out = open("posts.jsonl");
        for (const auto& p : data.posts) {
            json j = {{"id", p.id},           {"tokens", p.tokens},           {"visual_feat", p.visual_feat},
                      {"user_id", p.user_id}, {"comment_ids", p.comment_ids}, {"label", p.label}};
            out << j.dump() << '\n';
        }
    }
    {
        auto out = open("comments.jsonl");
        for (const auto& c : data.comments) {
            json j = {{"id", c.id}, {"tokens", c.tokens}, {"user_id", c.user_id}, {"post_id", c.post_id}};
            out << j.dump() << '\n';
        }
    }
    {
        auto out = open("users.jsonl");
        for (const auto& u : data.users) out << json{{"id", u.id}}.dump() << '\n';
    }
}

// ============================================================================
// Splits
// ============================================================================

Split parse_split(const std::string& name)
{
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    throw std::invalid_argument("unknown split '" + name + "' (expected train, val or test)");
}

const char* split_name(Split s)
{
    switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    }
    return "?";
}

std::vector<std::size_t> SplitAssignment::indices(Split s) const
{
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < of_post.size(); ++i)
        if (of_post[i] == s) out.push_back(i);
    return out;
}

SplitAssignment split_dataset(const std::vector<int>& labels, const SplitFractions& fr, std::uint64_t seed)
{
    if (fr.train < 0 || fr.val < 0 || fr.test < 0 || std::abs(fr.train + fr.val + fr.test - 1.0) > 1e-9)
        throw std::invalid_argument("split fractions must be non-negative and sum to 1");
    const std::size_t n = labels.size();
    const std::array<std::size_t, 3> sizes = {
        static_cast<std::size_t>(std::floor(fr.train * static_cast<double>(n) + 1e-9)),
        static_cast<std::size_t>(std::floor(fr.val * static_cast<double>(n) + 1e-9)), 0};
    std::array<std::size_t, 3> totals = sizes;
    totals[2] = n - sizes[0] - sizes[1];
    for (std::size_t s = 0; s < 3; ++s)
        if (totals[s] == 0)
            throw std::invalid_argument(std::string("split '") + split_name(static_cast<Split>(s)) + "' would be empty");

    std::array<std::vector<std::size_t>, 2> by_label;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != 0 && labels[i] != 1) throw std::invalid_argument("labels must be 0 or 1");
        by_label[static_cast<std::size_t>(labels[i])].push_back(i);
    }

    // Label-0 counts per split: floor of the exact share, topped up by the
    // largest fractional parts. Label-1 counts are the complement, which
    // keeps every cell within one sample of its exact share.
    const double n0 = static_cast<double>(by_label[0].size());
    std::array<std::size_t, 3> zeros{};
    std::array<double, 3> frac{};
    std::size_t assigned = 0;
    for (std::size_t s = 0; s < 3; ++s) {
        const double exact = n0 * static_cast<double>(totals[s]) / static_cast<double>(n);
        zeros[s] = static_cast<std::size_t>(std::floor(exact + 1e-9));
        frac[s] = exact - static_cast<double>(zeros[s]);
        assigned += zeros[s];
    }
    std::array<std::size_t, 3> order = {0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t k = 0; assigned < by_label[0].size(); ++k, ++assigned) ++zeros[order[k]];

    std::mt19937_64 rng(seed);
    SplitAssignment out;
    out.of_post.assign(n, Split::train);
    for (std::size_t label = 0; label < 2; ++label) {
        auto& idx = by_label[label];
        std::shuffle(idx.begin(), idx.end(), rng);
        std::size_t pos = 0;
        for (std::size_t s = 0; s < 3; ++s) {
            const std::size_t count = label == 0 ? zeros[s] : totals[s] - zeros[s];
            for (std::size_t k = 0; k < count; ++k) out.of_post[idx[pos++]] = static_cast<Split>(s);
        }
    }
    return out;
}

// ============================================================================
// Synthetic corpus
// ============================================================================

namespace {

std::string make_id(char prefix, std::size_t k)
{
    std::string digits = std::to_string(k);
    return std::string(1, prefix) + std::string(digits.size() < 5 ? 5 - digits.size() : 0, '0') + digits;
}

} // namespace

Dataset generate_synthetic(const SyntheticSpec& spec)
{
    if (spec.n < 20) throw std::invalid_argument("synthetic corpus needs n >= 20");
    if (spec.separation < 0) throw std::invalid_argument("separation must be non-negative");
    if (spec.graph_noise < 0 || spec.graph_noise > 1) throw std::invalid_argument("graph_noise must lie in [0, 1]");
    if (spec.vocab_size < 8) throw std::invalid_argument("vocab_size must be at least 8");
    if (spec.seq_len < 2) throw std::invalid_argument("seq_len must be at least 2");

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const std::size_t dv = spec.visual_dim ? spec.visual_dim : spec.d;
    const std::size_t user_count = spec.users ? spec.users : std::max<std::size_t>(4, spec.n / 10);
    const int v = spec.vocab_size;
    // Vocabulary: [1, v/2) shared, then one quarter per class.
    const int shared_end = v / 2;
    const int class_width = (v - shared_end) / 2;
    auto draw_word = [&](int label, double class_prob) {
        if (unit(rng) < class_prob) {
            std::uniform_int_distribution<int> pick(0, class_width - 1);
            return shared_end + label * class_width + pick(rng);
        }
        std::uniform_int_distribution<int> pick(1, shared_end - 1);
        return pick(rng);
    };
    auto draw_text = [&](int label, double class_prob) {
        std::uniform_int_distribution<std::size_t> len(spec.seq_len / 2, spec.seq_len);
        std::vector<int> tokens(len(rng));
        for (int& t : tokens) t = draw_word(label, class_prob);
        return tokens;
    };

    std::vector<int> labels(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) labels[i] = i < spec.n / 2 ? 0 : 1;
    std::shuffle(labels.begin(), labels.end(), rng);

    std::vector<double> direction(dv);
    double norm = 0.0;
    for (double& x : direction) {
        x = gauss(rng);
        norm += x * x;
    }
    for (double& x : direction) x /= std::sqrt(norm);

    // Users lean towards one class: even ids to 0, odd ids to 1.
    Dataset data;
    for (std::size_t u = 0; u < user_count; ++u) data.users.push_back({make_id('u', u)});
    auto draw_user = [&](int label) {
        if (unit(rng) < spec.graph_noise) {
            std::uniform_int_distribution<std::size_t> any(0, user_count - 1);
            return any(rng);
        }
        const std::size_t same = (user_count - static_cast<std::size_t>(label) + 1) / 2;
        std::uniform_int_distribution<std::size_t> pick(0, same - 1);
        return 2 * pick(rng) + static_cast<std::size_t>(label);
    };

    const double text_signal = 1.0 - std::exp(-spec.separation / 2.0);
    const double comment_signal = 0.8 * (1.0 - spec.graph_noise);
    const std::size_t max_extra = spec.comments_per_post > 0 ? 2 * (spec.comments_per_post - 1) : 0;
    for (std::size_t i = 0; i < spec.n; ++i) {
        const int y = labels[i];
        PostRecord p;
        p.id = make_id('p', i);
        p.label = y;
        p.tokens = draw_text(y, text_signal);
        p.visual_feat.resize(dv);
        const double offset = (y == 1 ? 0.5 : -0.5) * spec.separation;
        for (std::size_t k = 0; k < dv; ++k) p.visual_feat[k] = offset * direction[k] + gauss(rng);
        p.user_id = data.users[draw_user(y)].id;
        if (spec.comments_per_post > 0) {
            std::uniform_int_distribution<std::size_t> extra(0, max_extra);
            const std::size_t count = 1 + extra(rng);
            for (std::size_t c = 0; c < count; ++c) {
                CommentRecord cm;
                cm.id = make_id('c', data.comments.size());
                cm.tokens = draw_text(y, comment_signal);
                cm.user_id = data.users[draw_user(y)].id;
                cm.post_id = p.id;
                p.comment_ids.push_back(cm.id);
                data.comments.push_back(std::move(cm));
            }
        }
        data.posts.push_back(std::move(p));
    }
    return data;
}

} // namespace ismaf
