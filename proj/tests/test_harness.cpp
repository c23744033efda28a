#include "ismaf/serialize.hpp"
#include "ismaf/train.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>
#include <zlib.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

using namespace ismaf;

namespace {

std::vector<int> labels_of(const Dataset& d)
{
    std::vector<int> y;
    for (const auto& p : d.posts) y.push_back(p.label);
    return y;
}

Dataset small_corpus(std::uint64_t seed = 3, double separation = 5.0)
{
    SyntheticSpec s;
    s.n = 60;
    s.d = 8;
    s.separation = separation;
    s.seed = seed;
    s.vocab_size = 40;
    s.seq_len = 8;
    s.comments_per_post = 1;
    return generate_synthetic(s);
}

TrainConfig small_config()
{
    TrainConfig c;
    c.d = 12;
    c.heads = 2;
    c.batch_size = 16;
    c.epochs = 3;
    c.kernel_sizes = {2, 3};
    c.seed = 5;
    c.sweep_epochs = 2;
    return c;
}

std::filesystem::path scratch(const std::string& name)
{
    const auto dir = std::filesystem::temp_directory_path() / ("ismaf_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

TEST(Config, DefaultsValidate)
{
    const TrainConfig c;
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(c.d, 300u);
    EXPECT_EQ(c.heads, 8u);
    EXPECT_EQ(c.lambda.as_array(), (std::array<double, 4>{0.3, 0.7, 0.4, 0.4}));
    EXPECT_EQ(c.effective_lift_tokens(), 6u);
}

TEST(Config, ParsesKeysCommentsAndRoundTrips)
{
    const TrainConfig c = parse_config("# comment\n\nd = 24\nheads=4\nlambda2 = 0.25\nfusion = is-att\n"
                                       "kernel_sizes = 2, 3\nuse_ml = false\nseed = 99   # trailing\n");
    EXPECT_EQ(c.d, 24u);
    EXPECT_EQ(c.heads, 4u);
    EXPECT_EQ(c.lambda.cmca, 0.25);
    EXPECT_EQ(c.fusion, FusionKind::is_att);
    EXPECT_EQ(c.kernel_sizes, (std::vector<std::size_t>{2, 3}));
    EXPECT_FALSE(c.use_ml);
    EXPECT_EQ(c.seed, 99u);
    EXPECT_TRUE(parse_config(config_to_text(c)) == c);

    TrainConfig odd;
    odd.lr = 0.1 + 0.2;  // not exactly representable in short decimal
    EXPECT_EQ(parse_config(config_to_text(odd)).lr, odd.lr);
}

TEST(Config, RejectsBadValues)
{
    EXPECT_THROW(parse_config("lambda1 = -0.1\n"), std::invalid_argument);
    EXPECT_THROW(parse_config("no_such_key = 1\n"), std::invalid_argument);
    EXPECT_THROW(parse_config("d = twelve\n"), std::invalid_argument);
    EXPECT_THROW(parse_config("batch_size = 1\n"), std::invalid_argument);
    EXPECT_THROW(parse_config("split_train = 0.8\n"), std::invalid_argument);  // fractions no longer sum to 1
    EXPECT_THROW(parse_config("d\n"), std::invalid_argument);
    EXPECT_THROW(parse_config("lr = 0\n"), std::invalid_argument);
}

TEST(Config, AblationSwitches)
{
    TrainConfig c;
    c.use_mre = false;
    c.use_af = false;
    const LossWeights w = c.effective_lambda();
    EXPECT_EQ(w.scl, 0.0);
    EXPECT_EQ(w.cmca, 0.7);
    EXPECT_EQ(w.af, 0.0);
    EXPECT_EQ(c.effective_fusion(), FusionKind::is_concat);
    c.use_af = true;
    c.fusion = FusionKind::is_att;
    EXPECT_EQ(c.effective_fusion(), FusionKind::is_att);
    EXPECT_EQ(c.effective_lambda().af, 0.0);
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

TEST(Split, TwoThousandEighteenPostCorpus)
{
    std::vector<int> y(1428, 0);
    y.insert(y.end(), 590, 1);
    const SplitAssignment a = split_dataset(y, {}, 11);
    const auto tr = a.indices(Split::train), va = a.indices(Split::val), te = a.indices(Split::test);
    EXPECT_EQ(tr.size(), 1412u);
    EXPECT_EQ(va.size(), 201u);
    EXPECT_EQ(te.size(), 405u);

    // Stratified: rumor count per split within one of its exact share.
    auto rumors = [&](const std::vector<std::size_t>& idx) {
        std::size_t r = 0;
        for (auto i : idx) r += static_cast<std::size_t>(y[i]);
        return static_cast<double>(r);
    };
    const double share = 590.0 / 2018.0;
    EXPECT_LE(std::abs(rumors(tr) - share * 1412), 1.0);
    EXPECT_LE(std::abs(rumors(va) - share * 201), 1.0);
    EXPECT_LE(std::abs(rumors(te) - share * 405), 1.0);

    // Disjoint and exhaustive.
    std::vector<int> seen(y.size(), 0);
    for (const auto* s : {&tr, &va, &te})
        for (auto i : *s) ++seen[i];
    for (int s : seen) EXPECT_EQ(s, 1);

    EXPECT_EQ(split_dataset(y, {}, 11).of_post, a.of_post);
    EXPECT_NE(split_dataset(y, {}, 12).of_post, a.of_post);
}

TEST(Split, BalancedTenSplitsBalanced)
{
    const std::vector<int> y{0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
    const SplitAssignment a = split_dataset(y, {}, 1);
    for (Split s : {Split::train, Split::val, Split::test}) {
        const auto idx = a.indices(s);
        int ones = 0;
        for (auto i : idx) ones += y[i];
        EXPECT_LE(std::abs(2 * ones - static_cast<int>(idx.size())), 2) << split_name(s);
    }
    EXPECT_EQ(a.indices(Split::train).size(), 7u);
    EXPECT_EQ(a.indices(Split::val).size(), 1u);
    EXPECT_EQ(a.indices(Split::test).size(), 2u);
}

TEST(Split, EmptySplitIsAnError)
{
    EXPECT_THROW(split_dataset({0, 1, 0, 1, 1}, {}, 1), std::invalid_argument);  // floor(0.1 * 5) = 0
    EXPECT_EQ(parse_split("val"), Split::val);
    EXPECT_THROW(parse_split("dev"), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Synthetic data and file IO
// ---------------------------------------------------------------------------

TEST(Synthetic, DeterministicAndBalanced)
{
    const Dataset a = small_corpus(9), b = small_corpus(9), c = small_corpus(10);
    const auto dir1 = scratch("syn_a"), dir2 = scratch("syn_b");
    save_dataset(a, dir1);
    save_dataset(b, dir2);
    for (const char* f : {"posts.jsonl", "comments.jsonl", "users.jsonl"}) {
        std::ifstream x(dir1 / f), y(dir2 / f);
        const std::string sx((std::istreambuf_iterator<char>(x)), {}), sy((std::istreambuf_iterator<char>(y)), {});
        EXPECT_EQ(sx, sy) << f;
        EXPECT_FALSE(sx.empty());
    }
    EXPECT_NE(a.posts[0].visual_feat, c.posts[0].visual_feat);
    int ones = 0;
    for (int y : labels_of(a)) ones += y;
    EXPECT_EQ(ones, 30);
    EXPECT_NO_THROW(a.validate());
}

TEST(Synthetic, SeparatedVisualFeaturesPassNearestCentroid)
{
    SyntheticSpec s;
    s.n = 600;
    s.d = 32;
    s.separation = 5.0;
    s.seed = 42;
    const Dataset data = generate_synthetic(s);
    const std::size_t dv = data.visual_dim();
    std::vector<double> centroid[2] = {std::vector<double>(dv, 0.0), std::vector<double>(dv, 0.0)};
    int count[2] = {0, 0};
    for (const auto& p : data.posts) {
        for (std::size_t c = 0; c < dv; ++c) centroid[p.label][c] += p.visual_feat[c];
        ++count[p.label];
    }
    for (int y : {0, 1})
        for (double& v : centroid[y]) v /= count[y];
    int correct = 0;
    for (const auto& p : data.posts) {
        double dist[2] = {0, 0};
        for (int y : {0, 1})
            for (std::size_t c = 0; c < dv; ++c) dist[y] += std::pow(p.visual_feat[c] - centroid[y][c], 2);
        correct += (dist[1] < dist[0] ? 1 : 0) == p.label;
    }
    EXPECT_GE(correct / 600.0, 0.99);
}

TEST(DatasetFiles, RoundTripAndRejectMalformed)
{
    const Dataset a = small_corpus(4);
    const auto dir = scratch("io");
    save_dataset(a, dir);
    const Dataset b = load_dataset(dir);
    ASSERT_EQ(b.posts.size(), a.posts.size());
    for (std::size_t i = 0; i < a.posts.size(); ++i) {
        EXPECT_EQ(b.posts[i].id, a.posts[i].id);
        EXPECT_EQ(b.posts[i].tokens, a.posts[i].tokens);
        EXPECT_EQ(b.posts[i].visual_feat, a.posts[i].visual_feat);
        EXPECT_EQ(b.posts[i].label, a.posts[i].label);
    }
    EXPECT_EQ(b.comments.size(), a.comments.size());
    EXPECT_EQ(b.users.size(), a.users.size());

    std::ofstream(dir / "posts.jsonl", std::ios::app) << "{\"id\": \"broken\"\n";
    EXPECT_ANY_THROW(load_dataset(dir));
    EXPECT_ANY_THROW(load_dataset(dir / "missing"));
}

TEST(DatasetFiles, ValidationCatchesDanglingReferences)
{
    Dataset d = small_corpus(4);
    d.comments[0].post_id = "nowhere";
    EXPECT_THROW(d.validate(), std::invalid_argument);
    d = small_corpus(4);
    d.posts[0].label = 3;
    EXPECT_THROW(d.validate(), std::invalid_argument);
    d = small_corpus(4);
    d.posts[0].visual_feat[0] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(d.validate(), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

TEST(Metrics, ConfusionArithmetic)
{
    const MetricsReport r = metrics_from({3, 1, 5, 1});
    EXPECT_DOUBLE_EQ(r.precision, 0.75);
    EXPECT_DOUBLE_EQ(r.recall, 0.75);
    EXPECT_DOUBLE_EQ(r.f1, 0.75);
    EXPECT_DOUBLE_EQ(r.acc, 0.8);

    const MetricsReport perfect = metrics_from({4, 0, 6, 0});
    EXPECT_EQ(perfect.acc, 1.0);
    EXPECT_EQ(perfect.f1, 1.0);

    const std::vector<int> actual{1, 0, 1, 0, 1, 0}, none(6, 0);
    const MetricsReport neg = metrics_from(confusion_of(none, actual));
    EXPECT_EQ(neg.recall, 0.0);
    EXPECT_EQ(neg.precision, 0.0);
    EXPECT_EQ(neg.f1, 0.0);
    EXPECT_EQ(neg.acc, 0.5);
}

TEST(Metrics, ReportFormat)
{
    MetricsReport r = metrics_from({3, 1, 5, 1});
    r.split = "test";
    r.history = {{0.5, 0.1, 0.2, 0.3, 0.4, 1.0}};
    const std::string text = format_report(r);
    EXPECT_EQ(text, "ismaf-metrics 1\nsplit test\nsamples 10\nacc 0.8000\nprecision 0.7500\nrecall 0.7500\n"
                    "f1 0.7500\ntp 3\nfp 1\ntn 5\nfn 1\nepochs 1\n"
                    "epoch 1 total 1.000000 ce 0.500000 scl 0.100000 cmca 0.200000 ml 0.300000 af 0.400000\n");
}

TEST(Batching, CoversEveryIndexOnceAndMergesSingletons)
{
    std::mt19937_64 rng(1);
    std::vector<std::size_t> idx(33);
    std::iota(idx.begin(), idx.end(), 0);
    const auto batches = make_batches(idx, 8, rng);
    ASSERT_EQ(batches.size(), 4u);
    EXPECT_EQ(batches.back().size(), 9u);
    std::vector<int> seen(33, 0);
    for (const auto& b : batches)
        for (auto i : b) ++seen[i];
    for (int s : seen) EXPECT_EQ(s, 1);
    EXPECT_THROW(make_batches(idx, 0, rng), std::invalid_argument);
}

TEST(Optimizer, AdamMatchesHandComputation)
{
    ad::ParamStore store;
    store.create("w", Tensor::vector({1.0, -2.0}));
    Adam adam;
    const double g1[] = {0.5, -0.1}, g2[] = {-1.0, 0.3};
    double m[2] = {0, 0}, v[2] = {0, 0}, w[2] = {1.0, -2.0};
    for (int t = 1; t <= 2; ++t) {
        const double* g = t == 1 ? g1 : g2;
        const double lr = 0.1 * std::pow(0.98, t - 1);
        adam.step(store, {{"w", Tensor::vector({g[0], g[1]})}}, lr);
        for (int i = 0; i < 2; ++i) {
            m[i] = 0.9 * m[i] + 0.1 * g[i];
            v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
            const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
            w[i] -= lr * mh / (std::sqrt(vh) + 1e-8);
        }
        EXPECT_NEAR(store.get("w")[0], w[0], 1e-15);
        EXPECT_NEAR(store.get("w")[1], w[1], 1e-15);
    }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

TEST(Training, ZeroEpochsReturnsInitialParameters)
{
    const Dataset data = small_corpus();
    TrainConfig c = small_config();
    c.epochs = 0;
    const TrainResult r = train(c, data);
    EXPECT_TRUE(r.model.params == init_model(c, input_shape_of(data)).params);
    EXPECT_TRUE(r.history.empty());
    EXPECT_EQ(r.best_epoch, 0u);
}

TEST(Training, ZeroWeightsWithConcatFusionTrainOnCrossEntropyOnly)
{
    const Dataset data = small_corpus();
    TrainConfig c = small_config();
    c.lambda = {0, 0, 0, 0};
    c.use_af = false;

    // Per step: the forward total is exactly the cross-entropy.
    const Model model = init_model(c, input_shape_of(data));
    const SocialGraph graph = build_graph(model, data);
    const std::vector<std::size_t> batch{0, 1, 2, 3, 4, 5};
    ad::Tape tape;
    const ForwardResult f = forward(tape, model, data, graph, batch, {});
    EXPECT_EQ(f.total.item(), f.terms.ce.item());

    const TrainResult r = train(c, data);
    ASSERT_EQ(r.history.size(), 3u);
    for (const auto& e : r.history) {
        EXPECT_EQ(e.total, e.ce);
        EXPECT_EQ(e.af, 0.0);
    }
}

TEST(Training, DisabledComponentsReadZero)
{
    const Dataset data = small_corpus();
    TrainConfig c = small_config();
    c.epochs = 2;
    c.use_cmca = false;
    c.use_ml = false;
    const TrainResult r = train(c, data);
    for (const auto& e : r.history) {
        EXPECT_EQ(e.cmca, 0.0);
        EXPECT_EQ(e.ml, 0.0);
        EXPECT_GT(e.scl, 0.0);
        EXPECT_GT(e.af, 0.0);
        EXPECT_NEAR(e.total, overall_loss(e, c.effective_lambda()), 1e-9);
    }
}

TEST(Training, DeterministicAcrossRuns)
{
    const Dataset data = small_corpus();
    const TrainConfig c = small_config();
    const TrainResult a = train(c, data), b = train(c, data);
    EXPECT_EQ(a.history, b.history);
    EXPECT_EQ(a.val_acc, b.val_acc);
    EXPECT_TRUE(a.model.params == b.model.params);
    EXPECT_EQ(evaluate(a.model, data, Split::test), evaluate(b.model, data, Split::test));
}

TEST(Training, LossFallsOnSeparableData)
{
    SyntheticSpec s;
    s.n = 120;
    s.d = 8;
    s.seed = 2;
    s.vocab_size = 40;
    s.seq_len = 8;
    s.comments_per_post = 1;
    const Dataset data = generate_synthetic(s);
    TrainConfig c = small_config();
    c.epochs = 10;
    const TrainResult r = train(c, data);
    ASSERT_EQ(r.history.size(), 10u);
    EXPECT_LT(r.history[9].total, r.history[0].total);
    EXPECT_LT(r.history[9].ce, r.history[0].ce);
}

TEST(Training, NonFiniteLossStopsWithBestCheckpoint)
{
    const Dataset data = small_corpus();
    TrainConfig c = small_config();
    c.epochs = 4;
    int steps = 0;
    TrainHooks hooks;
    hooks.before_update = [&](ad::ParamStore& params, ad::GradMap&) {
        // Poison the classifier partway through the second epoch.
        if (++steps == 4) params.mutable_value("cls.w")[0] = std::numeric_limits<double>::quiet_NaN();
    };
    const TrainResult r = train(c, data, hooks);
    ASSERT_TRUE(r.error.has_value());
    EXPECT_EQ(r.history.size(), 1u);
    EXPECT_EQ(r.best_epoch, 1u);
    EXPECT_TRUE(r.model.params.get("cls.w").all_finite());
}

TEST(Training, EvaluateRejectsEmptySplit)
{
    const Dataset data = small_corpus();
    const Model m = init_model(small_config(), input_shape_of(data));
    EXPECT_THROW(evaluate(m, data, build_graph(m, data), std::vector<std::size_t>{}), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

std::string with_checksum(std::string body)
{
    const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()));
    char buf[32];
    std::snprintf(buf, sizeof buf, "checksum %08lx\n", static_cast<unsigned long>(crc));
    return body + buf;
}

std::string strip_checksum(const std::string& text)
{
    return text.substr(0, text.rfind("checksum "));
}

} // namespace

TEST(Serialization, RoundTripIsBitwise)
{
    const Dataset data = small_corpus();
    TrainConfig c = small_config();
    c.epochs = 1;
    const TrainResult r = train(c, data);
    const auto path = scratch("model") / "m.ismaf";
    save_model(r.model, path);
    const Model back = load_model(path);
    EXPECT_TRUE(back.params == r.model.params);
    EXPECT_TRUE(back.config == r.model.config);
    EXPECT_EQ(back.input, r.model.input);
    EXPECT_EQ(evaluate(back, data, Split::test), evaluate(r.model, data, Split::test));

    const Model fresh = init_model(c, input_shape_of(data));
    EXPECT_TRUE(deserialize_model(serialize_model(fresh)).params == fresh.params);
}

TEST(Serialization, RejectsCorruption)
{
    const Dataset data = small_corpus();
    const Model m = init_model(small_config(), input_shape_of(data));
    const std::string text = serialize_model(m);
    EXPECT_EQ(text.rfind("ismaf-model\nformat 1\n", 0), 0u);

    std::string flipped = text;
    flipped[flipped.size() / 2] = flipped[flipped.size() / 2] == '0' ? '1' : '0';
    EXPECT_THROW(deserialize_model(flipped), ModelFormatError);

    std::string bad_sum = text;
    bad_sum[bad_sum.size() - 2] = bad_sum[bad_sum.size() - 2] == 'a' ? 'b' : 'a';
    EXPECT_THROW(deserialize_model(bad_sum), ModelFormatError);

    std::string body = strip_checksum(text);
    body.replace(body.find("format 1"), 8, "format 2");
    try {
        deserialize_model(with_checksum(body));
        FAIL() << "version 2 accepted";
    } catch (const ModelFormatError& e) {
        EXPECT_NE(std::string(e.what()).find("version"), std::string::npos) << e.what();
    }

    EXPECT_NO_THROW(deserialize_model(with_checksum(strip_checksum(text))));
    EXPECT_THROW(deserialize_model(text.substr(0, text.size() / 3)), ModelFormatError);
    EXPECT_THROW(load_model("/nonexistent/model"), std::exception);
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

TEST(Sweep, RangeCounting)
{
    EXPECT_EQ(parse_range("0:1:0.5").values(), (std::vector<double>{0, 0.5, 1}));
    EXPECT_EQ(parse_range("0:1:0.1").values().size(), 11u);
    EXPECT_EQ(parse_range("0.3:0.3:0.1").values(), (std::vector<double>{0.3}));
    EXPECT_THROW(parse_range("0:1"), std::invalid_argument);
    EXPECT_THROW(parse_range("1:0:0.1"), std::invalid_argument);
    EXPECT_THROW(parse_range("0:1:0"), std::invalid_argument);
    EXPECT_THROW(parse_range("a:1:0.1"), std::invalid_argument);
}

TEST(Sweep, SinglePointEqualsPlainTraining)
{
    const Dataset data = small_corpus();
    const TrainConfig c = small_config();
    const auto rows = sweep_lambda(c, data, 2, parse_range("0.5:0.5:0.1"));
    ASSERT_EQ(rows.size(), 1u);
    TrainConfig plain = c;
    plain.epochs = c.sweep_epochs;
    plain.lambda.cmca = 0.5;
    const MetricsReport m = evaluate(train(plain, data).model, data, Split::test);
    EXPECT_EQ(rows[0].acc, m.acc);
    EXPECT_EQ(rows[0].f1, m.f1);
    EXPECT_EQ(format_sweep(2, rows).substr(0, 15), "lambda2\tacc\tf1\n");
    EXPECT_THROW(sweep_lambda(c, data, 5, parse_range("0:1:0.5")), std::invalid_argument);
}
