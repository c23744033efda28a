#include "ismaf/bridging.hpp"
#include "ismaf/fusion.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace ismaf;
using namespace ismaf::ad;
using ismaf::testing::expect_near;
using ismaf::testing::random_tensor;

namespace {

double sq_dist_mean(const Tensor& a, const Tensor& b)
{
    double s = 0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t c = 0; c < a.cols(); ++c) s += (a.at(i, c) - b.at(i, c)) * (a.at(i, c) - b.at(i, c));
    return s / static_cast<double>(a.rows());
}

// tanh(x We + be), then x_fuse Wd + bd, all by explicit loops.
std::pair<Tensor, Tensor> fuse_oracle(const ParamStore& store, const Tensor& x)
{
    const Tensor& we = store.get("fuse.enc0.w");
    const Tensor& be = store.get("fuse.enc0.b");
    const Tensor& wd = store.get("fuse.dec0.w");
    const Tensor& bd = store.get("fuse.dec0.b");
    Tensor enc(Shape{x.rows(), we.cols()}), dec(Shape{x.rows(), wd.cols()});
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < we.cols(); ++j) {
            double s = be[j];
            for (std::size_t k = 0; k < x.cols(); ++k) s += x.at(i, k) * we.at(k, j);
            enc.at(i, j) = std::tanh(s);
        }
        for (std::size_t j = 0; j < wd.cols(); ++j) {
            double s = bd[j];
            for (std::size_t k = 0; k < we.cols(); ++k) s += enc.at(i, k) * wd.at(k, j);
            dec.at(i, j) = s;
        }
    }
    return {enc, dec};
}

Tensor concat3(const Tensor& a, const Tensor& b, const Tensor& c)
{
    return concat_cols({Var(a), Var(b), Var(c)}).value();
}

} // namespace

TEST(AdaptiveFusion, MatchesDirectFormula)
{
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        ParamStore store(seed);
        init_fusion_params(store, 4);
        std::mt19937_64 rng(seed);
        store.set("fuse.enc0.b", random_tensor({4}, rng));
        store.set("fuse.dec0.b", random_tensor({12}, rng));
        const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng), c = random_tensor({3, 4}, rng);
        Tape tape(false);
        const FusionResult r = adaptive_fuse(tape, store, Var(a), Var(b), Var(c));
        const Tensor x = concat3(a, b, c);
        const auto [enc, dec] = fuse_oracle(store, x);
        EXPECT_LT(max_abs_diff(r.fused.value(), enc), 1e-12);
        EXPECT_LT(max_abs_diff(r.reconstruction.value(), dec), 1e-12);
        EXPECT_NEAR(r.loss.item(), sq_dist_mean(dec, x), 1e-10);
    }
}

TEST(AdaptiveFusion, ZeroDecoderGivesSquaredNorm)
{
    ParamStore store(2);
    init_fusion_params(store, 2);
    store.set("fuse.dec0.w", Tensor(Shape{2, 6}));
    const Tensor a = Tensor::matrix({{1, 2}, {0, 1}}), b = Tensor::matrix({{-1, 0}, {3, 0}}),
                 c = Tensor::matrix({{0, 2}, {1, 1}});
    Tape tape(false);
    // Row norms squared: 1+4+1+0+0+4 = 10 and 0+1+9+0+1+1 = 12.
    EXPECT_NEAR(adaptive_fuse(tape, store, Var(a), Var(b), Var(c)).loss.item(), 11.0, 1e-12);
}

TEST(AdaptiveFusion, PerfectReconstructionGivesZero)
{
    const Tensor x = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
    EXPECT_EQ(reconstruction_loss(Var(x), Var(x)).item(), 0.0);
    EXPECT_GT(reconstruction_loss(Var(x), Var(Tensor(Shape{2, 3}))).item(), 0.0);
}

TEST(AdaptiveFusion, LossDoesNotReachInputs)
{
    ParamStore store(3);
    init_fusion_params(store, 2);
    store.create("in", Tensor::matrix({{0.3, -0.2}}));
    Tape tape;
    const Var z = tape.param(store, "in");
    const FusionResult r = adaptive_fuse(tape, store, z, z, z);
    const GradMap g = tape.backward(r.loss);
    expect_near(g.at("in"), Tensor(Shape{1, 2}), 0.0);
    EXPECT_GT(max_abs_diff(g.at("fuse.dec0.w"), Tensor(Shape{2, 6})), 0.0);
}

TEST(AdaptiveFusion, DeeperStackAndShapeErrors)
{
    ParamStore store(4);
    init_fusion_params(store, 3, 2);
    EXPECT_EQ(store.get("fuse.enc0.w").shape(), (Shape{9, 6}));
    EXPECT_EQ(store.get("fuse.enc1.w").shape(), (Shape{6, 3}));
    EXPECT_EQ(store.get("fuse.dec0.w").shape(), (Shape{6, 9}));
    std::mt19937_64 rng(4);
    const Tensor a = random_tensor({2, 3}, rng);
    Tape tape(false);
    const FusionResult r = adaptive_fuse(tape, store, Var(a), Var(a), Var(a), 2);
    EXPECT_EQ(r.fused.shape(), (Shape{2, 3}));
    EXPECT_EQ(r.reconstruction.shape(), (Shape{2, 9}));
    EXPECT_THROW(adaptive_fuse(tape, store, Var(a), Var(a), Var(random_tensor({2, 4}, rng)), 2), DimensionError);
    EXPECT_THROW(init_fusion_params(store, 3, 0), std::invalid_argument);
}

// ---------------------------------------------------------------------------

TEST(Classifier, ClosedForms)
{
    ParamStore store(1);
    init_classifier_params(store, 3);
    store.set("cls.w", Tensor(Shape{3, 2}));
    Tape tape(false);
    const Var x(Tensor::matrix({{1, 2, 3}}));
    EXPECT_DOUBLE_EQ(classify(tape, store, x).value().at(0, 1), 0.5);
    store.set("cls.b", Tensor::vector({0.0, std::log(9.0)}));
    EXPECT_NEAR(classify(tape, store, x).value().at(0, 1), 0.9, 1e-15);
    EXPECT_EQ(predict_label(0.5), 0);
    EXPECT_EQ(predict_label(0.5000001), 1);
    EXPECT_EQ(predict_label(0.2), 0);
}

TEST(Classifier, MatchesSoftmaxOracleAndShiftInvariance)
{
    ParamStore store(2);
    init_classifier_params(store, 4);
    std::mt19937_64 rng(2);
    store.set("cls.b", random_tensor({2}, rng));
    const Tensor x = random_tensor({5, 4}, rng);
    Tape tape(false);
    const Tensor p = classify(tape, store, Var(x)).value();
    const Tensor& w = store.get("cls.w");
    const Tensor& b = store.get("cls.b");
    for (std::size_t i = 0; i < 5; ++i) {
        double l0 = b[0], l1 = b[1];
        for (std::size_t k = 0; k < 4; ++k) {
            l0 += x.at(i, k) * w.at(k, 0);
            l1 += x.at(i, k) * w.at(k, 1);
        }
        EXPECT_NEAR(p.at(i, 1), std::exp(l1) / (std::exp(l0) + std::exp(l1)), 1e-12);
    }
    store.set("cls.b", Tensor::vector({b[0] + 7.0, b[1] + 7.0}));
    const Tensor shifted = classify(tape, store, Var(x)).value();
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(predict_label(p.at(i, 1)), predict_label(shifted.at(i, 1)));
}

TEST(CrossEntropy, ClosedFormsAndOracle)
{
    const int one[] = {1}, zero[] = {0};
    EXPECT_NEAR(ce_loss(Var(Tensor::matrix({{1.0}})), one).item(), 0.0, 1e-11);
    EXPECT_NEAR(ce_loss(Var(Tensor::matrix({{0.5}})), one).item(), std::log(2.0), 1e-15);
    EXPECT_NEAR(ce_loss(Var(Tensor::matrix({{0.5}})), zero).item(), std::log(2.0), 1e-15);
    EXPECT_TRUE(std::isfinite(ce_loss(Var(Tensor::matrix({{0.0}})), one).item()));

    const std::vector<double> p{0.1, 0.8, 0.35, 0.999};
    const std::vector<int> y{0, 1, 1, 0};
    double want = 0;
    for (std::size_t i = 0; i < 4; ++i) want -= y[i] ? std::log(p[i]) : std::log(1 - p[i]);
    want /= 4;
    EXPECT_NEAR(ce_loss(Var(Tensor(Shape{4, 1}, p)), y).item(), want, 1e-10);
    EXPECT_NEAR(ce_loss(p, y), want, 1e-10);

    const int bad[] = {2};
    EXPECT_THROW(ce_loss(Var(Tensor::matrix({{0.5}})), bad), std::invalid_argument);
    EXPECT_THROW(ce_loss(Var(Tensor(Shape{2, 1}, 0.5)), one), DimensionError);
}

// ---------------------------------------------------------------------------

TEST(OverallLoss, WeightedSum)
{
    const LossBreakdown ones{1, 1, 1, 1, 1, 0};
    EXPECT_NEAR(overall_loss(ones, LossWeights{}), 2.8, 1e-15);
    const LossBreakdown parts{0.7, 2.5, 1.25, 0.125, 3.0, 0};
    EXPECT_EQ(overall_loss(parts, LossWeights{0, 0, 0, 0}), 0.7);

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, 2);
    for (int t = 0; t < 20; ++t) {
        const LossBreakdown b{u(rng), u(rng), u(rng), u(rng), u(rng), 0};
        const LossWeights w{u(rng), u(rng), u(rng), u(rng)};
        const double want = b.ce + w.scl * b.scl + w.cmca * b.cmca + w.ml * b.ml + w.af * b.af;
        EXPECT_NEAR(overall_loss(b, w), want, 1e-12);
        const LossTerms terms{Var(Tensor::scalar(b.ce)), Var(Tensor::scalar(b.scl)), Var(Tensor::scalar(b.cmca)),
                              Var(Tensor::scalar(b.ml)), Var(Tensor::scalar(b.af))};
        EXPECT_NEAR(overall_loss(terms, w).item(), want, 1e-12);
    }
    EXPECT_THROW(overall_loss(ones, LossWeights{-0.1, 0, 0, 0}), std::invalid_argument);
}

TEST(OverallLoss, ZeroWeightsGiveCrossEntropyExactly)
{
    const LossTerms terms{Var(Tensor::scalar(0.6931)), Var(Tensor::scalar(5.0)), Var(Tensor::scalar(3.0)),
                          Var(Tensor::scalar(1.0)), Var(Tensor::scalar(std::nan("")))};
    EXPECT_EQ(overall_loss(terms, LossWeights{0, 0, 0, 0}).item(), 0.6931);
}

TEST(OverallLoss, LinearInEachWeight)
{
    const LossBreakdown b{0.5, 1.5, 2.0, 0.25, 4.0, 0};
    LossWeights w{0.1, 0.2, 0.3, 0.4};
    const double base = overall_loss(b, w);
    w.cmca += 1.0;
    EXPECT_NEAR(overall_loss(b, w) - base, b.cmca, 1e-12);
}

// ---------------------------------------------------------------------------

TEST(Alternates, ConcatMatchesOracle)
{
    const AttentionConfig attn{4, 2, 2};
    ParamStore store(6);
    init_alternate_params(store, FusionKind::is_concat, attn);
    std::mt19937_64 rng(6);
    store.set("isconcat.b", random_tensor({4}, rng));
    const Tensor z = random_tensor({3, 4}, rng), g = random_tensor({3, 4}, rng);
    Tape tape(false);
    const Tensor got = fuse_alternate(tape, store, FusionKind::is_concat, attn, Var(z), Var(g)).value();
    const Tensor& w = store.get("isconcat.w");
    Tensor want(Shape{3, 4});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            double s = store.get("isconcat.b")[j];
            for (std::size_t k = 0; k < 4; ++k) s += z.at(i, k) * w.at(k, j) + g.at(i, k) * w.at(4 + k, j);
            want.at(i, j) = s;
        }
    EXPECT_LT(max_abs_diff(got, want), 1e-12);
}

TEST(Alternates, ConcatWithStackedIdentityRecoversDuplicatedInput)
{
    const AttentionConfig attn{3, 1, 1};
    ParamStore store(6);
    init_alternate_params(store, FusionKind::is_concat, attn);
    Tensor w(Shape{6, 3});
    for (std::size_t i = 0; i < 3; ++i) w.at(i, i) = w.at(3 + i, i) = 0.5;
    store.set("isconcat.w", w);
    const Tensor z = Tensor::matrix({{1, -2, 3}});
    Tape tape(false);
    expect_near(fuse_alternate(tape, store, FusionKind::is_concat, attn, Var(z), Var(z)).value(), z, 1e-15);
}

TEST(Alternates, AttentionWithEqualInputsEqualsSelfAttention)
{
    const AttentionConfig attn{6, 2, 3};
    ParamStore store(7);
    init_alternate_params(store, FusionKind::is_att, attn);
    init_attention_params(store, attn, AttentionNames::self("T"));
    for (const char* part : {"q", "k", "v", "o"})
        for (const char* s : {".w", ".b"})
            store.set(std::string("attn.self.T.") + part + s, store.get(std::string("isatt.") + part + s));
    std::mt19937_64 rng(7);
    const Tensor x = random_tensor({2, 6}, rng);
    Tape tape(false);
    EXPECT_EQ(fuse_alternate(tape, store, FusionKind::is_att, attn, Var(x), Var(x)).value(),
              self_attention(tape, store, attn, Var(x), "T").value());
    EXPECT_THROW(fuse_alternate(tape, store, FusionKind::adaptive, attn, Var(x), Var(x)), std::invalid_argument);
}

TEST(Alternates, ParseNames)
{
    EXPECT_EQ(parse_fusion("af"), FusionKind::adaptive);
    EXPECT_EQ(parse_fusion("is-concat"), FusionKind::is_concat);
    EXPECT_EQ(parse_fusion("is-att"), FusionKind::is_att);
    EXPECT_STREQ(fusion_name(FusionKind::is_att), "is-att");
    EXPECT_THROW(parse_fusion("is-co"), std::invalid_argument);
}

TEST(FusionGradients, PassFiniteDifferenceChecks)
{
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        ParamStore store(seed);
        init_fusion_params(store, 3, seed % 2 ? 1 : 2);
        init_classifier_params(store, 3);
        std::mt19937_64 rng(seed);
        for (const auto& n : store.names()) store.set(n, random_tensor(store.get(n).shape(), rng, -0.5, 0.5));
        const Tensor a = random_tensor({4, 3}, rng), b = random_tensor({4, 3}, rng), c = random_tensor({4, 3}, rng);
        const std::size_t depth = seed % 2 ? 1 : 2;
        const std::vector<int> y{1, 0, 0, 1};
        const LossFn f = [&](Tape& tape, const ParamStore& params) {
            const FusionResult r = adaptive_fuse(tape, params, Var(a), Var(b), Var(c), depth);
            const Var p = slice_cols(classify(tape, params, r.fused), 1, 1);
            return add(ce_loss(p, y), scale(r.loss, 0.4));
        };
        EXPECT_LT(grad_check(f, store, 1e-6).max_relative_error, 1e-4) << "seed " << seed;
    }
}
