// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any fails.

#include "ismaf/gradient_suite.hpp"
#include "ismaf/train.hpp"

#include <fmt/format.h>

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

using namespace ismaf;
using namespace ismaf::ad;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(-1, 1);
    Tensor t(Shape{r, c});
    for (double& v : t.data()) v = u(rng);
    return t;
}

// ---------------------------------------------------------------------------

Outcome gradient_integrity()
{
    const auto start = std::chrono::steady_clock::now();
    double worst = 0;
    std::size_t checked = 0, nonsmooth = 0;
    std::string where;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        GradientSuiteOptions o;
        o.seed = seed;
        for (const GradientCase& c : run_gradient_suite(o)) {
            checked += c.result.entries_checked;
            nonsmooth += c.result.nonsmooth_skipped;
            if (c.result.max_relative_error > worst) {
                worst = c.result.max_relative_error;
                where = fmt::format("{} seed {} at {}[{}]", c.loss, seed, c.result.worst_param, c.result.worst_index);
            }
        }
    }
    const double secs = seconds_since(start);
    return {worst < 1e-4 && secs < 60.0,
            fmt::format("6 losses x 5 seeds, {} entries, max rel err {:.2e} ({}), {} across sign flips, {:.1f} s",
                        checked, worst, where, nonsmooth, secs)};
}

// ---------------------------------------------------------------------------

double cos_rows(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j)
{
    double d = 0, na = 0, nb = 0;
    for (std::size_t c = 0; c < a.cols(); ++c) {
        d += a.at(i, c) * b.at(j, c);
        na += a.at(i, c) * a.at(i, c);
        nb += b.at(j, c) * b.at(j, c);
    }
    return d / std::sqrt(na * nb);
}

double scl_loop(const Tensor& r, const std::vector<int>& y, double tau)
{
    double total = 0;
    int anchors = 0;
    for (std::size_t i = 0; i < r.rows(); ++i) {
        double denom = 0, num = 0;
        int pos = 0;
        for (std::size_t a = 0; a < r.rows(); ++a)
            if (a != i) denom += std::exp(cos_rows(r, i, r, a) / tau);
        for (std::size_t p = 0; p < r.rows(); ++p)
            if (p != i && y[p] == y[i]) {
                num += std::log(std::exp(cos_rows(r, i, r, p) / tau) / denom);
                ++pos;
            }
        if (pos) {
            total -= num / pos;
            ++anchors;
        }
    }
    return anchors ? total / anchors : 0.0;
}

double cmca_loop(const Tensor& z, const Tensor& g, double tau)
{
    auto side = [&](const Tensor& a, const Tensor& b, std::size_t i) {
        double denom = 0;
        for (std::size_t k = 0; k < a.rows(); ++k) {
            if (k != i) denom += std::exp(cos_rows(a, i, a, k) / tau);
            denom += std::exp(cos_rows(a, i, b, k) / tau);
        }
        return -std::log(std::exp(cos_rows(a, i, b, i) / tau) / denom);
    };
    double s = 0;
    for (std::size_t i = 0; i < z.rows(); ++i) s += side(z, g, i) + side(g, z, i);
    return s / (2.0 * z.rows());
}

double ml_loop(const Tensor& p, const Tensor& q)
{
    double s = 0;
    for (std::size_t i = 0; i < p.rows(); ++i)
        for (std::size_t c = 0; c < p.cols(); ++c)
            s += 0.5 * (p.at(i, c) * std::log(p.at(i, c) / q.at(i, c)) + q.at(i, c) * std::log(q.at(i, c) / p.at(i, c)));
    return s / p.rows();
}

// Scaled dot-product attention over per-sequence tokens, element by element.
Tensor attention_loop(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t batch, std::size_t heads)
{
    const std::size_t sq = q.rows() / batch, sk = k.rows() / batch, dh = q.cols() / heads, dv = v.cols() / heads;
    Tensor out(Shape{q.rows(), v.cols()});
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < sq; ++i) {
                std::vector<double> s(sk);
                double z = 0;
                for (std::size_t j = 0; j < sk; ++j) {
                    s[j] = 0;
                    for (std::size_t c = 0; c < dh; ++c) s[j] += q.at(b * sq + i, h * dh + c) * k.at(b * sk + j, h * dh + c);
                    z += (s[j] = std::exp(s[j] / std::sqrt(double(dh))));
                }
                for (std::size_t j = 0; j < sk; ++j)
                    for (std::size_t c = 0; c < dv; ++c) out.at(b * sq + i, h * dv + c) += s[j] / z * v.at(b * sk + j, h * dv + c);
            }
    return out;
}

Tensor signed_gat_loop(const Tensor& hp, const Tensor& attn, const std::vector<std::vector<bool>>& adj,
                       std::size_t heads, double slope)
{
    const std::size_t n = hp.rows(), dh = hp.cols() / heads;
    Tensor out(Shape{n, hp.cols()});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t h = 0; h < heads; ++h) {
            std::vector<double> e(n, 0.0);
            double z = 0;
            for (std::size_t j = 0; j < n; ++j) {
                if (!adj[i][j]) continue;
                double s = 0;
                for (std::size_t c = 0; c < dh; ++c)
                    s += attn.at(h, c) * hp.at(i, h * dh + c) + attn.at(h, dh + c) * hp.at(j, h * dh + c);
                e[j] = s > 0 ? s : slope * s;
                z += std::exp(std::abs(e[j]));
            }
            for (std::size_t j = 0; j < n; ++j)
                if (adj[i][j])
                    for (std::size_t c = 0; c < dh; ++c)
                        out.at(i, h * dh + c) += (e[j] < 0 ? -1 : 1) * std::exp(std::abs(e[j])) / z * hp.at(j, h * dh + c);
        }
    return out;
}

Outcome oracle_equivalence()
{
    double worst[5] = {0, 0, 0, 0, 0};
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        std::mt19937_64 rng(seed);
        const std::vector<int> y{0, 1, 1, 0};
        const Tensor r = random_matrix(4, 6, rng), z = random_matrix(4, 6, rng), g = random_matrix(4, 6, rng);
        worst[0] = std::max(worst[0], std::abs(scl_loss(Var(r), y, 0.5).loss.item() - scl_loop(r, y, 0.5)));
        worst[1] = std::max(worst[1], std::abs(cmca_loss(Var(z), Var(g), 0.5).item() - cmca_loop(z, g, 0.5)));
        const Tensor p = softmax_rows(Var(random_matrix(4, 2, rng))).value();
        const Tensor q = softmax_rows(Var(random_matrix(4, 2, rng))).value();
        worst[2] = std::max(worst[2], std::abs(mutual_learning_loss(Var(p), Var(q)).item() - ml_loop(p, q)));

        const Tensor aq = random_matrix(8, 4, rng), ak = random_matrix(8, 4, rng), av = random_matrix(8, 4, rng);
        worst[3] = std::max(worst[3], max_abs_diff(attention(Var(aq), Var(ak), Var(av), 2, 2).value(),
                                                   attention_loop(aq, ak, av, 2, 2)));

        const kernels::EdgeIndex edges{{0, 2, 5, 7, 9}, {0, 1, 0, 1, 2, 2, 3, 3, 1}};
        std::vector<std::vector<bool>> adj(4, std::vector<bool>(4, false));
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t k = edges.offsets[i]; k < edges.offsets[i + 1]; ++k) adj[i][edges.sources[k]] = true;
        const Tensor hp = random_matrix(4, 6, rng), at = random_matrix(2, 6, rng);
        worst[4] = std::max(worst[4], max_abs_diff(signed_gat(Var(hp), Var(at), edges, 2, 0.2).value(),
                                                   signed_gat_loop(hp, at, adj, 2, 0.2)));
    }
    const double m = *std::max_element(std::begin(worst), std::end(worst));
    return {m < 1e-6, fmt::format("20 random cases each; max |diff| scl {:.1e} cmca {:.1e} ml {:.1e} attention {:.1e} "
                                  "signed-gat {:.1e}",
                                  worst[0], worst[1], worst[2], worst[3], worst[4])};
}

// ---------------------------------------------------------------------------

Outcome analytic_collapses()
{
    std::mt19937_64 rng(3);
    const double cmca1 = cmca_loss(Var(random_matrix(1, 5, rng)), Var(random_matrix(1, 5, rng)), 0.5).item();
    const Tensor p = softmax_rows(Var(random_matrix(4, 2, rng))).value();
    const double ml = mutual_learning_loss(Var(p), Var(p)).item();
    const Tensor x = random_matrix(3, 9, rng);
    const double af = reconstruction_loss(Var(x), Var(x)).item();

    SyntheticSpec s;
    s.n = 40;
    s.d = 8;
    s.seed = 3;
    s.vocab_size = 40;
    s.seq_len = 8;
    const Dataset data = generate_synthetic(s);
    TrainConfig c;
    c.d = 12;
    c.heads = 2;
    c.kernel_sizes = {2, 3};
    c.lambda = {0, 0, 0, 0};
    bool exact = true;
    for (bool adaptive : {true, false}) {
        c.use_af = adaptive;
        const Model model = init_model(c, input_shape_of(data));
        const SocialGraph graph = build_graph(model, data);
        const std::vector<std::size_t> batch{0, 1, 2, 3, 4, 5, 6, 7};
        Tape tape;
        const ForwardResult f = forward(tape, model, data, graph, batch, {});
        exact = exact && f.total.item() == f.terms.ce.item() && f.breakdown.total == f.breakdown.ce;
    }
    return {cmca1 == 0.0 && exact && ml == 0.0 && af == 0.0,
            fmt::format("single-pair cmca {}, zero-weight total == ce exactly: {}, ml(P, P) {}, af(X, X) {}", cmca1,
                        exact ? "yes" : "no", ml, af)};
}

// ---------------------------------------------------------------------------

TrainConfig full_config()
{
    TrainConfig c;
    c.d = 32;
    c.seed = 1;
    return c;
}

Outcome synthetic_convergence()
{
    SyntheticSpec s;
    s.n = 600;
    s.d = 32;
    s.separation = 5.0;
    s.seed = 42;
    auto start = std::chrono::steady_clock::now();
    const Dataset separable = generate_synthetic(s);
    const TrainResult r = train(full_config(), separable);
    const double acc = evaluate(r.model, separable, Split::test).acc;
    const double secs = seconds_since(start);

    s.separation = 0.0;
    s.graph_noise = 1.0;
    const Dataset null_data = generate_synthetic(s);
    start = std::chrono::steady_clock::now();
    const TrainResult rn = train(full_config(), null_data);
    const double null_acc = evaluate(rn.model, null_data, Split::test).acc;
    const double null_secs = seconds_since(start);

    const bool pass = !r.error && acc >= 0.95 && secs < 300.0 && null_acc >= 0.40 && null_acc <= 0.60;
    return {pass, fmt::format("separation 5: test acc {:.4f} in {:.1f} s (best epoch {}); no signal: test acc {:.4f} "
                              "in {:.1f} s",
                              acc, secs, r.best_epoch, null_acc, null_secs)};
}

Outcome social_only_ablation()
{
    SyntheticSpec s;
    s.n = 600;
    s.d = 32;
    s.separation = 0.0;
    s.graph_noise = 0.0;
    s.seed = 42;
    const Dataset data = generate_synthetic(s);
    const TrainResult r = train(full_config(), data);
    const double intact = evaluate(r.model, data, Split::test).acc;
    const double zeroed = evaluate(r.model, data, Split::test, true).acc;
    return {intact - zeroed >= 0.25,
            fmt::format("signal only in the social graph: intact {:.4f}, social zeroed {:.4f}, drop {:.4f}", intact,
                        zeroed, intact - zeroed)};
}

// ---------------------------------------------------------------------------

Outcome split_arithmetic()
{
    std::vector<int> y(1428, 0);
    y.insert(y.end(), 590, 1);
    const SplitAssignment a = split_dataset(y, {}, 7), b = split_dataset(y, {}, 7);
    std::size_t sizes[3], rumors[3] = {0, 0, 0};
    bool stratified = true;
    for (Split s : {Split::train, Split::val, Split::test}) {
        const auto idx = a.indices(s);
        const auto k = static_cast<std::size_t>(s);
        sizes[k] = idx.size();
        for (auto i : idx) rumors[k] += static_cast<std::size_t>(y[i]);
        stratified = stratified && std::abs(double(rumors[k]) - 590.0 / 2018.0 * double(sizes[k])) <= 1.0;
    }
    const bool same = a.of_post == b.of_post;
    return {sizes[0] == 1412 && sizes[1] == 201 && sizes[2] == 405 && stratified && same,
            fmt::format("N = 2018 -> {}/{}/{}, rumors {}/{}/{}, stratified {}, same seed identical {}", sizes[0],
                        sizes[1], sizes[2], rumors[0], rumors[1], rumors[2], stratified ? "yes" : "no",
                        same ? "yes" : "no")};
}

Outcome determinism()
{
    SyntheticSpec s;
    s.n = 200;
    s.d = 16;
    s.seed = 8;
    const Dataset data = generate_synthetic(s);
    TrainConfig c;
    c.d = 24;
    c.heads = 4;
    c.epochs = 5;
    c.seed = 11;
    const TrainResult a = train(c, data), b = train(c, data);
    MetricsReport ra = evaluate(a.model, data, Split::test), rb = evaluate(b.model, data, Split::test);
    ra.history = a.history;
    rb.history = b.history;
    const bool same = a.history == b.history && ra == rb && format_report(ra) == format_report(rb);
    return {same && a.history.size() == 5,
            fmt::format("two runs, {} epochs: loss histories {}, reports {}", a.history.size(),
                        a.history == b.history ? "identical" : "differ", ra == rb ? "identical" : "differ")};
}

// ---------------------------------------------------------------------------

int shell(const std::string& cmd)
{
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome cli_sweep()
{
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "ismaf_acceptance_sweep";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string cli = ISMAF_CLI;
    const std::string data = (dir / "data").string(), out = (dir / "sweep.tsv").string();
    if (shell(cli + " synth --n 120 --d 16 --seed 5 --out " + data + " > /dev/null") != 0)
        return {false, "synth failed"};
    const int rc = shell(cli + " sweep --lambda-index 2 --range 0:1:0.5 --data " + data + " --out " + out +
                         " --set d=24 --set heads=4 --set sweep_epochs=3 2> /dev/null");
    if (rc != 0) return {false, fmt::format("sweep exited with {}", rc)};

    std::ifstream in(out);
    std::string header, line;
    std::getline(in, header);
    std::vector<std::string> rows;
    bool in_range = true;
    while (std::getline(in, line)) {
        double v, acc, f1;
        if (std::sscanf(line.c_str(), "%lf\t%lf\t%lf", &v, &acc, &f1) != 3) return {false, "malformed row: " + line};
        in_range = in_range && acc >= 0 && acc <= 1 && f1 >= 0 && f1 <= 1;
        rows.push_back(fmt::format("{:.1f}->{:.4f}/{:.4f}", v, acc, f1));
    }
    std::string joined;
    for (const auto& r : rows) joined += (joined.empty() ? "" : ", ") + r;
    return {rows.size() == 3 && in_range && header == "lambda2\tacc\tf1",
            fmt::format("{} rows (lambda2 -> acc/f1): {}", rows.size(), joined)};
}

} // namespace

int main()
{
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gradient-integrity", gradient_integrity},
        {"oracle-equivalence", oracle_equivalence},
        {"analytic-collapses", analytic_collapses},
        {"synthetic-convergence", synthetic_convergence},
        {"social-ablation", social_only_ablation},
        {"split-arithmetic", split_arithmetic},
        {"determinism", determinism},
        {"cli-sweep", cli_sweep},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.pass;
        fmt::print("{} {:22s} {}\n", o.pass ? "PASS" : "FAIL", name, o.detail);
        std::fflush(stdout);
    }
    fmt::print("{} of {} criteria passed\n", criteria.size() - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
