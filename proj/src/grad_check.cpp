#include "ismaf/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace ismaf::ad {

GradCheckResult grad_check(const LossFn& f, ParamStore& params, double h)
{
    return grad_check(f, params, GradCheckOptions{h, 0, 0});
}

GradCheckResult grad_check(const LossFn& f, ParamStore& params, const GradCheckOptions& options)
{
    const double h = options.h;
    if (!(h > 0.0)) throw std::invalid_argument("grad_check step must be positive");

    GradMap analytic;
    {
        Tape tape;
        Var loss = f(tape, params);
        analytic = tape.backward(loss);
    }
    auto evaluate = [&] {
        Tape tape(false);
        return f(tape, params).item();
    };

    std::mt19937_64 rng(options.sample_seed);
    GradCheckResult result;
    for (const std::string& name : params.names()) {
        if (!params.trainable(name)) continue;
        Tensor& value = params.mutable_value(name);
        auto it = analytic.find(name);
        std::vector<std::size_t> entries(value.numel());
        std::iota(entries.begin(), entries.end(), std::size_t{0});
        if (options.max_per_param > 0 && entries.size() > options.max_per_param) {
            std::shuffle(entries.begin(), entries.end(), rng);
            entries.resize(options.max_per_param);
            std::sort(entries.begin(), entries.end());
        }
        for (std::size_t k : entries) {
            const double a = it == analytic.end() ? 0.0 : it->second[k];
            const double saved = value[k];
            auto central = [&](double step) {
                value[k] = saved + step;
                const double up = evaluate();
                value[k] = saved - step;
                const double down = evaluate();
                value[k] = saved;
                return (up - down) / (2.0 * step);
            };
            auto relative = [floor = options.floor](double x, double y) {
                return std::abs(x - y) / std::max({std::abs(x), std::abs(y), floor});
            };
            const double numeric = central(h);
            const double rel = relative(a, numeric);
            if (options.skip_nonsmooth && rel > options.tolerance &&
                relative(numeric, central(0.5 * h)) > options.tolerance) {
                ++result.nonsmooth_skipped;
                continue;
            }
            ++result.entries_checked;
            if (rel > result.max_relative_error) {
                result.max_relative_error = rel;
                result.worst_param = name;
                result.worst_index = k;
                result.analytic = a;
                result.numeric = numeric;
            }
        }
    }
    return result;
}

} // namespace ismaf::ad
