#include "ismaf/config.hpp"

#include "ismaf/bridging.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace ismaf {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected)
{
    throw std::invalid_argument("config key '" + key + "': '" + value + "' is not " + expected);
}

double to_double(const std::string& key, const std::string& value)
{
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size() || !std::isfinite(out))
        bad_value(key, value, "a finite number");
    return out;
}

std::uint64_t to_unsigned(const std::string& key, const std::string& value)
{
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size() || value.empty())
        bad_value(key, value, "a non-negative integer");
    return out;
}

bool to_bool(const std::string& key, const std::string& value)
{
    if (value == "true" || value == "1" || value == "on") return true;
    if (value == "false" || value == "0" || value == "off") return false;
    bad_value(key, value, "a boolean (true/false)");
}

std::vector<std::size_t> to_list(const std::string& key, const std::string& value)
{
    std::vector<std::size_t> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_unsigned(key, trim(item)));
    if (out.empty()) bad_value(key, value, "a comma-separated list");
    return out;
}

struct Field {
    const char* key;
    std::function<std::string(const TrainConfig&)> get;
    std::function<void(TrainConfig&, const std::string& key, const std::string&)> set;
};

template <typename T>
Field size_field(const char* key, T TrainConfig::*member)
{
    return {key, [member](const TrainConfig& c) { return fmt::format("{}", c.*member); },
            [member](TrainConfig& c, const std::string& k, const std::string& v) {
                c.*member = static_cast<T>(to_unsigned(k, v));
            }};
}

Field real_field(const char* key, std::function<double&(TrainConfig&)> ref)
{
    return {key, [ref](const TrainConfig& c) { return fmt::format("{}", ref(const_cast<TrainConfig&>(c))); },
            [ref](TrainConfig& c, const std::string& k, const std::string& v) { ref(c) = to_double(k, v); }};
}

Field flag_field(const char* key, bool TrainConfig::*member)
{
    return {key, [member](const TrainConfig& c) { return std::string(c.*member ? "true" : "false"); },
            [member](TrainConfig& c, const std::string& k, const std::string& v) { c.*member = to_bool(k, v); }};
}

const std::vector<Field>& fields()
{
    static const std::vector<Field> table = {
        size_field("d", &TrainConfig::d),
        size_field("heads", &TrainConfig::heads),
        size_field("batch_size", &TrainConfig::batch_size),
        size_field("epochs", &TrainConfig::epochs),
        real_field("lr", [](TrainConfig& c) -> double& { return c.lr; }),
        real_field("lr_decay", [](TrainConfig& c) -> double& { return c.lr_decay; }),
        real_field("dropout", [](TrainConfig& c) -> double& { return c.dropout; }),
        real_field("tau_scl", [](TrainConfig& c) -> double& { return c.tau_scl; }),
        real_field("tau_cmca", [](TrainConfig& c) -> double& { return c.tau_cmca; }),
        real_field("lambda1", [](TrainConfig& c) -> double& { return c.lambda.scl; }),
        real_field("lambda2", [](TrainConfig& c) -> double& { return c.lambda.cmca; }),
        real_field("lambda3", [](TrainConfig& c) -> double& { return c.lambda.ml; }),
        real_field("lambda4", [](TrainConfig& c) -> double& { return c.lambda.af; }),
        real_field("theta", [](TrainConfig& c) -> double& { return c.theta; }),
        size_field("seed", &TrainConfig::seed),
        real_field("split_train", [](TrainConfig& c) -> double& { return c.split.train; }),
        real_field("split_val", [](TrainConfig& c) -> double& { return c.split.val; }),
        real_field("split_test", [](TrainConfig& c) -> double& { return c.split.test; }),
        flag_field("use_mre", &TrainConfig::use_mre),
        flag_field("use_cmca", &TrainConfig::use_cmca),
        flag_field("use_ml", &TrainConfig::use_ml),
        flag_field("use_af", &TrainConfig::use_af),
        {"fusion", [](const TrainConfig& c) { return std::string(fusion_name(c.fusion)); },
         [](TrainConfig& c, const std::string&, const std::string& v) { c.fusion = parse_fusion(v); }},
        size_field("gat_layers", &TrainConfig::gat_layers),
        size_field("lift_tokens", &TrainConfig::lift_tokens),
        {"kernel_sizes", [](const TrainConfig& c) { return fmt::format("{}", fmt::join(c.kernel_sizes, ",")); },
         [](TrainConfig& c, const std::string& k, const std::string& v) { c.kernel_sizes = to_list(k, v); }},
        real_field("leaky_slope", [](TrainConfig& c) -> double& { return c.leaky_slope; }),
        flag_field("connect_heterogeneous", &TrainConfig::connect_heterogeneous),
        size_field("fusion_depth", &TrainConfig::fusion_depth),
        size_field("common_dim", &TrainConfig::common_dim),
        size_field("sweep_epochs", &TrainConfig::sweep_epochs),
    };
    return table;
}

void require(bool ok, const char* key, const std::string& what)
{
    if (!ok) throw std::invalid_argument(std::string("config key '") + key + "': " + what);
}

} // namespace

void TrainConfig::validate() const
{
    require(d >= 1, "d", "must be positive");
    require(heads >= 1, "heads", "must be positive");
    require(batch_size >= 2, "batch_size", "must be at least 2");
    require(lr > 0, "lr", "must be positive");
    require(lr_decay > 0, "lr_decay", "must be positive");
    require(dropout >= 0 && dropout < 1, "dropout", "must lie in [0, 1)");
    require(tau_scl > 0, "tau_scl", "must be positive");
    require(tau_cmca > 0, "tau_cmca", "must be positive");
    const char* lambda_keys[] = {"lambda1", "lambda2", "lambda3", "lambda4"};
    const auto weights = lambda.as_array();
    for (std::size_t i = 0; i < 4; ++i) require(weights[i] >= 0, lambda_keys[i], "must be non-negative");
    require(theta >= 0 && theta < 1, "theta", "must lie in [0, 1)");
    require(split.train > 0 && split.val >= 0 && split.test > 0, "split_train",
            "fractions must be positive (validation may be 0)");
    require(std::abs(split.train + split.val + split.test - 1.0) < 1e-9, "split_train",
            "split_train + split_val + split_test must equal 1");
    require(gat_layers >= 1, "gat_layers", "must be positive");
    require(lift_tokens == 0 || d % lift_tokens == 0, "lift_tokens", "must divide d");
    require(!kernel_sizes.empty(), "kernel_sizes", "must not be empty");
    for (std::size_t k : kernel_sizes) require(k >= 1, "kernel_sizes", "entries must be positive");
    require(d >= kernel_sizes.size(), "kernel_sizes", "more kernel sizes than d");
    require(leaky_slope >= 0, "leaky_slope", "must be non-negative");
    require(fusion_depth >= 1, "fusion_depth", "must be positive");
}

LossWeights TrainConfig::effective_lambda() const
{
    LossWeights w = lambda;
    if (!use_mre) w.scl = 0;
    if (!use_cmca) w.cmca = 0;
    if (!use_ml) w.ml = 0;
    if (!use_af || effective_fusion() != FusionKind::adaptive) w.af = 0;
    return w;
}

FusionKind TrainConfig::effective_fusion() const
{
    if (fusion == FusionKind::adaptive && !use_af) return FusionKind::is_concat;
    return fusion;
}

std::size_t TrainConfig::effective_lift_tokens() const
{
    return lift_tokens == 0 ? lift_tokens_for(d, 6) : lift_tokens;
}

bool operator==(const TrainConfig& a, const TrainConfig& b)
{
    return config_to_text(a) == config_to_text(b);
}

void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value)
{
    for (const Field& f : fields())
        if (key == f.key) return f.set(cfg, key, value);
    throw std::invalid_argument("unknown config key '" + key + "'");
}

TrainConfig parse_config(const std::string& text)
{
    TrainConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
        set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    cfg.validate();
    return cfg;
}

TrainConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string config_to_text(const TrainConfig& cfg)
{
    std::string out;
    for (const Field& f : fields()) out += fmt::format("{} = {}\n", f.key, f.get(cfg));
    return out;
}

} // namespace ismaf
