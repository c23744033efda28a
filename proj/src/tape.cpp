#include "ismaf/tape.hpp"

#include <cmath>

namespace ismaf::ad {

Var::Var(Tensor value) : value_(std::make_shared<const Tensor>(std::move(value))) {}

// ============================================================================
// GradSink
// ============================================================================

bool GradSink::wants(std::size_t input) const
{
    return input < inputs_.size() && inputs_[input].has_value();
}

void GradSink::add(std::size_t input, const Tensor& grad)
{
    if (wants(input)) tape_.accumulate(*inputs_[input], grad);
}

// ============================================================================
// ParamStore
// ============================================================================

const Tensor& ParamStore::create(const std::string& name, Shape shape, Init init, bool trainable)
{
    Tensor value(std::move(shape));
    if (init == Init::xavier_uniform) {
        const double fan_in = static_cast<double>(value.rows());
        const double fan_out = static_cast<double>(value.cols());
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        std::seed_seq seq(name.begin(), name.end());
        std::vector<std::uint32_t> name_words(2);
        seq.generate(name_words.begin(), name_words.end());
        std::seed_seq mixed{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                            name_words[0], name_words[1]};
        std::mt19937_64 rng(mixed);
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& v : value.data()) v = dist(rng);
    }
    return create(name, std::move(value), trainable);
}

const Tensor& ParamStore::create(const std::string& name, Tensor value, bool trainable)
{
    auto [it, inserted] = entries_.try_emplace(name, Entry{std::move(value), trainable});
    if (!inserted) throw std::invalid_argument("parameter '" + name + "' already exists");
    return it->second.value;
}

bool ParamStore::trainable(const std::string& name) const
{
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return it->second.trainable;
}

const Tensor& ParamStore::get(const std::string& name) const
{
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return it->second.value;
}

Tensor& ParamStore::mutable_value(const std::string& name)
{
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return it->second.value;
}

void ParamStore::set(const std::string& name, Tensor value)
{
    Tensor& dst = mutable_value(name);
    if (dst.shape() != value.shape())
        throw DimensionError("set '" + name + "': " + shape_str(dst.shape()) + " vs " + shape_str(value.shape()));
    dst = std::move(value);
}

std::vector<std::string> ParamStore::names() const
{
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, _] : entries_) out.push_back(name);
    return out;
}

std::size_t ParamStore::trainable_count() const
{
    std::size_t n = 0;
    for (const auto& [_, e] : entries_)
        if (e.trainable) n += e.value.numel();
    return n;
}

bool operator==(const ParamStore& a, const ParamStore& b)
{
    return a.seed_ == b.seed_ && a.entries_ == b.entries_;
}

// ============================================================================
// Tape
// ============================================================================

Var Tape::push(Tensor value, std::vector<std::optional<std::size_t>> inputs, BackwardFn backward)
{
    auto shared = std::make_shared<const Tensor>(std::move(value));
    const std::size_t id = nodes_.size();
    nodes_.push_back(Node{shared, std::move(inputs), std::move(backward), Tensor{}});
    return Var(std::move(shared), this, id);
}

Var Tape::leaf(Tensor value)
{
    return push(std::move(value), {}, nullptr);
}

Var Tape::param(const ParamStore& store, const std::string& name)
{
    if (!recording_ || !store.trainable(name)) return Var(store.get(name));
    auto it = params_.find(name);
    if (it != params_.end()) return Var(nodes_[it->second].value, this, it->second);
    Var v = leaf(store.get(name));
    params_.emplace(name, *v.node_id());
    return v;
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward)
{
    Tape* tape = nullptr;
    for (const Var& in : inputs) {
        if (in.is_constant()) continue;
        if (tape && tape != in.tape()) throw ContractError("operation mixes variables from two tapes");
        tape = in.tape();
    }
    if (!tape) return Var(std::move(value));
    std::vector<std::optional<std::size_t>> ids;
    ids.reserve(inputs.size());
    for (const Var& in : inputs) ids.push_back(in.node_id());
    return tape->push(std::move(value), std::move(ids), std::move(backward));
}

void Tape::accumulate(std::size_t node, const Tensor& g)
{
    Tensor& dst = nodes_[node].grad;
    if (dst.empty() && !nodes_[node].value->empty()) {
        if (g.numel() != nodes_[node].value->numel())
            throw DimensionError("gradient " + shape_str(g.shape()) + " for value " +
                                 shape_str(nodes_[node].value->shape()));
        dst = Tensor(nodes_[node].value->shape(), g.values());
    } else {
        dst.add_inplace(g);
    }
}

GradMap Tape::backward(const Var& loss)
{
    if (loss.numel() != 1)
        throw ContractError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
    GradMap out;
    if (loss.is_constant()) return out;
    if (loss.tape() != this) throw ContractError("loss was recorded on another tape");

    for (Node& n : nodes_) n.grad = Tensor{};
    accumulate(*loss.node_id(), Tensor(loss.shape(), 1.0));

    for (std::size_t k = *loss.node_id() + 1; k-- > 0;) {
        Node& n = nodes_[k];
        if (n.grad.empty() || !n.backward) continue;
        GradSink sink(*this, n.inputs);
        n.backward(n.grad, sink);
    }
    for (const auto& [name, id] : params_) {
        const Node& n = nodes_[id];
        out.emplace(name, n.grad.empty() ? Tensor(n.value->shape()) : n.grad);
    }
    return out;
}

const Tensor& Tape::grad(const Var& v) const
{
    if (v.is_constant() || v.tape() != this) throw ContractError("grad() of a value not recorded on this tape");
    return nodes_[*v.node_id()].grad;
}

} // namespace ismaf::ad
