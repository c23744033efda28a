#pragma once

// Reverse-mode differentiation over a recorded operation list.
//
// A Var is an immutable value plus an optional node id on a Tape. Values
// computed only from constants stay constants and are never recorded, so
// plain evaluation needs no tape at all. Parameters enter through
// Tape::param, which binds a ParamStore entry to a leaf node.

#include "ismaf/tensor.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace ismaf::ad {

class Tape;

class Var {
public:
    Var() = default;
    Var(Tensor value);  // NOLINT: constants convert implicitly

    const Tensor& value() const { return *value_; }
    const Shape& shape() const { return value_->shape(); }
    std::size_t numel() const { return value_->numel(); }
    std::size_t rows() const { return value_->rows(); }
    std::size_t cols() const { return value_->cols(); }
    double item() const { return value_->item(); }

    bool is_constant() const { return !node_.has_value(); }
    std::optional<std::size_t> node_id() const { return node_; }
    Tape* tape() const { return tape_; }

private:
    friend class Tape;
    Var(std::shared_ptr<const Tensor> value, Tape* tape, std::size_t node)
        : value_(std::move(value)), tape_(tape), node_(node)
    {
    }

    std::shared_ptr<const Tensor> value_ = std::make_shared<const Tensor>();
    Tape* tape_ = nullptr;
    std::optional<std::size_t> node_;
};

// Receives the gradient contributions of one recorded op for its inputs.
class GradSink {
public:
    bool wants(std::size_t input) const;
    void add(std::size_t input, const Tensor& grad);

private:
    friend class Tape;
    GradSink(Tape& tape, const std::vector<std::optional<std::size_t>>& inputs) : tape_(tape), inputs_(inputs) {}
    Tape& tape_;
    const std::vector<std::optional<std::size_t>>& inputs_;
};

using BackwardFn = std::function<void(const Tensor& grad_out, GradSink& sink)>;

// Named trainable tensors. Each entry draws its initial values from a
// generator seeded by (store seed, entry name), so creation order does not
// matter and the same seed always reproduces the same bits.
class ParamStore {
public:
    enum class Init { xavier_uniform, zeros };

    explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

    const Tensor& create(const std::string& name, Shape shape, Init init = Init::xavier_uniform,
                         bool trainable = true);
    const Tensor& create(const std::string& name, Tensor value, bool trainable = true);

    bool contains(const std::string& name) const { return entries_.contains(name); }
    bool trainable(const std::string& name) const;
    const Tensor& get(const std::string& name) const;
    Tensor& mutable_value(const std::string& name);
    void set(const std::string& name, Tensor value);

    std::vector<std::string> names() const;
    std::size_t trainable_count() const;  // number of trainable scalar entries
    std::uint64_t seed() const { return seed_; }

    friend bool operator==(const ParamStore& a, const ParamStore& b);

private:
    struct Entry {
        Tensor value;
        bool trainable = true;
        friend bool operator==(const Entry&, const Entry&) = default;
    };
    std::uint64_t seed_;
    std::map<std::string, Entry> entries_;
};

using GradMap = std::map<std::string, Tensor>;

class Tape {
public:
    Tape() = default;
    // A non-recording tape hands out parameters as constants, so a forward
    // pass through it builds no graph.
    explicit Tape(bool recording) : recording_(recording) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value);  // differentiable input not owned by a ParamStore
    Var param(const ParamStore& store, const std::string& name);

    // Records an op whose value has already been computed. Returns a
    // constant when no input needs a gradient.
    static Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

    // Runs the reverse sweep from a scalar loss. Gradients of bound
    // parameters are returned by name; leaf gradients stay queryable via grad().
    GradMap backward(const Var& loss);
    const Tensor& grad(const Var& v) const;

    std::size_t size() const { return nodes_.size(); }
    bool recording() const { return recording_; }

private:
    friend class GradSink;
    struct Node {
        std::shared_ptr<const Tensor> value;
        std::vector<std::optional<std::size_t>> inputs;
        BackwardFn backward;
        Tensor grad;
    };

    Var push(Tensor value, std::vector<std::optional<std::size_t>> inputs, BackwardFn backward);
    void accumulate(std::size_t node, const Tensor& g);

    std::deque<Node> nodes_;
    std::map<std::string, std::size_t> params_;
    bool recording_ = true;
};

} // namespace ismaf::ad
