#pragma once

#include "psg/array.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace psg {

/// Named learnable array with its gradient accumulator.
struct Parameter {
    std::string name;
    Array value;
    Array grad;

    Parameter(std::string n, Array v) : name(std::move(n)), value(std::move(v)) {
        grad = Array(value.shape());
    }
};

/// Ordered collection of parameters. Order is creation order and defines the
/// checkpoint layout, so it must be identical across runs.
class ParamStore {
public:
    Parameter& add(std::string name, Array init);
    Parameter& at(const std::string& name);
    const Parameter& at(const std::string& name) const;
    bool contains(const std::string& name) const;

    std::size_t size() const { return params_.size(); }
    Parameter& operator[](std::size_t i) { return *params_[i]; }
    const Parameter& operator[](std::size_t i) const { return *params_[i]; }

    std::size_t total_elements() const;
    void zero_grads();

    /// Deep copy, used for EMA teachers and checkpoint snapshots.
    ParamStore clone() const;

    /// Copies values from another store with identical names/shapes.
    void copy_values_from(const ParamStore& other);

private:
    std::vector<std::unique_ptr<Parameter>> params_;
    std::map<std::string, std::size_t> index_;
};

/// Handle to a node on a Tape.
struct Var {
    std::uint32_t idx = 0;
};

/// Reverse-mode gradient tape over whole-array primitives. Nodes are recorded
/// in forward order; backward() replays them in exact reverse order. A tape is
/// confined to one thread; Arrays read from it are safe to share read-only.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf that participates in the graph but receives no gradient.
    Var constant(Array value);
    /// Leaf bound to a parameter; backward() accumulates into p.grad.
    Var param(Parameter& p);

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double c);
    /// m (R x C) + row (C), broadcast over rows.
    Var add_rowwise(Var m, Var row);
    /// m + s where s is scalar, broadcast everywhere.
    Var add_scalar(Var m, Var s);

    Var matmul(Var a, Var b);
    Var transpose(Var a);

    Var softmax(Var x, std::size_t axis);
    /// Normalizes over the last axis of a 2-D input; gain/bias have that width.
    Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
    Var gelu(Var x);

    /// out[r, :] = table[rows[r], :]
    Var gather_rows(Var table, std::vector<std::size_t> rows);
    Var vstack(std::span<const Var> parts);
    Var hstack(std::span<const Var> parts);
    Var slice_rows(Var x, std::size_t start, std::size_t count);
    Var slice_cols(Var x, std::size_t start, std::size_t count);
    /// Column means of a 2-D input, shape {1, C}.
    Var mean_rows(Var x);
    Var reshape(Var x, std::vector<std::size_t> shape);

    Var sum(Var x);
    Var mean(Var x);

    /// Mean sigmoid classification loss over the entries of `planes` (P arrays
    /// of shape {N,N}) selected by include ({N,N,P}, nonzero = counted).
    /// focal=false gives plain binary cross-entropy with soft targets; focal
    /// applies the (1-p_t)^gamma modulation with `balance` weighting the
    /// positive branch. Throws TrainingError on non-finite logits.
    Var pair_loss(std::span<const Var> planes, const Array& targets, const Array& include,
                  double gamma, double balance, bool focal);

    const Array& value(Var v) const { return nodes_[v.idx].value; }
    const Array& grad(Var v) const { return nodes_[v.idx].grad; }

    /// Reverse sweep from a scalar loss. Gradients land in node.grad and, for
    /// param leaves, accumulate into Parameter::grad. Non-scalar loss throws.
    void backward(Var loss);

    void reset();
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Array value;
        Array grad;
        Parameter* param = nullptr;
        // Pulls this node's grad back into its inputs; empty for leaves.
        std::function<void(Tape&, const Node&)> pull;
    };

    Var emplace(Array value, std::function<void(Tape&, const Node&)> pull);
    Node& node(Var v) { return nodes_[v.idx]; }
    Array& grad_of(std::uint32_t idx) { return nodes_[idx].grad; }
    const Array& value_of(std::uint32_t idx) const { return nodes_[idx].value; }

    std::vector<Node> nodes_;
};

/// 1 everywhere except the diagonal planes (i == j), shape {n, n, p}.
Array offdiag_mask(std::size_t n, std::size_t p);

double sigmoid(double z);
/// log(sigmoid(z)) computed without overflow.
double log_sigmoid(double z);

} // namespace psg
