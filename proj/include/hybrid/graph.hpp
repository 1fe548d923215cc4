// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hybrid/tensor.hpp"

namespace hybrid {

enum class GraphMode { record, forward_only };

class TapeCorrupt : public std::logic_error {
public:
    explicit TapeCorrupt(const std::string& what) : std::logic_error("tape corrupt: " + what) {}
};

/// Activation bookkeeping for one pass.
///
/// `live_elements`/`peak_elements` count values kept alive for the backward
/// pass, once per tensor, excluding parameters. `transient_peak_elements` is
/// the largest working set of a single primitive: its distinct non-parameter
/// inputs plus its output.
struct ActivationLedger {
    int64_t live_elements = 0;
    int64_t peak_elements = 0;
    int64_t transient_peak_elements = 0;
};

/// Handle to a value slot in a Graph.
struct Var {
    int32_t id = -1;
    bool valid() const { return id >= 0; }
};

/// Eager dataflow graph with a reverse-mode tape.
///
/// In record mode every primitive is appended to the tape together with a
/// local backward rule and the operands it keeps for that rule. In
/// forward_only mode nothing is recorded and the stored-activation count
/// stays at zero. Node order is creation order, so walking the tape
/// backwards is a reverse topological traversal.
class Graph {
public:
    explicit Graph(GraphMode mode = GraphMode::record);
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    GraphMode mode() const { return mode_; }

    /// Non-trainable input owned by the graph.
    Var constant(Tensor value);
    /// Non-trainable input referenced by the graph; must outlive it.
    Var constant_ref(const Tensor& value);
    /// Named parameter leaf, referenced (not copied). Parameters never count
    /// as activations. Gradients are only produced when `requires_grad`.
    Var parameter(const std::string& name, const Tensor& value, bool requires_grad = true);

    const Tensor& value(Var v) const;
    const Shape& shape(Var v) const { return value(v).shape(); }

    size_t tape_size() const { return tape_.size(); }
    size_t node_count() const { return nodes_.size(); }
    const ActivationLedger& ledger() const { return ledger_; }

    /// Reverse sweep from a scalar output. Returns gradients keyed by
    /// parameter name (accumulated when a name is bound more than once).
    /// Stored activations are released afterwards; the tape can be swept once.
    std::map<std::string, Tensor> backward(Var output, const Tensor& output_grad);
    std::map<std::string, Tensor> backward(Var output) { return backward(output, Tensor::scalar(1.0F)); }

    // Primitives.
    Var matmul(Var a, Var b);
    /// Stride-1 convolution of x [Cin,H,W] with w [Cout,Cin,kh,kw], zero padding.
    Var conv2d(Var x, Var w, std::optional<Var> bias, int padding);
    Var add(Var a, Var b);
    Var mul(Var a, Var b);
    Var relu(Var x);
    Var silu(Var x);
    Var mean(Var x);
    Var mse(Var a, Var b);
    Var avg_pool2x2(Var x);
    /// Expands size-1 axes of x to `shape` (same rank).
    Var broadcast(Var x, Shape shape);
    Var reshape(Var x, Shape shape);
    /// Row `index` of table [N,D] as a [D] vector.
    Var embedding(Var table, int64_t index);

private:
    using GradSlots = std::vector<Tensor*>;
    using BackwardRule = std::function<void(const Tensor& grad_out, const GradSlots& grad_in)>;

    struct Node {
        Tensor owned;
        const Tensor* ref = nullptr;
        std::vector<int32_t> inputs;
        BackwardRule rule;
        std::string param_name;
        Shape bound_shape;
        const char* op = "leaf";
        bool is_param = false;
        bool requires_grad = false;
        bool saved = false;
        const Tensor& val() const { return ref != nullptr ? *ref : owned; }
    };

    Var emit(const char* op, std::vector<int32_t> inputs, Tensor out, std::vector<int32_t> saves, BackwardRule rule);
    const Node& node(Var v) const;
    void save(int32_t id);

    GraphMode mode_;
    std::vector<Node> nodes_;
    std::vector<int32_t> tape_;
    ActivationLedger ledger_;
    bool swept_ = false;
};

/// Nearest-neighbour 2x upsampling composed from reshape and broadcast.
Var upsample2x(Graph& g, Var x);

}  // namespace hybrid
