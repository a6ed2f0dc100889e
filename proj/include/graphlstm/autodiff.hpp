#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace glstm::ad {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t element_count(const Shape& shape);

/// Dense row-major array of doubles.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value);
    static Tensor vector(std::vector<double> values);
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty() && shape_.empty(); }

    // Rank-2 accessors. A rank-1 tensor is viewed as a single column.
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }

    double& operator[](std::size_t i) { return values_[i]; }
    const double& operator[](std::size_t i) const { return values_[i]; }
    double& operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

    /// Scalar value of a one-element tensor.
    double item() const;

    void fill(double value);

    bool operator==(const Tensor&) const = default;

private:
    Shape shape_;
    std::vector<double> values_;
};

class Tape;

/// Handle to a value recorded on a tape.
class Var {
public:
    Var() = default;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    Tape* tape() const noexcept { return tape_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }
    bool requires_grad() const;

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Gradient accumulators keyed by node id, allocated lazily.
class GradSink {
public:
    explicit GradSink(const Tape& tape);

    /// Accumulator for node `id`, zero-initialized on first access.
    Tensor& at(std::size_t id);
    bool wants(std::size_t id) const;

private:
    friend class Tape;
    const Tape* tape_;
    std::vector<Tensor> grads_;
};

/// Result of a backward pass.
class Gradients {
public:
    /// Gradient w.r.t. `v`; a zero tensor of v's shape when v did not influence the loss.
    Tensor operator[](Var v) const;

private:
    friend class Tape;
    const Tape* tape_ = nullptr;
    std::vector<Tensor> grads_;
};

/// Records operations in execution order and replays them in reverse for gradients.
///
/// Node ids are assigned in recording order, which is therefore a topological order.
/// A node requires a gradient if it is a tracked leaf or has a parent that does;
/// backward rules are only stored and run for such nodes.
class Tape {
public:
    using BackwardFn = std::function<void(const Tape&, const Tensor& out_grad, GradSink&)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value, bool tracked = true);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    /// Records a derived node. `backward` receives the gradient of the node's output and
    /// must accumulate into the sink for each parent that wants a gradient.
    Var record(Tensor value, std::vector<std::size_t> parents, BackwardFn backward);

    Gradients backward(Var loss) const;

    std::size_t size() const noexcept { return nodes_.size(); }
    const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
    bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

    /// Verifies that `v` lives on this tape.
    void check_owned(Var v, const char* op) const;

private:
    struct Node {
        Tensor value;
        std::vector<std::size_t> parents;
        BackwardFn backward;
        bool requires_grad = false;
    };
    std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Differentiable operations. All operands must share a tape.

Var matmul(Var a, Var b);
Var concat_cols(Var a, Var b);

Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var abs(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);

/// Adds a length-d bias to every row of an N x d matrix.
Var add_bias(Var a, Var bias);

/// Sum or mean over all elements (rank-0 result) or over one axis (that axis removed).
Var sum(Var a, std::optional<std::size_t> axis = std::nullopt);
Var mean(Var a, std::optional<std::size_t> axis = std::nullopt);

Var reshape(Var a, Shape shape);

// Plain forward evaluations used where no tape is needed.
double sigmoid(double x);

// ---------------------------------------------------------------------------
// Parameters

/// Ordered, named collection of learnable tensors.
class ParamStore {
public:
    std::size_t add(std::string name, Tensor init);

    std::size_t size() const noexcept { return tensors_.size(); }
    const std::string& name(std::size_t i) const { return names_.at(i); }
    Tensor& operator[](std::size_t i) { return tensors_.at(i); }
    const Tensor& operator[](std::size_t i) const { return tensors_.at(i); }

    std::optional<std::size_t> find(const std::string& name) const;

    /// Total number of scalar parameters.
    std::size_t scalar_count() const;

    /// Registers every tensor as a tracked leaf; result is indexed like the store.
    std::vector<Var> bind(Tape& tape) const;

    bool operator==(const ParamStore&) const = default;

private:
    std::vector<std::string> names_;
    std::vector<Tensor> tensors_;
};

// ---------------------------------------------------------------------------
// Finite-difference verification

using ScalarFn = std::function<Var(Tape&, Var input)>;
using ParamsFn = std::function<Var(Tape&, std::span<const Var> params)>;

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
double grad_check(const ScalarFn& fn, const Tensor& input, double eps = 1e-5);

/// Same measure taken over every scalar of every tensor in `store`.
double grad_check_params(const ParamsFn& fn, const ParamStore& store, double eps = 1e-5);

}  // namespace glstm::ad
