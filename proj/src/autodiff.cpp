#include "graphlstm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "graphlstm/errors.hpp"

namespace glstm::ad {

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t element_count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), values_(element_count(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
    if (element_count(shape_) != values_.size()) {
        throw DimensionError("tensor shape " + to_string(shape_) + " does not match " +
                             std::to_string(values_.size()) + " values");
    }
}

Tensor Tensor::full(Shape shape, double value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> values;
    values.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw DimensionError("ragged matrix literal");
        values.insert(values.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(values));
}

std::size_t Tensor::rows() const {
    if (rank() == 2 || rank() == 1) return shape_[0];
    throw DimensionError("rows() needs rank 1 or 2, got " + to_string(shape_));
}

std::size_t Tensor::cols() const {
    if (rank() == 2) return shape_[1];
    if (rank() == 1) return 1;
    throw DimensionError("cols() needs rank 1 or 2, got " + to_string(shape_));
}

double Tensor::item() const {
    if (values_.size() != 1) throw DimensionError("item() on tensor of shape " + to_string(shape_));
    return values_[0];
}

void Tensor::fill(double value) { std::fill(values_.begin(), values_.end(), value); }

// ---------------------------------------------------------------------------
// Var / GradSink / Gradients

const Tensor& Var::value() const {
    if (!tape_) throw std::logic_error("value() on unbound Var");
    return tape_->value(id_);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(id_); }

GradSink::GradSink(const Tape& tape) : tape_(&tape), grads_(tape.size()) {}

Tensor& GradSink::at(std::size_t id) {
    Tensor& g = grads_.at(id);
    if (g.empty()) g = Tensor::zeros(tape_->value(id).shape());
    return g;
}

bool GradSink::wants(std::size_t id) const { return tape_->requires_grad(id); }

Tensor Gradients::operator[](Var v) const {
    if (v.tape() != tape_) throw std::invalid_argument("gradient requested for a Var from another tape");
    const Tensor& g = grads_.at(v.id());
    if (g.empty()) return Tensor::zeros(v.shape());
    return g;
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::leaf(Tensor value, bool tracked) {
    nodes_.push_back(Node{std::move(value), {}, nullptr, tracked});
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<std::size_t> parents, BackwardFn backward) {
    bool needs = false;
    for (std::size_t p : parents) needs = needs || nodes_.at(p).requires_grad;
    Node node{std::move(value), std::move(parents), nullptr, needs};
    if (needs) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

void Tape::check_owned(Var v, const char* op) const {
    if (v.tape() != this) throw std::invalid_argument(std::string(op) + ": operand belongs to another tape");
}

Gradients Tape::backward(Var loss) const {
    check_owned(loss, "backward");
    const Tensor& lv = value(loss.id());
    if (lv.size() != 1) throw DimensionError("backward needs a scalar loss, got shape " + to_string(lv.shape()));

    GradSink sink(*this);
    sink.at(loss.id()).fill(1.0);
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
        const Node& node = nodes_[id];
        if (!node.backward || sink.grads_[id].empty()) continue;
        // Parents always have smaller ids, so this slot is never written by the rule.
        node.backward(*this, sink.grads_[id], sink);
    }
    Gradients result;
    result.tape_ = this;
    result.grads_ = std::move(sink.grads_);
    return result;
}

// ---------------------------------------------------------------------------
// Operations

namespace {

Tape& common_tape(Var a, Var b, const char* op) {
    if (!a.valid() || !b.valid()) throw std::invalid_argument(std::string(op) + ": unbound operand");
    if (a.tape() != b.tape()) throw std::invalid_argument(std::string(op) + ": operands on different tapes");
    return *a.tape();
}

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + to_string(t.shape()));
}

template <class F, class D>
Var unary(Var a, F f, D dfdx) {
    Tape& tape = *a.tape();
    const Tensor& x = a.value();
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
    const std::size_t ia = a.id();
    const std::size_t out_id = tape.size();
    return tape.record(std::move(y), {ia}, [ia, out_id, dfdx](const Tape& t, const Tensor& g, GradSink& sink) {
        const Tensor& xv = t.value(ia);
        const Tensor& yv = t.value(out_id);
        Tensor& ga = sink.at(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfdx(xv[i], yv[i]);
    });
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                             to_string(b.shape()));
    }
}

}  // namespace

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Var matmul(Var a, Var b) {
    Tape& tape = common_tape(a, b, "matmul");
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    require_rank2(A, "matmul");
    require_rank2(B, "matmul");
    const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    if (B.rows() != k) {
        throw DimensionError("matmul: inner dimensions differ, " + to_string(A.shape()) + " x " +
                             to_string(B.shape()));
    }
    Tensor C({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = &C[i * n];
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = A[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = &B[p * n];
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
    const std::size_t ia = a.id(), ib = b.id();
    return tape.record(std::move(C), {ia, ib}, [ia, ib, m, k, n](const Tape& t, const Tensor& g, GradSink& sink) {
        const Tensor& Av = t.value(ia);
        const Tensor& Bv = t.value(ib);
        if (sink.wants(ia)) {
            Tensor& ga = sink.at(ia);  // dA = dC * B^T
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * Bv[p * n + j];
                    ga[i * k + p] += acc;
                }
            }
        }
        if (sink.wants(ib)) {
            Tensor& gb = sink.at(ib);  // dB = A^T * dC
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = Av[i * k + p];
                    if (aip == 0.0) continue;
                    for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
                }
            }
        }
    });
}

Var concat_cols(Var a, Var b) {
    Tape& tape = common_tape(a, b, "concat_cols");
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    require_rank2(A, "concat_cols");
    require_rank2(B, "concat_cols");
    if (A.rows() != B.rows()) {
        throw DimensionError("concat_cols: row counts differ, " + to_string(A.shape()) + " vs " +
                             to_string(B.shape()));
    }
    const std::size_t n = A.rows(), p = A.cols(), q = B.cols();
    Tensor C({n, p + q});
    for (std::size_t r = 0; r < n; ++r) {
        std::copy_n(&A.values()[r * p], p, &C[r * (p + q)]);
        std::copy_n(&B.values()[r * q], q, &C[r * (p + q) + p]);
    }
    const std::size_t ia = a.id(), ib = b.id();
    return tape.record(std::move(C), {ia, ib}, [ia, ib, n, p, q](const Tape&, const Tensor& g, GradSink& sink) {
        if (sink.wants(ia)) {
            Tensor& ga = sink.at(ia);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < p; ++c) ga[r * p + c] += g[r * (p + q) + c];
        }
        if (sink.wants(ib)) {
            Tensor& gb = sink.at(ib);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < q; ++c) gb[r * q + c] += g[r * (p + q) + p + c];
        }
    });
}

Var sigmoid(Var a) {
    return unary(a, [](double x) { return sigmoid(x); }, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
    return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var abs(Var a) {
    return unary(
        a, [](double x) { return std::fabs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var scale(Var a, double factor) {
    return unary(a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

namespace {

template <class F, class DA, class DB>
Var binary(Var a, Var b, const char* op, F f, DA dfda, DB dfdb) {
    Tape& tape = common_tape(a, b, op);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    require_same_shape(A, B, op);
    Tensor C(A.shape());
    for (std::size_t i = 0; i < A.size(); ++i) C[i] = f(A[i], B[i]);
    const std::size_t ia = a.id(), ib = b.id();
    return tape.record(std::move(C), {ia, ib}, [ia, ib, dfda, dfdb](const Tape& t, const Tensor& g, GradSink& sink) {
        const Tensor& Av = t.value(ia);
        const Tensor& Bv = t.value(ib);
        if (sink.wants(ia)) {
            Tensor& ga = sink.at(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfda(Av[i], Bv[i]);
        }
        if (sink.wants(ib)) {
            Tensor& gb = sink.at(ib);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * dfdb(Av[i], Bv[i]);
        }
    });
}

}  // namespace

Var add(Var a, Var b) {
    return binary(
        a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
    return binary(
        a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
    return binary(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Var add_bias(Var a, Var bias) {
    Tape& tape = common_tape(a, bias, "add_bias");
    const Tensor& A = a.value();
    const Tensor& b = bias.value();
    require_rank2(A, "add_bias");
    if (b.rank() != 1 || b.size() != A.cols()) {
        throw DimensionError("add_bias: bias " + to_string(b.shape()) + " does not fit rows of " +
                             to_string(A.shape()));
    }
    const std::size_t n = A.rows(), d = A.cols();
    Tensor C = A;
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) C[r * d + c] += b[c];
    const std::size_t ia = a.id(), ib = bias.id();
    return tape.record(std::move(C), {ia, ib}, [ia, ib, n, d](const Tape&, const Tensor& g, GradSink& sink) {
        if (sink.wants(ia)) {
            Tensor& ga = sink.at(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (sink.wants(ib)) {
            Tensor& gb = sink.at(ib);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < d; ++c) gb[c] += g[r * d + c];
        }
    });
}

namespace {

// Views a shape as (outer, extent, inner) around `axis`.
struct AxisSplit {
    std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.extent = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

Var reduce(Var a, std::optional<std::size_t> axis, bool average) {
    if (!a.valid()) throw std::invalid_argument("reduce: unbound operand");
    Tape& tape = *a.tape();
    const Tensor& A = a.value();
    const std::size_t ia = a.id();

    if (!axis) {
        double total = 0.0;
        for (double v : A.values()) total += v;
        const double factor = average ? 1.0 / static_cast<double>(A.size()) : 1.0;
        return tape.record(Tensor::scalar(total * factor), {ia}, [ia, factor](const Tape&, const Tensor& g, GradSink& sink) {
            Tensor& ga = sink.at(ia);
            const double gv = g[0] * factor;
            for (double& v : ga.values()) v += gv;
        });
    }

    if (*axis >= A.rank()) {
        throw DimensionError("reduce: axis " + std::to_string(*axis) + " invalid for shape " + to_string(A.shape()));
    }
    const AxisSplit s = split_axis(A.shape(), *axis);
    Shape out_shape = A.shape();
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(*axis));
    Tensor out(out_shape);
    const double factor = average ? 1.0 / static_cast<double>(s.extent) : 1.0;
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t e = 0; e < s.extent; ++e)
            for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += A[(o * s.extent + e) * s.inner + i];
    for (double& v : out.values()) v *= factor;
    return tape.record(std::move(out), {ia}, [ia, s, factor](const Tape&, const Tensor& g, GradSink& sink) {
        Tensor& ga = sink.at(ia);
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t e = 0; e < s.extent; ++e)
                for (std::size_t i = 0; i < s.inner; ++i) ga[(o * s.extent + e) * s.inner + i] += g[o * s.inner + i] * factor;
    });
}

}  // namespace

Var sum(Var a, std::optional<std::size_t> axis) { return reduce(a, axis, false); }
Var mean(Var a, std::optional<std::size_t> axis) { return reduce(a, axis, true); }

Var reshape(Var a, Shape shape) {
    Tape& tape = *a.tape();
    const Tensor& A = a.value();
    if (element_count(shape) != A.size()) {
        throw DimensionError("reshape: " + to_string(A.shape()) + " to " + to_string(shape));
    }
    Tensor out(std::move(shape), std::vector<double>(A.values().begin(), A.values().end()));
    const std::size_t ia = a.id();
    return tape.record(std::move(out), {ia}, [ia](const Tape&, const Tensor& g, GradSink& sink) {
        Tensor& ga = sink.at(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

// ---------------------------------------------------------------------------
// ParamStore

std::size_t ParamStore::add(std::string name, Tensor init) {
    if (find(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    names_.push_back(std::move(name));
    tensors_.push_back(std::move(init));
    return tensors_.size() - 1;
}

std::optional<std::size_t> ParamStore::find(const std::string& name) const {
    const auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - names_.begin());
}

std::size_t ParamStore::scalar_count() const {
    std::size_t total = 0;
    for (const Tensor& t : tensors_) total += t.size();
    return total;
}

std::vector<Var> ParamStore::bind(Tape& tape) const {
    std::vector<Var> vars;
    vars.reserve(tensors_.size());
    for (const Tensor& t : tensors_) vars.push_back(tape.leaf(t, true));
    return vars;
}

// ---------------------------------------------------------------------------
// Finite differences

namespace {

double checked_eval(const Var& out) {
    const double v = out.value().item();
    if (!std::isfinite(v)) throw NumericError("grad_check: function produced a non-finite value");
    return v;
}

double relative_error(double analytic, double numeric) {
    return std::fabs(analytic - numeric) / std::max(1.0, std::fabs(analytic));
}

}  // namespace

double grad_check(const ScalarFn& fn, const Tensor& input, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");
    Tensor analytic;
    {
        Tape tape;
        Var x = tape.leaf(input);
        Var y = fn(tape, x);
        checked_eval(y);
        analytic = tape.backward(y)[x];
    }
    auto eval_at = [&](const Tensor& point) {
        Tape tape;
        return checked_eval(fn(tape, tape.leaf(point)));
    };
    double worst = 0.0;
    Tensor probe = input;
    for (std::size_t i = 0; i < input.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + eps;
        const double up = eval_at(probe);
        probe[i] = orig - eps;
        const double down = eval_at(probe);
        probe[i] = orig;
        worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * eps)));
    }
    return worst;
}

double grad_check_params(const ParamsFn& fn, const ParamStore& store, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");
    std::vector<Tensor> analytic;
    {
        Tape tape;
        const std::vector<Var> vars = store.bind(tape);
        Var y = fn(tape, vars);
        checked_eval(y);
        const Gradients grads = tape.backward(y);
        for (const Var& v : vars) analytic.push_back(grads[v]);
    }
    ParamStore probe = store;
    auto eval_at = [&]() {
        Tape tape;
        const std::vector<Var> vars = probe.bind(tape);
        return checked_eval(fn(tape, vars));
    };
    double worst = 0.0;
    for (std::size_t p = 0; p < probe.size(); ++p) {
        Tensor& t = probe[p];
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double orig = t[i];
            t[i] = orig + eps;
            const double up = eval_at();
            t[i] = orig - eps;
            const double down = eval_at();
            t[i] = orig;
            worst = std::max(worst, relative_error(analytic[p][i], (up - down) / (2.0 * eps)));
        }
    }
    return worst;
}

}  // namespace glstm::ad
