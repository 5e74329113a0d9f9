#include "grkan/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace grkan::ad {

namespace {

thread_local Tape* tls_active = nullptr;

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() +
                                " vs " + b.shape_str());
}

void require_rank2(const char* op, const Tensor& t) {
    if (t.rank() != 2)
        throw std::invalid_argument(std::string(op) + ": expected a matrix, got " +
                                    t.shape_str());
}

// Elementwise binary op. Shapes must match, or either operand may be a
// scalar (the only broadcast supported). dx/dy receive (a, b, out).
template <class F, class Dx, class Dy>
Var ew2(const char* name, const Var& va, const Var& vb, F f, Dx dx, Dy dy) {
    const Tensor& a = va.value();
    const Tensor& b = vb.value();
    const bool as = a.is_scalar();
    const bool bs = b.is_scalar();
    if (!(a.same_shape(b) || as || bs)) shape_error(name, a, b);
    Tensor out = Tensor::zeros_like(as ? b : a);
    const size_t n = out.size();
    for (size_t i = 0; i < n; ++i) out[i] = f(a[as ? 0 : i], b[bs ? 0 : i]);
    return make_op(name, std::move(out), {va, vb}, [as, bs, dx, dy](Node& self) {
        Node& A = *self.inputs[0];
        Node& B = *self.inputs[1];
        const bool ga = A.requires_grad;
        const bool gb = B.requires_grad;
        const size_t n = self.value.size();
        for (size_t i = 0; i < n; ++i) {
            const double g = self.grad[i];
            const double xa = A.value[as ? 0 : i];
            const double xb = B.value[bs ? 0 : i];
            if (ga) A.grad[as ? 0 : i] += dx(xa, xb, self.value[i]) * g;
            if (gb) B.grad[bs ? 0 : i] += dy(xa, xb, self.value[i]) * g;
        }
    });
}

// Elementwise unary op. d receives (a, out).
template <class F, class D>
Var ew1(const char* name, const Var& va, F f, D d) {
    const Tensor& a = va.value();
    Tensor out = Tensor::zeros_like(a);
    const size_t n = out.size();
    for (size_t i = 0; i < n; ++i) out[i] = f(a[i]);
    return make_op(name, std::move(out), {va}, [d](Node& self) {
        Node& A = *self.inputs[0];
        if (!A.requires_grad) return;
        const size_t n = self.value.size();
        for (size_t i = 0; i < n; ++i)
            A.grad[i] += d(A.value[i], self.value[i]) * self.grad[i];
    });
}

}  // namespace

Var::Var(Tensor value, bool requires_grad) : n_(std::make_shared<Node>()) {
    n_->grad = Tensor::zeros_like(value);
    n_->value = std::move(value);
    n_->requires_grad = requires_grad;
}

Tape::Tape() : prev_(tls_active) { tls_active = this; }

Tape::~Tape() { tls_active = prev_; }

Tape* Tape::active() noexcept { return tls_active; }

NoGradGuard::NoGradGuard() : prev_(tls_active) { tls_active = nullptr; }

NoGradGuard::~NoGradGuard() { tls_active = prev_; }

void Tape::backward(const Var& root) {
    if (!root.valid()) throw std::invalid_argument("backward: empty root");
    if (!root.value().is_scalar())
        throw std::invalid_argument("backward: root must be scalar, got " +
                                    root.value().shape_str());
    // Interior scratch gradients are re-zeroed after the first sweep so that
    // repeated backward calls accumulate only into leaves.
    if (sweeps_ > 0)
        for (auto& n : nodes_) n->grad.fill(0.0);
    ++sweeps_;

    const Node* target = root.node().get();
    size_t pos = nodes_.size();
    for (size_t i = nodes_.size(); i-- > 0;) {
        if (nodes_[i].get() == target) {
            pos = i;
            break;
        }
    }
    if (pos == nodes_.size()) {
        if (root.node()->pull)
            throw std::runtime_error("backward: root was not recorded on this tape");
        // Leaf root: d(root)/d(root) = 1 and there is nothing to propagate.
        if (root.requires_grad()) root.node()->grad[0] += 1.0;
        return;
    }
    nodes_[pos]->grad[0] += 1.0;
    for (size_t i = pos + 1; i-- > 0;) {
        Node& n = *nodes_[i];
        if (n.pull && n.requires_grad) n.pull(n);
    }
}

Var make_op(const char* name, Tensor value, std::vector<Var> inputs,
            std::function<void(Node&)> pull) {
    auto n = std::make_shared<Node>();
    n->grad = Tensor::zeros_like(value);
    n->value = std::move(value);
    n->op = name;
    for (const Var& in : inputs)
        if (in.requires_grad()) n->requires_grad = true;
    Tape* tape = Tape::active();
    if (tape && n->requires_grad) {
        n->inputs.reserve(inputs.size());
        for (Var& in : inputs) n->inputs.push_back(in.node());
        n->pull = std::move(pull);
        tape->record(n);
    }
    return Var(std::move(n));
}

Var constant(double v) { return Var(Tensor::scalar(v), false); }

Var constant(Tensor t) { return Var(std::move(t), false); }

Var add(const Var& a, const Var& b) {
    return ew2(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double, double, double) { return 1.0; },
        [](double, double, double) { return 1.0; });
}

Var sub(const Var& a, const Var& b) {
    return ew2(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double, double) { return 1.0; },
        [](double, double, double) { return -1.0; });
}

Var mul(const Var& a, const Var& b) {
    return ew2(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double, double y, double) { return y; },
        [](double x, double, double) { return x; });
}

Var div(const Var& a, const Var& b) {
    return ew2(
        "div", a, b, [](double x, double y) { return x / y; },
        [](double, double y, double) { return 1.0 / y; },
        [](double, double y, double out) { return -out / y; });
}

Var neg(const Var& a) {
    return ew1(
        "neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var pow(const Var& a, double e) {
    return ew1(
        "pow", a, [e](double x) { return std::pow(x, e); },
        [e](double x, double) { return e * std::pow(x, e - 1.0); });
}

Var exp(const Var& a) {
    return ew1(
        "exp", a, [](double x) { return std::exp(x); },
        [](double, double y) { return y; });
}

Var tanh(const Var& a) {
    return ew1(
        "tanh", a, [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; });
}

Var abs(const Var& a) {
    // Subgradient convention: d|x|/dx = 0 at x == 0.
    return ew1(
        "abs", a, [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var maximum(const Var& a, double floor) {
    // Gradient flows only where the input is strictly above the floor.
    return ew1(
        "maximum", a, [floor](double x) { return x > floor ? x : floor; },
        [floor](double x, double) { return x > floor ? 1.0 : 0.0; });
}

Var matmul(const Var& va, const Var& vb) {
    const Tensor& a = va.value();
    const Tensor& b = vb.value();
    require_rank2("matmul", a);
    require_rank2("matmul", b);
    if (a.cols() != b.rows()) shape_error("matmul", a, b);
    const size_t n = a.rows(), m = a.cols(), p = b.cols();
    Tensor out = Tensor::zeros(n, p);
    for (size_t i = 0; i < n; ++i) {
        double* oi = out.ptr() + i * p;
        const double* ai = a.ptr() + i * m;
        for (size_t k = 0; k < m; ++k) {
            const double aik = ai[k];
            const double* bk = b.ptr() + k * p;
            for (size_t j = 0; j < p; ++j) oi[j] += aik * bk[j];
        }
    }
    return make_op("matmul", std::move(out), {va, vb}, [n, m, p](Node& self) {
        Node& A = *self.inputs[0];
        Node& B = *self.inputs[1];
        const double* g = self.grad.ptr();
        if (A.requires_grad) {  // dA = G * B^T
            const double* b = B.value.ptr();
            for (size_t i = 0; i < n; ++i) {
                const double* gi = g + i * p;
                double* dai = A.grad.ptr() + i * m;
                for (size_t k = 0; k < m; ++k) {
                    const double* bk = b + k * p;
                    double s = 0.0;
                    for (size_t j = 0; j < p; ++j) s += gi[j] * bk[j];
                    dai[k] += s;
                }
            }
        }
        if (B.requires_grad) {  // dB = A^T * G
            const double* a = A.value.ptr();
            for (size_t i = 0; i < n; ++i) {
                const double* ai = a + i * m;
                const double* gi = g + i * p;
                for (size_t k = 0; k < m; ++k) {
                    const double aik = ai[k];
                    double* dbk = B.grad.ptr() + k * p;
                    for (size_t j = 0; j < p; ++j) dbk[j] += aik * gi[j];
                }
            }
        }
    });
}

Var sum(const Var& va) {
    double s = 0.0;
    for (size_t i = 0; i < va.value().size(); ++i) s += va.value()[i];
    return make_op("sum", Tensor::scalar(s), {va}, [](Node& self) {
        Node& A = *self.inputs[0];
        if (!A.requires_grad) return;
        const double g = self.grad[0];
        for (size_t i = 0; i < A.grad.size(); ++i) A.grad[i] += g;
    });
}

Var mean(const Var& va) {
    if (va.value().empty()) throw std::invalid_argument("mean: empty input");
    double s = 0.0;
    for (size_t i = 0; i < va.value().size(); ++i) s += va.value()[i];
    const double inv_n = 1.0 / static_cast<double>(va.value().size());
    return make_op("mean", Tensor::scalar(s * inv_n), {va}, [inv_n](Node& self) {
        Node& A = *self.inputs[0];
        if (!A.requires_grad) return;
        const double g = self.grad[0] * inv_n;
        for (size_t i = 0; i < A.grad.size(); ++i) A.grad[i] += g;
    });
}

Var reshape(const Var& va, size_t rows, size_t cols) {
    const Tensor& a = va.value();
    if (a.size() != rows * cols)
        throw std::invalid_argument("reshape: " + a.shape_str() + " to " +
                                    std::to_string(rows) + "x" + std::to_string(cols));
    Tensor out = Tensor::matrix(rows, cols, a.data());
    return make_op("reshape", std::move(out), {va}, [](Node& self) {
        Node& A = *self.inputs[0];
        if (!A.requires_grad) return;
        for (size_t i = 0; i < A.grad.size(); ++i) A.grad[i] += self.grad[i];
    });
}

Var flatten(const Var& va) {
    Tensor out = Tensor::vec(va.value().data());
    return make_op("flatten", std::move(out), {va}, [](Node& self) {
        Node& A = *self.inputs[0];
        if (!A.requires_grad) return;
        for (size_t i = 0; i < A.grad.size(); ++i) A.grad[i] += self.grad[i];
    });
}

Var segment(const Var& vv, size_t offset, size_t len) {
    const Tensor& v = vv.value();
    if (v.rank() != 1)
        throw std::invalid_argument("segment: expected a vector, got " + v.shape_str());
    if (offset + len > v.size())
        throw std::invalid_argument("segment: [" + std::to_string(offset) + ", " +
                                    std::to_string(offset + len) + ") out of range for " +
                                    v.shape_str());
    Tensor out = Tensor::zeros(len);
    for (size_t i = 0; i < len; ++i) out[i] = v[offset + i];
    return make_op("segment", std::move(out), {vv}, [offset, len](Node& self) {
        Node& A = *self.inputs[0];
        if (!A.requires_grad) return;
        for (size_t i = 0; i < len; ++i) A.grad[offset + i] += self.grad[i];
    });
}

Var slice_cols(const Var& vm, size_t c0, size_t c1) {
    const Tensor& m = vm.value();
    require_rank2("slice_cols", m);
    if (c0 >= c1 || c1 > m.cols())
        throw std::invalid_argument("slice_cols: [" + std::to_string(c0) + ", " +
                                    std::to_string(c1) + ") out of range for " +
                                    m.shape_str());
    const size_t rows = m.rows(), w = c1 - c0;
    Tensor out = Tensor::zeros(rows, w);
    for (size_t r = 0; r < rows; ++r)
        for (size_t c = 0; c < w; ++c) out.at(r, c) = m.at(r, c0 + c);
    return make_op("slice_cols", std::move(out), {vm}, [c0, w](Node& self) {
        Node& A = *self.inputs[0];
        if (!A.requires_grad) return;
        const size_t rows = self.value.rows();
        for (size_t r = 0; r < rows; ++r)
            for (size_t c = 0; c < w; ++c) A.grad.at(r, c0 + c) += self.grad.at(r, c);
    });
}

Var slice_rows(const Var& vm, size_t r0, size_t r1) {
    const Tensor& m = vm.value();
    require_rank2("slice_rows", m);
    if (r0 >= r1 || r1 > m.rows())
        throw std::invalid_argument("slice_rows: [" + std::to_string(r0) + ", " +
                                    std::to_string(r1) + ") out of range for " +
                                    m.shape_str());
    const size_t cols = m.cols(), h = r1 - r0;
    Tensor out = Tensor::zeros(h, cols);
    for (size_t i = 0; i < h * cols; ++i) out[i] = m[r0 * cols + i];
    return make_op("slice_rows", std::move(out), {vm}, [r0, cols](Node& self) {
        Node& A = *self.inputs[0];
        if (!A.requires_grad) return;
        const size_t n = self.value.size();
        for (size_t i = 0; i < n; ++i) A.grad[r0 * cols + i] += self.grad[i];
    });
}

Var hcat(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("hcat: no inputs");
    const size_t rows = parts[0].value().rows();
    size_t total = 0;
    for (const Var& p : parts) {
        require_rank2("hcat", p.value());
        if (p.value().rows() != rows) shape_error("hcat", parts[0].value(), p.value());
        total += p.value().cols();
    }
    Tensor out = Tensor::zeros(rows, total);
    size_t c0 = 0;
    for (const Var& p : parts) {
        const size_t w = p.value().cols();
        for (size_t r = 0; r < rows; ++r)
            for (size_t c = 0; c < w; ++c) out.at(r, c0 + c) = p.value().at(r, c);
        c0 += w;
    }
    std::vector<Var> inputs(parts.begin(), parts.end());
    return make_op("hcat", std::move(out), std::move(inputs), [](Node& self) {
        const size_t rows = self.value.rows();
        size_t c0 = 0;
        for (auto& in : self.inputs) {
            const size_t w = in->value.cols();
            if (in->requires_grad)
                for (size_t r = 0; r < rows; ++r)
                    for (size_t c = 0; c < w; ++c)
                        in->grad.at(r, c) += self.grad.at(r, c0 + c);
            c0 += w;
        }
    });
}

Var add_rowvec(const Var& vm, const Var& vv) {
    const Tensor& m = vm.value();
    const Tensor& v = vv.value();
    require_rank2("add_rowvec", m);
    if (v.rank() != 1 || v.size() != m.cols()) shape_error("add_rowvec", m, v);
    Tensor out = m;
    const size_t rows = m.rows(), cols = m.cols();
    for (size_t r = 0; r < rows; ++r)
        for (size_t c = 0; c < cols; ++c) out.at(r, c) += v[c];
    return make_op("add_rowvec", std::move(out), {vm, vv}, [](Node& self) {
        Node& M = *self.inputs[0];
        Node& V = *self.inputs[1];
        const size_t rows = self.value.rows(), cols = self.value.cols();
        if (M.requires_grad)
            for (size_t i = 0; i < rows * cols; ++i) M.grad[i] += self.grad[i];
        if (V.requires_grad)
            for (size_t r = 0; r < rows; ++r)
                for (size_t c = 0; c < cols; ++c) V.grad[c] += self.grad.at(r, c);
    });
}

Var mul_rowvec(const Var& vm, const Var& vv) {
    const Tensor& m = vm.value();
    const Tensor& v = vv.value();
    require_rank2("mul_rowvec", m);
    if (v.rank() != 1 || v.size() != m.cols()) shape_error("mul_rowvec", m, v);
    Tensor out = m;
    const size_t rows = m.rows(), cols = m.cols();
    for (size_t r = 0; r < rows; ++r)
        for (size_t c = 0; c < cols; ++c) out.at(r, c) *= v[c];
    return make_op("mul_rowvec", std::move(out), {vm, vv}, [](Node& self) {
        Node& M = *self.inputs[0];
        Node& V = *self.inputs[1];
        const size_t rows = self.value.rows(), cols = self.value.cols();
        for (size_t r = 0; r < rows; ++r)
            for (size_t c = 0; c < cols; ++c) {
                const double g = self.grad.at(r, c);
                if (M.requires_grad) M.grad.at(r, c) += g * V.value[c];
                if (V.requires_grad) V.grad[c] += g * M.value.at(r, c);
            }
    });
}

Var pad_rows(const Var& vm, size_t top, size_t bottom) {
    const Tensor& m = vm.value();
    require_rank2("pad_rows", m);
    const size_t rows = m.rows(), cols = m.cols();
    Tensor out = Tensor::zeros(rows + top + bottom, cols);
    for (size_t i = 0; i < rows * cols; ++i) out[top * cols + i] = m[i];
    return make_op("pad_rows", std::move(out), {vm}, [top, cols, rows](Node& self) {
        Node& A = *self.inputs[0];
        if (!A.requires_grad) return;
        for (size_t i = 0; i < rows * cols; ++i) A.grad[i] += self.grad[top * cols + i];
    });
}

Var crop_rows(const Var& vm, size_t top, size_t bottom) {
    const Tensor& m = vm.value();
    require_rank2("crop_rows", m);
    if (top + bottom >= m.rows())
        throw std::invalid_argument("crop_rows: removing " + std::to_string(top + bottom) +
                                    " rows from " + m.shape_str());
    const size_t rows = m.rows() - top - bottom, cols = m.cols();
    Tensor out = Tensor::zeros(rows, cols);
    for (size_t i = 0; i < rows * cols; ++i) out[i] = m[top * cols + i];
    return make_op("crop_rows", std::move(out), {vm}, [top, cols](Node& self) {
        Node& A = *self.inputs[0];
        if (!A.requires_grad) return;
        const size_t n = self.value.size();
        for (size_t i = 0; i < n; ++i) A.grad[top * cols + i] += self.grad[i];
    });
}

double finite_diff_check(const std::function<Var(const Var&)>& f, const Tensor& x0,
                         double eps) {
    if (x0.rank() != 1)
        throw std::invalid_argument("finite_diff_check: x0 must be a vector, got " +
                                    x0.shape_str());
    Tensor analytic;
    {
        Tape tape;
        Var x(x0, true);
        Var y = f(x);
        if (!y.value().is_scalar())
            throw std::invalid_argument("finite_diff_check: f must return a scalar, got " +
                                        y.value().shape_str());
        if (!y.value().all_finite())
            throw std::runtime_error("finite_diff_check: f(x0) is not finite");
        tape.backward(y);
        analytic = x.grad();
    }
    auto eval = [&](size_t i, double xi) {
        NoGradGuard no_grad;
        Tensor xp = x0;
        xp[i] = xi;
        Var y = f(Var(std::move(xp), false));
        if (!y.value().is_scalar() || !y.value().all_finite())
            throw std::runtime_error("finite_diff_check: perturbed f(x) is not finite");
        return y.value().item();
    };
    double worst = 0.0;
    for (size_t i = 0; i < x0.size(); ++i) {
        const double central = (eval(i, x0[i] + eps) - eval(i, x0[i] - eps)) / (2.0 * eps);
        const double err = std::abs(analytic[i] - central) / std::max(1.0, std::abs(central));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace grkan::ad
