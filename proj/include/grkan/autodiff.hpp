#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "grkan/tensor.hpp"

namespace grkan::ad {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One value in the computation graph. A node without a producer record is a
// leaf (parameter or input). Gradients accumulate additively; the training
// loop is responsible for zeroing parameter gradients between steps.
struct Node {
    Tensor value;
    Tensor grad;  // same shape as value at all times
    std::vector<NodePtr> inputs;
    std::function<void(Node&)> pull;  // pushes this node's grad into inputs; null for leaves
    bool requires_grad = false;
    const char* op = "leaf";
};

// Handle to a Node. Cheap to copy; copies alias the same node.
class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);

    bool valid() const { return static_cast<bool>(n_); }
    const Tensor& value() const { return n_->value; }
    Tensor& value() { return n_->value; }
    const Tensor& grad() const { return n_->grad; }
    Tensor& grad() { return n_->grad; }
    bool requires_grad() const { return n_ && n_->requires_grad; }
    void zero_grad() { n_->grad.fill(0.0); }
    const NodePtr& node() const { return n_; }

    size_t size() const { return n_->value.size(); }
    size_t rows() const { return n_->value.rows(); }
    size_t cols() const { return n_->value.cols(); }

private:
    friend Var make_op(const char*, Tensor, std::vector<Var>, std::function<void(Node&)>);
    explicit Var(NodePtr n) : n_(std::move(n)) {}
    NodePtr n_;
};

// Records interior nodes in creation order (a valid topological order) while
// alive on the current thread. One tape per training step; a tape and its
// nodes stay confined to the thread that created them.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active() noexcept;

    // Reverse sweep from a scalar root. Every reachable leaf with
    // requires_grad receives += d(root)/d(leaf). Repeated sweeps without
    // zeroing leaf grads accumulate (interior scratch is re-zeroed).
    void backward(const Var& root);

    size_t node_count() const { return nodes_.size(); }
    void record(NodePtr n) { nodes_.push_back(std::move(n)); }

private:
    std::vector<NodePtr> nodes_;
    Tape* prev_ = nullptr;
    int sweeps_ = 0;
};

// Constructs an op node. If a tape is active and any input requires grad, the
// node is recorded with its producer record; otherwise it is a plain value.
Var make_op(const char* name, Tensor value, std::vector<Var> inputs,
            std::function<void(Node&)> pull);

// Suspends recording on the current thread while in scope (evaluation-only
// forward passes).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    Tape* prev_;
};

Var constant(double v);
Var constant(Tensor t);

// ---- elementwise (equal shapes, or either side scalar) ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var pow(const Var& a, double exponent);
Var exp(const Var& a);
Var tanh(const Var& a);
Var abs(const Var& a);                     // subgradient 0 at 0
Var maximum(const Var& a, double floor);   // elementwise max(a, floor)

// ---- linear algebra / shape ----
Var matmul(const Var& a, const Var& b);    // [n x m] * [m x p]
Var sum(const Var& a);                     // -> scalar
Var mean(const Var& a);                    // -> scalar
Var reshape(const Var& a, size_t rows, size_t cols);
Var flatten(const Var& a);                 // -> rank-1
Var segment(const Var& v, size_t offset, size_t len);   // rank-1 slice
Var slice_cols(const Var& m, size_t c0, size_t c1);
Var slice_rows(const Var& m, size_t r0, size_t r1);
Var hcat(const std::vector<Var>& parts);   // equal row counts
Var add_rowvec(const Var& m, const Var& v);  // m[r,:] + v
Var mul_rowvec(const Var& m, const Var& v);  // m[r,:] * v
Var pad_rows(const Var& m, size_t top, size_t bottom);   // zero rows
Var crop_rows(const Var& m, size_t top, size_t bottom);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator+(const Var& a, double b) { return add(a, constant(b)); }
inline Var operator+(double a, const Var& b) { return add(constant(a), b); }
inline Var operator-(const Var& a, double b) { return sub(a, constant(b)); }
inline Var operator-(double a, const Var& b) { return sub(constant(a), b); }
inline Var operator*(const Var& a, double b) { return mul(a, constant(b)); }
inline Var operator*(double a, const Var& b) { return mul(constant(a), b); }
inline Var operator/(const Var& a, double b) { return div(a, constant(b)); }
inline Var operator/(double a, const Var& b) { return div(constant(a), b); }

// Gradient oracle. `f` maps a rank-1 parameter leaf to a scalar expression;
// the analytic gradient (reverse sweep) is compared against central
// differences per coordinate. Returns max over coordinates of
// |analytic - central| / max(1, |central|). Throws if f is non-finite.
double finite_diff_check(const std::function<Var(const Var&)>& f, const Tensor& x0,
                         double eps = 1e-5);

}  // namespace grkan::ad
