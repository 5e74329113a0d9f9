#include "grkan/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace grkan::ad {

Tensor Tensor::scalar(double v) {
    Tensor t;
    t.data_.assign(1, v);
    return t;
}

Tensor Tensor::zeros(size_t n) {
    Tensor t;
    t.dims_ = {n};
    t.data_.assign(n, 0.0);
    return t;
}

Tensor Tensor::zeros(size_t rows, size_t cols) {
    Tensor t;
    t.dims_ = {rows, cols};
    t.data_.assign(rows * cols, 0.0);
    return t;
}

Tensor Tensor::full(size_t rows, size_t cols, double v) {
    Tensor t = zeros(rows, cols);
    t.fill(v);
    return t;
}

Tensor Tensor::vec(std::vector<double> values) {
    Tensor t;
    t.dims_ = {values.size()};
    t.data_ = std::move(values);
    return t;
}

Tensor Tensor::matrix(size_t rows, size_t cols, std::vector<double> values) {
    if (values.size() != rows * cols)
        throw std::invalid_argument("Tensor::matrix: " + std::to_string(values.size()) +
                                    " values for " + std::to_string(rows) + "x" +
                                    std::to_string(cols));
    Tensor t;
    t.dims_ = {rows, cols};
    t.data_ = std::move(values);
    return t;
}

Tensor Tensor::identity(size_t n) {
    Tensor t = zeros(n, n);
    for (size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0;
    return t;
}

Tensor Tensor::zeros_like(const Tensor& o) {
    Tensor t;
    t.dims_ = o.dims_;
    t.data_.assign(o.data_.size(), 0.0);
    return t;
}

size_t Tensor::rows() const { return dims_.size() == 2 ? dims_[0] : (dims_.empty() ? 1 : dims_[0]); }

size_t Tensor::cols() const { return dims_.size() == 2 ? dims_[1] : 1; }

double Tensor::item() const {
    if (data_.size() != 1)
        throw std::invalid_argument("Tensor::item on shape " + shape_str());
    return data_[0];
}

void Tensor::fill(double v) {
    for (double& x : data_) x = v;
}

bool Tensor::all_finite() const {
    for (double x : data_)
        if (!std::isfinite(x)) return false;
    return true;
}

std::string Tensor::shape_str() const {
    if (dims_.empty()) return "[scalar]";
    if (dims_.size() == 1) return "[" + std::to_string(dims_[0]) + "]";
    return "[" + std::to_string(dims_[0]) + "x" + std::to_string(dims_[1]) + "]";
}

}  // namespace grkan::ad
