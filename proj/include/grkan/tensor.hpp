#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace grkan::ad {

// Dense value with rank 0 (scalar), 1 (vector) or 2 (row-major matrix).
// 64-bit floats throughout.
class Tensor {
public:
    Tensor() = default;

    static Tensor scalar(double v);
    static Tensor zeros(size_t n);
    static Tensor zeros(size_t rows, size_t cols);
    static Tensor full(size_t rows, size_t cols, double v);
    static Tensor vec(std::vector<double> values);
    static Tensor matrix(size_t rows, size_t cols, std::vector<double> values);
    static Tensor identity(size_t n);
    static Tensor zeros_like(const Tensor& t);

    size_t rank() const { return dims_.size(); }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }
    bool is_scalar() const { return dims_.empty() && data_.size() == 1; }
    size_t rows() const;
    size_t cols() const;

    double& operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }
    double& at(size_t r, size_t c) { return data_[r * cols() + c]; }
    double at(size_t r, size_t c) const { return data_[r * cols() + c]; }
    double item() const;

    double* ptr() { return data_.data(); }
    const double* ptr() const { return data_.data(); }
    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }
    const std::vector<size_t>& dims() const { return dims_; }

    void fill(double v);
    bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }
    bool all_finite() const;
    std::string shape_str() const;  // e.g. "[500x12]", "[8]", "[scalar]"

    // Exact comparison (shape and bit-for-bit values); used by determinism tests.
    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.dims_ == b.dims_ && a.data_ == b.data_;
    }

private:
    std::vector<size_t> dims_;
    std::vector<double> data_;
};

}  // namespace grkan::ad
