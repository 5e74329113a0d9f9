#include "grkan/layers.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace grkan {

using ad::Tensor;
using ad::Var;

Linear Linear::init(size_t in, size_t out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Tensor w = Tensor::zeros(in, out);
    for (size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
    Tensor b = Tensor::zeros(out);
    for (size_t i = 0; i < out; ++i) b[i] = rng.uniform(-bound, bound);
    return Linear{Var(std::move(w), true), Var(std::move(b), true)};
}

Linear Linear::init_normal(size_t in, size_t out, double std, Rng& rng) {
    Tensor w = Tensor::zeros(in, out);
    for (size_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, std);
    return Linear{Var(std::move(w), true), Var(Tensor::zeros(out), true)};
}

Var Linear::forward(const Var& x) const {
    return ad::add_rowvec(ad::matmul(x, W), b);
}

KanLayer KanLayer::init(size_t in, size_t out, const KnotGrid& grid, Rng& rng) {
    const size_t nb = static_cast<size_t>(grid.basis_count());
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    Tensor w1 = Tensor::zeros(in, out);
    for (size_t i = 0; i < w1.size(); ++i) w1[i] = rng.uniform(-bound, bound);
    Tensor coeffs = Tensor::zeros(in * nb, out);
    const double coeff_std = 0.1 / static_cast<double>(nb);
    for (size_t i = 0; i < coeffs.size(); ++i) coeffs[i] = rng.normal(0.0, coeff_std);
    KanLayer layer;
    layer.grid = grid;
    layer.base_w = Var(std::move(w1), true);
    layer.spline_scale = Var(Tensor::full(in, out, 1.0), true);
    layer.coeffs = Var(std::move(coeffs), true);
    return layer;
}

Var KanLayer::forward(const Var& x) const {
    const size_t in = in_dim();
    if (x.value().rank() != 2 || x.value().cols() != in)
        throw std::invalid_argument("KanLayer::forward: input " + x.value().shape_str() +
                                    " does not match in_dim " + std::to_string(in));
    const size_t nb = static_cast<size_t>(grid.basis_count());
    Var out = ad::matmul(fixed_act(Act::swish, x), base_w);
    for (size_t i = 0; i < in; ++i) {
        Var basis = bspline_basis_op(grid, ad::flatten(ad::slice_cols(x, i, i + 1)));
        Var spline = ad::matmul(basis, ad::slice_rows(coeffs, i * nb, (i + 1) * nb));
        Var scale_i = ad::flatten(ad::slice_rows(spline_scale, i, i + 1));
        out = out + ad::mul_rowvec(spline, scale_i);
    }
    return out;
}

size_t KanLayer::param_count() const {
    return base_w.size() + spline_scale.size() + coeffs.size();
}

double kan_edge_eval(const KanLayer& layer, size_t i, size_t j, double x) {
    const auto basis = bspline_basis(layer.grid, x);
    const size_t nb = basis.size();
    double spline = 0.0;
    for (size_t b = 0; b < nb; ++b)
        spline += layer.coeffs.value().at(i * nb + b, j) * basis[b];
    return layer.base_w.value().at(i, j) * fixed_eval(Act::swish, x) +
           layer.spline_scale.value().at(i, j) * spline;
}

GrKanLayer GrKanLayer::init_variance_preserving(size_t in, size_t out, size_t groups,
                                                Act target, Rng& rng) {
    if (groups == 0 || in % groups != 0)
        throw std::invalid_argument("GrKanLayer: " + std::to_string(groups) +
                                    " groups do not divide " + std::to_string(in) +
                                    " channels");
    const RationalFit& fit = rational_fit_cached(target, -3.0, 3.0, 1000);
    const double alpha2 = rational_second_moment(fit.coeffs);
    if (alpha2 < 1e-8)
        throw std::runtime_error("GrKanLayer: degenerate activation gain " +
                                 std::to_string(alpha2) + " for target " +
                                 act_name(target));
    GrKanLayer layer;
    layer.groups = groups;
    for (size_t g = 0; g < groups; ++g) {
        layer.nums.push_back(Var(Tensor::vec(fit.coeffs.num), true));
        layer.dens.push_back(Var(Tensor::vec(fit.coeffs.den), true));
    }
    const double std = 1.0 / std::sqrt(alpha2 * static_cast<double>(in));
    layer.lin = Linear::init_normal(in, out, std, rng);
    return layer;
}

Var GrKanLayer::forward(const Var& x) const {
    if (x.value().rank() != 2 || x.value().cols() != in_dim())
        throw std::invalid_argument("GrKanLayer::forward: input " + x.value().shape_str() +
                                    " does not match in_dim " + std::to_string(in_dim()));
    return lin.forward(grouped_rational(x, nums, dens));
}

size_t GrKanLayer::param_count() const {
    size_t n = lin.param_count();
    for (const Var& v : nums) n += v.size();
    for (const Var& v : dens) n += v.size();
    return n;
}

std::vector<Var> GrKanLayer::params() const {
    std::vector<Var> ps;
    for (size_t g = 0; g < groups; ++g) {
        ps.push_back(nums[g]);
        ps.push_back(dens[g]);
    }
    ps.push_back(lin.W);
    ps.push_back(lin.b);
    return ps;
}

}  // namespace grkan
