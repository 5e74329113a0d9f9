#pragma once

#include <vector>

#include "grkan/autodiff.hpp"

namespace grkan {

// Uniform B-spline knot vector over [lo, hi] with `order` extra knots beyond
// each end so every interior point is fully supported.
struct KnotGrid {
    double lo = -1.0;
    double hi = 1.0;
    int grid_size = 5;  // interior intervals
    int order = 3;      // spline degree
    std::vector<double> knots;  // grid_size + 2*order + 1, uniformly spaced

    int basis_count() const { return grid_size + order; }
    double spacing() const { return (hi - lo) / grid_size; }
};

// lo < hi, grid_size >= 1, order >= 0; throws std::invalid_argument otherwise.
KnotGrid make_knot_grid(double lo, double hi, int grid_size, int order);

// Cox-de Boor evaluation of all basis_count() functions at x. Out-of-domain x
// is evaluated as-is (values decay to 0 outside the extended knot span).
std::vector<double> bspline_basis(const KnotGrid& grid, double x);

// Basis values and their derivatives w.r.t. x at one point.
void bspline_basis_and_deriv(const KnotGrid& grid, double x,
                             std::vector<double>& basis, std::vector<double>& deriv);

// Autodiff op: x is rank-1 (length L); result is L x basis_count() with exact
// analytic derivative w.r.t. x on the backward pass.
ad::Var bspline_basis_op(const KnotGrid& grid, const ad::Var& x);

}  // namespace grkan
