#include "grkan/spline.hpp"

#include <stdexcept>
#include <string>

namespace grkan {

KnotGrid make_knot_grid(double lo, double hi, int grid_size, int order) {
    if (lo >= hi)
        throw std::invalid_argument("make_knot_grid: lo " + std::to_string(lo) +
                                    " must be below hi " + std::to_string(hi));
    if (grid_size < 1)
        throw std::invalid_argument("make_knot_grid: grid_size must be >= 1, got " +
                                    std::to_string(grid_size));
    if (order < 0)
        throw std::invalid_argument("make_knot_grid: order must be >= 0, got " +
                                    std::to_string(order));
    KnotGrid g;
    g.lo = lo;
    g.hi = hi;
    g.grid_size = grid_size;
    g.order = order;
    const double h = (hi - lo) / grid_size;
    const int count = grid_size + 2 * order + 1;
    g.knots.resize(count);
    for (int i = 0; i < count; ++i) g.knots[i] = lo + (i - order) * h;
    return g;
}

namespace {

// Degree-0 seeds: half-open intervals, except the topmost knot which closes
// the last interval (keeps degenerate degree-0 grids usable at x == hi).
void degree0_row(const KnotGrid& g, double x, std::vector<double>& n) {
    const auto& t = g.knots;
    const size_t spans = t.size() - 1;
    n.assign(spans, 0.0);
    for (size_t i = 0; i < spans; ++i) {
        const bool inside = (t[i] <= x && x < t[i + 1]) ||
                            (x == t.back() && t[i + 1] == t.back());
        if (inside) n[i] = 1.0;
    }
}

void raise_degree(const KnotGrid& g, double x, std::vector<double>& n, int d) {
    const auto& t = g.knots;
    const size_t rows = t.size() - 1 - d;
    for (size_t i = 0; i < rows; ++i) {
        const double dl = t[i + d] - t[i];
        const double dr = t[i + d + 1] - t[i + 1];
        const double left = dl > 0.0 ? (x - t[i]) / dl * n[i] : 0.0;
        const double right = dr > 0.0 ? (t[i + d + 1] - x) / dr * n[i + 1] : 0.0;
        n[i] = left + right;
    }
}

}  // namespace

std::vector<double> bspline_basis(const KnotGrid& grid, double x) {
    std::vector<double> n;
    degree0_row(grid, x, n);
    for (int d = 1; d <= grid.order; ++d) raise_degree(grid, x, n, d);
    n.resize(grid.basis_count());
    return n;
}

void bspline_basis_and_deriv(const KnotGrid& grid, double x,
                             std::vector<double>& basis, std::vector<double>& deriv) {
    const auto& t = grid.knots;
    const int k = grid.order;
    const int nb = grid.basis_count();
    std::vector<double> n;
    degree0_row(grid, x, n);
    for (int d = 1; d < k; ++d) raise_degree(grid, x, n, d);
    // n now holds the degree k-1 row; the classic derivative identity uses it
    // directly: dN_i^k/dx = k * (N_i^{k-1}/(t_{i+k}-t_i) - N_{i+1}^{k-1}/(t_{i+k+1}-t_{i+1})).
    deriv.assign(nb, 0.0);
    if (k > 0) {
        for (int i = 0; i < nb; ++i) {
            const double dl = t[i + k] - t[i];
            const double dr = t[i + k + 1] - t[i + 1];
            double v = 0.0;
            if (dl > 0.0) v += n[i] / dl;
            if (dr > 0.0) v -= n[i + 1] / dr;
            deriv[i] = k * v;
        }
        raise_degree(grid, x, n, k);
    }
    n.resize(nb);
    basis = std::move(n);
}

ad::Var bspline_basis_op(const KnotGrid& grid, const ad::Var& x) {
    using ad::Tensor;
    if (x.value().rank() != 1)
        throw std::invalid_argument("bspline_basis_op: expected a vector, got " +
                                    x.value().shape_str());
    const size_t len = x.size();
    const size_t nb = static_cast<size_t>(grid.basis_count());
    Tensor out = Tensor::zeros(len, nb);
    Tensor dout = Tensor::zeros(len, nb);  // d(basis)/dx, captured for backward
    std::vector<double> b, d;
    for (size_t l = 0; l < len; ++l) {
        bspline_basis_and_deriv(grid, x.value()[l], b, d);
        for (size_t j = 0; j < nb; ++j) {
            out.at(l, j) = b[j];
            dout.at(l, j) = d[j];
        }
    }
    return ad::make_op("bspline_basis", std::move(out), {x},
                       [dout = std::move(dout), nb](ad::Node& self) {
                           ad::Node& X = *self.inputs[0];
                           if (!X.requires_grad) return;
                           const size_t len = X.value.size();
                           for (size_t l = 0; l < len; ++l) {
                               double s = 0.0;
                               for (size_t j = 0; j < nb; ++j)
                                   s += self.grad.at(l, j) * dout.at(l, j);
                               X.grad[l] += s;
                           }
                       });
}

}  // namespace grkan
