#pragma once

#include <cstdint>
#include <vector>

#include "grkan/activations.hpp"
#include "grkan/autodiff.hpp"
#include "grkan/rng.hpp"
#include "grkan/spline.hpp"

namespace grkan {

// Dense layer, stored input-major (I x J) so a batch forward is one matmul.
// Semantics are y = Wx + b per row of the L x I input.
struct Linear {
    ad::Var W;  // I x J
    ad::Var b;  // J

    // Uniform[-1/sqrt(I), 1/sqrt(I)] for both W and b. Draw order: W row-major,
    // then b.
    static Linear init(size_t in, size_t out, Rng& rng);
    // Normal(0, std^2) weights, zero bias (variance-preserving path).
    static Linear init_normal(size_t in, size_t out, double std, Rng& rng);

    ad::Var forward(const ad::Var& x) const;  // L x I -> L x J
    size_t in_dim() const { return W.value().rows(); }
    size_t out_dim() const { return W.value().cols(); }
    size_t param_count() const { return W.size() + b.size(); }
};

// KAN layer: each edge (i, j) carries phi(x) = w1 * swish(x) + w2 * S(x),
// S(x) = sum_b coeff_b * B_b(x) on a shared knot grid. Output j sums the I
// incoming edges.
struct KanLayer {
    KnotGrid grid;
    ad::Var base_w;       // I x J   (w1 per edge)
    ad::Var spline_scale; // I x J   (w2 per edge)
    ad::Var coeffs;       // (I * basis_count) x J, rows blocked per input

    // base_w ~ Kaiming-uniform for the swish base (bound sqrt(6/I)); spline
    // coefficients ~ Normal(0, (0.1/basis_count)^2); spline_scale starts at 1.
    // Draw order: base_w row-major, then coeffs row-major.
    static KanLayer init(size_t in, size_t out, const KnotGrid& grid, Rng& rng);

    ad::Var forward(const ad::Var& x) const;  // L x I -> L x J
    size_t in_dim() const { return base_w.value().rows(); }
    size_t out_dim() const { return base_w.value().cols(); }
    size_t param_count() const;
    std::vector<ad::Var> params() const { return {base_w, spline_scale, coeffs}; }
};

// Scalar evaluation of one edge function; the brute-force oracle for tests.
double kan_edge_eval(const KanLayer& layer, size_t i, size_t j, double x);

// GR-KAN layer: channels split into `groups` contiguous groups, each sharing
// one safe rational; a dense layer mixes the activated channels.
struct GrKanLayer {
    size_t groups = 1;
    std::vector<ad::Var> nums;  // per group, 6 numerator coefficients
    std::vector<ad::Var> dens;  // per group, 4 denominator coefficients
    Linear lin;

    // Every group's rational is fitted to `target`; dense weights are
    // Normal(0, 1/(alpha^2 * I)) with alpha^2 = E[F(z)^2] estimated by Monte
    // Carlo, bias 0. Throws std::invalid_argument when groups does not divide
    // `in`, std::runtime_error when the fitted gain is degenerate (< 1e-8).
    static GrKanLayer init_variance_preserving(size_t in, size_t out, size_t groups,
                                               Act target, Rng& rng);

    ad::Var forward(const ad::Var& x) const;  // L x I -> L x J
    size_t in_dim() const { return lin.in_dim(); }
    size_t out_dim() const { return lin.out_dim(); }
    size_t group_width() const { return in_dim() / groups; }
    size_t param_count() const;
    std::vector<ad::Var> params() const;
};

}  // namespace grkan
