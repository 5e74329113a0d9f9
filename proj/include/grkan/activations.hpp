#pragma once

#include <string>
#include <vector>

#include "grkan/autodiff.hpp"

namespace grkan {

enum class Act { relu, leaky_relu, gelu, swish, identity };

std::string act_name(Act a);
Act act_from_name(const std::string& name);

// Scalar evaluation of the fixed activations (gelu uses the tanh form).
double fixed_eval(Act kind, double x);

// Graph-building counterparts composed from core ops; elementwise on any shape.
ad::Var fixed_act(Act kind, const ad::Var& x);
ad::Var sigmoid(const ad::Var& x);

// PReLU: x for x >= 0, a*x otherwise; `a` is a scalar leaf (init 0.25).
ad::Var prelu(const ad::Var& x, const ad::Var& a);

// Safe rational F(x) = sum_p a_p x^p / (1 + |sum_q b_q x^q|); the denominator
// is >= 1 for every finite x, so the function is pole-free.
struct RationalCoeffs {
    std::vector<double> num;  // a_0..a_m
    std::vector<double> den;  // b_1..b_n

    static RationalCoeffs zeros(int m = 5, int n = 4);
    static RationalCoeffs identity(int m = 5, int n = 4);  // F(x) = x
};

double rational_eval(const RationalCoeffs& c, double x);

// Autodiff op, elementwise over x (any shape). `num` is rank-1 (m+1 entries),
// `den` rank-1 (n entries); differentiable w.r.t. x and both coefficient sets
// (|.| subgradient 0 at 0).
ad::Var rational(const ad::Var& x, const ad::Var& num, const ad::Var& den);

// Applies one rational per contiguous column group of the L x I matrix x;
// group g covers columns [g*I/k, (g+1)*I/k).
ad::Var grouped_rational(const ad::Var& x, const std::vector<ad::Var>& nums,
                         const std::vector<ad::Var>& dens);

struct RationalFit {
    RationalCoeffs coeffs;
    double max_abs_error = 0.0;
};

// Two-stage fit of the safe rational to a target activation on `samples`
// uniform points in [lo, hi]: (1) least-squares numerator with den = 0,
// (2) joint Adam refinement until the max-abs error stops improving by 1e-6
// per 100 steps (or 5000 steps). Returns the best-by-max-error coefficients.
RationalFit rational_fit_init(Act target, double lo, double hi, int samples);

// Process-wide memoized variant (the fit is deterministic, so every layer
// initialized to the same target shares one computation). Thread-safe.
const RationalFit& rational_fit_cached(Act target, double lo, double hi, int samples);

// Monte Carlo estimate of E[F(z)^2] for z ~ Normal(0,1); fixed internal seed.
double rational_second_moment(const RationalCoeffs& c, int samples = 200000);

// APL: max(0,x) + sum_s slopes[s,h] * max(0, -x + offsets[s,h]) per unit h.
// x is L x H; slopes/offsets are S x H (one hinge set per unit).
ad::Var apl(const ad::Var& x, const ad::Var& slopes, const ad::Var& offsets);
double apl_eval(const std::vector<double>& slopes, const std::vector<double>& offsets,
                double x);

// lambda * (sum slopes^2 + sum offsets^2), added to the training loss.
ad::Var apl_l2_penalty(const ad::Var& slopes, const ad::Var& offsets, double lambda);

}  // namespace grkan
