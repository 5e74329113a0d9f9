#include "grkan/activations.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

#include "grkan/rng.hpp"
#include "grkan/train.hpp"

namespace grkan {

using ad::Node;
using ad::Tensor;
using ad::Var;

std::string act_name(Act a) {
    switch (a) {
        case Act::relu: return "relu";
        case Act::leaky_relu: return "leaky_relu";
        case Act::gelu: return "gelu";
        case Act::swish: return "swish";
        case Act::identity: return "identity";
    }
    return "?";
}

Act act_from_name(const std::string& name) {
    for (Act a : {Act::relu, Act::leaky_relu, Act::gelu, Act::swish, Act::identity})
        if (act_name(a) == name) return a;
    throw std::invalid_argument("unknown activation: " + name);
}

namespace {
constexpr double kLeakySlope = 0.01;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
}  // namespace

double fixed_eval(Act kind, double x) {
    switch (kind) {
        case Act::relu: return x > 0.0 ? x : 0.0;
        case Act::leaky_relu: return x >= 0.0 ? x : kLeakySlope * x;
        case Act::swish: return x / (1.0 + std::exp(-x));
        case Act::gelu: {
            const double inner = kGeluC * (x + 0.044715 * x * x * x);
            return 0.5 * x * (1.0 + std::tanh(inner));
        }
        case Act::identity: return x;
    }
    return x;
}

Var sigmoid(const Var& x) { return 1.0 / (1.0 + ad::exp(-x)); }

namespace {

// Single fused node: building gelu from add/pow/tanh/mul primitives costs five
// tape nodes per call, which dominates the 300k-step fitting runs.
Var gelu_fused(const Var& x) {
    const Tensor& xv = x.value();
    Tensor out = Tensor::zeros_like(xv);
    auto tanhs = std::make_shared<std::vector<double>>(xv.size());
    for (size_t i = 0; i < xv.size(); ++i) {
        const double xi = xv[i];
        const double t = std::tanh(kGeluC * (xi + 0.044715 * xi * xi * xi));
        (*tanhs)[i] = t;
        out[i] = 0.5 * xi * (1.0 + t);
    }
    return ad::make_op("gelu", std::move(out), {x}, [tanhs](ad::Node& self) {
        ad::Node& a = *self.inputs[0];
        if (!a.requires_grad) return;
        for (size_t i = 0; i < self.value.size(); ++i) {
            const double xi = a.value[i];
            const double t = (*tanhs)[i];
            const double du = kGeluC * (1.0 + 3.0 * 0.044715 * xi * xi);
            a.grad[i] += (0.5 * (1.0 + t) + 0.5 * xi * (1.0 - t * t) * du) * self.grad[i];
        }
    });
}

}  // namespace

Var fixed_act(Act kind, const Var& x) {
    switch (kind) {
        case Act::relu: return ad::maximum(x, 0.0);
        case Act::leaky_relu: return ad::maximum(x, 0.0) - kLeakySlope * ad::maximum(-x, 0.0);
        case Act::swish: return x * sigmoid(x);
        case Act::gelu: return gelu_fused(x);
        case Act::identity: return x;
    }
    return x;
}

Var prelu(const Var& x, const Var& a) {
    if (a.size() != 1)
        throw std::invalid_argument("prelu: slope must be a single value, got " +
                                    a.value().shape_str());
    // Accept any single-element slope; sum() reduces it to a broadcastable
    // scalar without detaching the gradient.
    const Var slope = a.value().is_scalar() ? a : ad::sum(a);
    return ad::maximum(x, 0.0) - slope * ad::maximum(-x, 0.0);
}

RationalCoeffs RationalCoeffs::zeros(int m, int n) {
    RationalCoeffs c;
    c.num.assign(m + 1, 0.0);
    c.den.assign(n, 0.0);
    return c;
}

RationalCoeffs RationalCoeffs::identity(int m, int n) {
    RationalCoeffs c = zeros(m, n);
    c.num[1] = 1.0;
    return c;
}

double rational_eval(const RationalCoeffs& c, double x) {
    double p = 0.0;
    for (size_t i = c.num.size(); i-- > 0;) p = p * x + c.num[i];
    double q = 0.0;
    for (size_t i = c.den.size(); i-- > 0;) q = q * x + c.den[i];
    q *= x;  // den holds b_1..b_n: Q(x) = sum_q b_q x^q has no constant term
    return p / (1.0 + std::abs(q));
}

Var rational(const Var& x, const Var& num, const Var& den) {
    if (num.value().rank() != 1 || den.value().rank() != 1)
        throw std::invalid_argument("rational: coefficient inputs must be vectors, got " +
                                    num.value().shape_str() + " and " +
                                    den.value().shape_str());
    const size_t m1 = num.size();  // m+1 numerator coefficients
    const size_t n = den.size();
    const Tensor& xv = x.value();
    Tensor out = Tensor::zeros_like(xv);
    for (size_t i = 0; i < xv.size(); ++i) {
        double p = 0.0;
        for (size_t j = m1; j-- > 0;) p = p * xv[i] + num.value()[j];
        double q = 0.0;
        for (size_t j = n; j-- > 0;) q = q * xv[i] + den.value()[j];
        q *= xv[i];
        out[i] = p / (1.0 + std::abs(q));
    }
    return ad::make_op("rational", std::move(out), {x, num, den}, [m1, n](Node& self) {
        Node& X = *self.inputs[0];
        Node& A = *self.inputs[1];
        Node& B = *self.inputs[2];
        const bool gx = X.requires_grad, ga = A.requires_grad, gb = B.requires_grad;
        const size_t count = X.value.size();
        for (size_t i = 0; i < count; ++i) {
            const double g = self.grad[i];
            if (g == 0.0) continue;
            const double xi = X.value[i];
            double p = 0.0, dp = 0.0;
            for (size_t j = m1; j-- > 0;) {
                dp = dp * xi + p;  // Horner for P and P' together
                p = p * xi + A.value[j];
            }
            double q = 0.0, dq0 = 0.0;
            for (size_t j = n; j-- > 0;) {
                dq0 = dq0 * xi + q;
                q = q * xi + B.value[j];
            }
            const double dq = dq0 * xi + q;  // Q'(x) where Q(x) = x * inner(x)
            q *= xi;
            const double s = q > 0.0 ? 1.0 : (q < 0.0 ? -1.0 : 0.0);
            const double d = 1.0 + std::abs(q);
            const double inv_d = 1.0 / d;
            const double f_over_d = p * inv_d * inv_d;
            if (gx) X.grad[i] += g * (dp * inv_d - f_over_d * s * dq);
            if (ga) {
                double xp = 1.0;
                for (size_t j = 0; j < m1; ++j) {
                    A.grad[j] += g * xp * inv_d;
                    xp *= xi;
                }
            }
            if (gb) {
                double xq = xi;
                for (size_t j = 0; j < n; ++j) {
                    B.grad[j] -= g * f_over_d * s * xq;
                    xq *= xi;
                }
            }
        }
    });
}

Var grouped_rational(const Var& x, const std::vector<Var>& nums,
                     const std::vector<Var>& dens) {
    if (nums.empty() || nums.size() != dens.size())
        throw std::invalid_argument("grouped_rational: need matching coefficient lists");
    const size_t k = nums.size();
    if (k == 1) return rational(x, nums[0], dens[0]);
    const size_t cols = x.value().cols();
    if (x.value().rank() != 2 || cols % k != 0)
        throw std::invalid_argument("grouped_rational: " + std::to_string(k) +
                                    " groups do not divide " + x.value().shape_str());
    const size_t width = cols / k;
    std::vector<Var> parts;
    parts.reserve(k);
    for (size_t g = 0; g < k; ++g)
        parts.push_back(rational(ad::slice_cols(x, g * width, (g + 1) * width),
                                 nums[g], dens[g]));
    return ad::hcat(parts);
}

namespace {

// Solves the symmetric system M c = rhs in place by Gaussian elimination with
// partial pivoting; used for the stage-1 polynomial least squares.
std::vector<double> solve_dense(std::vector<std::vector<double>> mat,
                                std::vector<double> rhs) {
    const size_t n = rhs.size();
    for (size_t col = 0; col < n; ++col) {
        size_t pivot = col;
        for (size_t r = col + 1; r < n; ++r)
            if (std::abs(mat[r][col]) > std::abs(mat[pivot][col])) pivot = r;
        if (std::abs(mat[pivot][col]) < 1e-12)
            throw std::runtime_error(
                "rational_fit_init: singular least-squares system (pivot " +
                std::to_string(mat[pivot][col]) + " at column " + std::to_string(col) +
                ")");
        std::swap(mat[col], mat[pivot]);
        std::swap(rhs[col], rhs[pivot]);
        for (size_t r = col + 1; r < n; ++r) {
            const double f = mat[r][col] / mat[col][col];
            if (f == 0.0) continue;
            for (size_t c = col; c < n; ++c) mat[r][c] -= f * mat[col][c];
            rhs[r] -= f * rhs[col];
        }
    }
    std::vector<double> sol(n);
    for (size_t r = n; r-- > 0;) {
        double s = rhs[r];
        for (size_t c = r + 1; c < n; ++c) s -= mat[r][c] * sol[c];
        sol[r] = s / mat[r][r];
    }
    return sol;
}

double max_abs_fit_error(const RationalCoeffs& c, const std::vector<double>& xs,
                         const std::vector<double>& ys) {
    double worst = 0.0;
    for (size_t i = 0; i < xs.size(); ++i)
        worst = std::max(worst, std::abs(rational_eval(c, xs[i]) - ys[i]));
    return worst;
}

}  // namespace

RationalFit rational_fit_init(Act target, double lo, double hi, int samples) {
    constexpr int m = 5, n = 4;
    if (samples < 10 * (m + n))
        throw std::invalid_argument("rational_fit_init: need at least " +
                                    std::to_string(10 * (m + n)) + " samples, got " +
                                    std::to_string(samples));
    std::vector<double> xs(samples), ys(samples);
    for (int i = 0; i < samples; ++i) {
        xs[i] = lo + (hi - lo) * i / (samples - 1);
        ys[i] = fixed_eval(target, xs[i]);
    }

    // Stage 1: numerator-only polynomial least squares via normal equations.
    // Fit in u = x/scale coordinates for conditioning, then rescale.
    const double scale = std::max(std::abs(lo), std::abs(hi));
    std::vector<std::vector<double>> mat(m + 1, std::vector<double>(m + 1, 0.0));
    std::vector<double> rhs(m + 1, 0.0);
    for (int i = 0; i < samples; ++i) {
        const double u = xs[i] / scale;
        double up[m + 1];
        up[0] = 1.0;
        for (int p = 1; p <= m; ++p) up[p] = up[p - 1] * u;
        for (int r = 0; r <= m; ++r) {
            for (int c = 0; c <= m; ++c) mat[r][c] += up[r] * up[c];
            rhs[r] += up[r] * ys[i];
        }
    }
    std::vector<double> poly = solve_dense(std::move(mat), std::move(rhs));
    RationalCoeffs best = RationalCoeffs::zeros(m, n);
    double pw = 1.0;
    for (int p = 0; p <= m; ++p) {
        best.num[p] = poly[p] / pw;
        pw *= scale;
    }
    double best_err = max_abs_fit_error(best, xs, ys);

    // Stage 2: joint Adam refinement of (num, den) on the same samples. The
    // denominator starts at small nonzero seeds: at exactly 0 its gradient is
    // identically 0 (sign(0) = 0), so it could never join the refinement. The
    // stage-1 candidate stays in the running, so targets that a plain
    // polynomial fits exactly still return it.
    RationalCoeffs start = best;
    for (size_t q = 0; q < start.den.size(); ++q)
        start.den[q] = (q % 2 == 0 ? 0.01 : -0.01);
    Var a(Tensor::vec(start.num), true);
    Var b(Tensor::vec(start.den), true);
    Var xsv(Tensor::vec(xs), false);
    Var ysv(Tensor::vec(ys), false);
    TrainConfig opt_cfg;
    opt_cfg.lr = 1e-3;
    Adam opt({a, b}, opt_cfg);
    double err_at_last_review = max_abs_fit_error(start, xs, ys);
    for (int step = 1; step <= 5000; ++step) {
        {
            ad::Tape tape;
            Var loss = mse_loss(rational(xsv, a, b), ysv);
            tape.backward(loss);
        }
        opt.step();
        if (step % 100 == 0) {
            RationalCoeffs cur{a.value().data(), b.value().data()};
            const double err = max_abs_fit_error(cur, xs, ys);
            if (err < best_err) {
                best_err = err;
                best = cur;
            }
            if (err_at_last_review - err < 1e-6) break;
            err_at_last_review = err;
        }
    }
    return {best, best_err};
}

const RationalFit& rational_fit_cached(Act target, double lo, double hi, int samples) {
    static std::mutex mu;
    static std::map<std::tuple<Act, double, double, int>, RationalFit> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto key = std::make_tuple(target, lo, hi, samples);
    auto it = cache.find(key);
    if (it == cache.end())
        it = cache.emplace(key, rational_fit_init(target, lo, hi, samples)).first;
    return it->second;
}

double rational_second_moment(const RationalCoeffs& c, int samples) {
    Rng rng(0xa11ce);  // fixed stream: the gain must not depend on layer seeds
    double acc = 0.0;
    for (int i = 0; i < samples; ++i) {
        const double f = rational_eval(c, rng.normal());
        acc += f * f;
    }
    return acc / samples;
}

Var apl(const Var& x, const Var& slopes, const Var& offsets) {
    const Tensor& xv = x.value();
    if (xv.rank() != 2)
        throw std::invalid_argument("apl: expected a matrix input, got " + xv.shape_str());
    if (slopes.value().rank() != 2 || !slopes.value().same_shape(offsets.value()) ||
        slopes.value().cols() != xv.cols())
        throw std::invalid_argument("apl: hinge params " + slopes.value().shape_str() +
                                    " / " + offsets.value().shape_str() +
                                    " do not match input " + xv.shape_str());
    const size_t rows = xv.rows(), units = xv.cols(), hinges = slopes.value().rows();
    Tensor out = Tensor::zeros_like(xv);
    for (size_t r = 0; r < rows; ++r)
        for (size_t h = 0; h < units; ++h) {
            const double xi = xv.at(r, h);
            double y = xi > 0.0 ? xi : 0.0;
            for (size_t s = 0; s < hinges; ++s) {
                const double hinge = offsets.value().at(s, h) - xi;
                if (hinge > 0.0) y += slopes.value().at(s, h) * hinge;
            }
            out.at(r, h) = y;
        }
    return ad::make_op("apl", std::move(out), {x, slopes, offsets}, [hinges](Node& self) {
        Node& X = *self.inputs[0];
        Node& A = *self.inputs[1];
        Node& B = *self.inputs[2];
        const size_t rows = X.value.rows(), units = X.value.cols();
        for (size_t r = 0; r < rows; ++r)
            for (size_t h = 0; h < units; ++h) {
                const double g = self.grad.at(r, h);
                if (g == 0.0) continue;
                const double xi = X.value.at(r, h);
                double dx = xi > 0.0 ? 1.0 : 0.0;
                for (size_t s = 0; s < hinges; ++s) {
                    const double hinge = B.value.at(s, h) - xi;
                    if (hinge <= 0.0) continue;  // inactive hinge: no gradient
                    const double a = A.value.at(s, h);
                    dx -= a;
                    if (A.requires_grad) A.grad.at(s, h) += g * hinge;
                    if (B.requires_grad) B.grad.at(s, h) += g * a;
                }
                if (X.requires_grad) X.grad.at(r, h) += g * dx;
            }
    });
}

double apl_eval(const std::vector<double>& slopes, const std::vector<double>& offsets,
                double x) {
    double y = x > 0.0 ? x : 0.0;
    for (size_t s = 0; s < slopes.size(); ++s) {
        const double hinge = offsets[s] - x;
        if (hinge > 0.0) y += slopes[s] * hinge;
    }
    return y;
}

Var apl_l2_penalty(const Var& slopes, const Var& offsets, double lambda) {
    return lambda * (ad::sum(slopes * slopes) + ad::sum(offsets * offsets));
}

}  // namespace grkan
