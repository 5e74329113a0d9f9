#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "grkan/layers.hpp"
#include "grkan/rng.hpp"

using namespace grkan;
using ad::Tensor;
using ad::Var;

namespace {

Tensor random_matrix(size_t r, size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::zeros(r, c);
    for (size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

double column_std(const Tensor& m) {
    double mean = 0.0;
    for (size_t i = 0; i < m.size(); ++i) mean += m[i];
    mean /= static_cast<double>(m.size());
    double var = 0.0;
    for (size_t i = 0; i < m.size(); ++i) var += (m[i] - mean) * (m[i] - mean);
    return std::sqrt(var / static_cast<double>(m.size() - 1));
}

}  // namespace

TEST_CASE("linear forward examples") {
    Linear ident{Var(Tensor::identity(3)), Var(Tensor::zeros(3))};
    Var x(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
    const Tensor y = ident.forward(x).value();
    for (size_t i = 0; i < 6; ++i) CHECK(y[i] == x.value()[i]);

    Linear constant{Var(Tensor::zeros(3, 2)), Var(Tensor::vec({4.0, -1.0}))};
    const Tensor c = constant.forward(x).value();
    CHECK(c.at(0, 0) == 4.0);
    CHECK(c.at(1, 1) == -1.0);

    // Weights [1,2] into one output with bias 1 applied to x=[3,4]: 3+8+1.
    Linear wsum{Var(Tensor::matrix(2, 1, {1.0, 2.0})), Var(Tensor::vec({1.0}))};
    CHECK(wsum.forward(Var(Tensor::matrix(1, 2, {3.0, 4.0}))).value().item() == 12.0);

    CHECK_THROWS_AS(wsum.forward(Var(Tensor::matrix(1, 3, {1, 2, 3}))),
                    std::invalid_argument);
}

TEST_CASE("linear init bounds and counts") {
    Rng rng(1);
    Linear l = Linear::init(9, 4, rng);
    const double bound = 1.0 / 3.0 + 1e-12;
    for (size_t i = 0; i < l.W.size(); ++i) CHECK(std::abs(l.W.value()[i]) <= bound);
    for (size_t i = 0; i < l.b.size(); ++i) CHECK(std::abs(l.b.value()[i]) <= bound);
    CHECK(l.param_count() == 40);
    CHECK(l.in_dim() == 9);
    CHECK(l.out_dim() == 4);

    Rng rng2(2);
    Linear n = Linear::init_normal(9, 4, 0.5, rng2);
    for (size_t i = 0; i < n.b.size(); ++i) CHECK(n.b.value()[i] == 0.0);
}

TEST_CASE("kan edge function oracle cases") {
    const KnotGrid grid = make_knot_grid(-1.0, 1.0, 5, 3);
    const size_t nb = static_cast<size_t>(grid.basis_count());
    Rng rng(3);

    // Spline path disabled: edge reduces to swish.
    KanLayer swish_only{grid, Var(Tensor::full(1, 1, 1.0)), Var(Tensor::full(1, 1, 1.0)),
                        Var(Tensor::zeros(nb, 1))};
    for (double x : {-0.8, 0.0, 0.9})
        CHECK(kan_edge_eval(swish_only, 0, 0, x) ==
              doctest::Approx(fixed_eval(Act::swish, x)).epsilon(1e-14));

    // Base disabled, equal spline coefficients: partition of unity gives c.
    KanLayer flat{grid, Var(Tensor::zeros(1, 1)), Var(Tensor::full(1, 1, 1.0)),
                  Var(Tensor::full(nb, 1, 0.37))};
    for (double x : {-0.9, -0.2, 0.5, 0.99})
        CHECK(kan_edge_eval(flat, 0, 0, x) == doctest::Approx(0.37).epsilon(1e-12));

    // Random parameters against a naive in-test reimplementation.
    KanLayer edge{grid, Var(random_matrix(2, 3, rng)), Var(random_matrix(2, 3, rng)),
                  Var(random_matrix(2 * nb, 3, rng))};
    for (int p = 0; p < 50; ++p) {
        const double x = rng.uniform(-1.0, 1.0);
        const size_t i = static_cast<size_t>(rng.uniform(0.0, 2.0));
        const size_t j = static_cast<size_t>(rng.uniform(0.0, 3.0));
        const auto basis = bspline_basis(grid, x);
        double spline = 0.0;
        for (size_t b = 0; b < nb; ++b)
            spline += edge.coeffs.value().at(i * nb + b, j) * basis[b];
        const double want = edge.base_w.value().at(i, j) * fixed_eval(Act::swish, x) +
                            edge.spline_scale.value().at(i, j) * spline;
        CHECK(std::abs(kan_edge_eval(edge, i, j, x) - want) < 1e-12);
    }
}

TEST_CASE("kan layer forward against brute-force edges") {
    const KnotGrid grid = make_knot_grid(-1.0, 1.0, 5, 3);
    Rng rng(4);

    KanLayer single = KanLayer::init(1, 1, grid, rng);
    const Tensor y1 = single.forward(Var(Tensor::matrix(1, 1, {0.4}))).value();
    CHECK(std::abs(y1.item() - kan_edge_eval(single, 0, 0, 0.4)) < 1e-12);

    const size_t nb = static_cast<size_t>(grid.basis_count());
    KanLayer zeroed{grid, Var(Tensor::zeros(2, 2)), Var(Tensor::zeros(2, 2)),
                    Var(Tensor::zeros(2 * nb, 2))};
    const Tensor yz = zeroed.forward(Var(random_matrix(3, 2, rng))).value();
    for (size_t i = 0; i < yz.size(); ++i) CHECK(yz[i] == 0.0);

    KanLayer layer = KanLayer::init(2, 2, grid, rng);
    const Tensor x = random_matrix(5, 2, rng);
    const Tensor y = layer.forward(Var(x)).value();
    for (size_t r = 0; r < 5; ++r)
        for (size_t j = 0; j < 2; ++j) {
            double want = 0.0;
            for (size_t i = 0; i < 2; ++i) want += kan_edge_eval(layer, i, j, x.at(r, i));
            CHECK(std::abs(y.at(r, j) - want) < 1e-10);
        }

    CHECK_THROWS_AS(layer.forward(Var(random_matrix(3, 4, rng))), std::invalid_argument);
}

TEST_CASE("kan layer matches finite differences in params and input") {
    const KnotGrid grid = make_knot_grid(-1.0, 1.0, 5, 3);
    Rng rng(5);
    KanLayer layer = KanLayer::init(2, 2, grid, rng);
    const Tensor x = random_matrix(3, 2, rng, -0.9, 0.9);
    const size_t nb = static_cast<size_t>(grid.basis_count());

    const double ex = ad::finite_diff_check(
        [&](const Var& v) { return ad::sum(layer.forward(ad::reshape(v, 3, 2))); },
        Tensor::vec(x.data()));
    CHECK(ex < 1e-4);

    const double ep = ad::finite_diff_check(
        [&](const Var& v) {
            KanLayer probe{grid, ad::reshape(ad::segment(v, 0, 4), 2, 2),
                           ad::reshape(ad::segment(v, 4, 4), 2, 2),
                           ad::reshape(ad::segment(v, 8, 2 * nb * 2), 2 * nb, 2)};
            return ad::sum(probe.forward(Var(x)));
        },
        [&] {
            Tensor t = Tensor::zeros(8 + 2 * nb * 2);
            size_t k = 0;
            for (size_t i = 0; i < 4; ++i) t[k++] = layer.base_w.value()[i];
            for (size_t i = 0; i < 4; ++i) t[k++] = layer.spline_scale.value()[i];
            for (size_t i = 0; i < 2 * nb * 2; ++i) t[k++] = layer.coeffs.value()[i];
            return t;
        }());
    CHECK(ep < 1e-4);
}

TEST_CASE("grkan forward equals the grouped double sum") {
    Rng rng(6);
    GrKanLayer layer = GrKanLayer::init_variance_preserving(8, 3, 4, Act::swish, rng);
    CHECK(layer.group_width() == 2);
    const Tensor x = random_matrix(6, 8, rng, -2.0, 2.0);
    ad::NoGradGuard no_grad;
    const Tensor y = layer.forward(Var(x)).value();
    for (size_t r = 0; r < 6; ++r)
        for (size_t j = 0; j < 3; ++j) {
            double want = layer.lin.b.value()[j];
            for (size_t i = 0; i < 8; ++i) {
                const size_t g = i / layer.group_width();
                RationalCoeffs c{layer.nums[g].value().data(), layer.dens[g].value().data()};
                want += layer.lin.W.value().at(i, j) * rational_eval(c, x.at(r, i));
            }
            CHECK(std::abs(y.at(r, j) - want) < 1e-12);
        }
}

TEST_CASE("grkan identity configuration is a passthrough") {
    const RationalCoeffs ident = RationalCoeffs::identity();
    GrKanLayer layer;
    layer.groups = 2;
    layer.nums = {Var(Tensor::vec(ident.num)), Var(Tensor::vec(ident.num))};
    layer.dens = {Var(Tensor::vec(ident.den)), Var(Tensor::vec(ident.den))};
    layer.lin = Linear{Var(Tensor::identity(4)), Var(Tensor::zeros(4))};
    Rng rng(7);
    const Tensor x = random_matrix(3, 4, rng);
    const Tensor y = layer.forward(Var(x)).value();
    for (size_t i = 0; i < x.size(); ++i) CHECK(std::abs(y[i] - x[i]) < 1e-12);
}

TEST_CASE("grkan output is invariant to regrouping with shared coefficients") {
    Rng rng(8);
    const RationalFit& fit = rational_fit_cached(Act::swish, -3.0, 3.0, 1000);
    Linear lin = Linear::init(4, 3, rng);
    auto build = [&](size_t k) {
        GrKanLayer l;
        l.groups = k;
        for (size_t g = 0; g < k; ++g) {
            l.nums.push_back(Var(Tensor::vec(fit.coeffs.num)));
            l.dens.push_back(Var(Tensor::vec(fit.coeffs.den)));
        }
        l.lin = lin;
        return l;
    };
    const Tensor x = random_matrix(5, 4, rng, -2.0, 2.0);
    const Tensor y1 = build(1).forward(Var(x)).value();
    const Tensor y2 = build(2).forward(Var(x)).value();
    const Tensor y4 = build(4).forward(Var(x)).value();
    for (size_t i = 0; i < y1.size(); ++i) {
        CHECK(std::abs(y1[i] - y2[i]) < 1e-12);
        CHECK(std::abs(y1[i] - y4[i]) < 1e-12);
    }
}

TEST_CASE("grkan construction constraints") {
    Rng rng(9);
    CHECK_THROWS_AS(GrKanLayer::init_variance_preserving(8, 3, 3, Act::swish, rng),
                    std::invalid_argument);
    Rng a(10), b(10);
    GrKanLayer la = GrKanLayer::init_variance_preserving(8, 3, 4, Act::swish, a);
    GrKanLayer lb = GrKanLayer::init_variance_preserving(8, 3, 4, Act::swish, b);
    CHECK(la.lin.W.value() == lb.lin.W.value());
    CHECK(la.lin.b.value() == lb.lin.b.value());
    for (size_t g = 0; g < 4; ++g) {
        CHECK(la.nums[g].value() == lb.nums[g].value());
        CHECK(la.dens[g].value() == lb.dens[g].value());
    }
}

TEST_CASE("variance-preserving init holds its output band") {
    Rng rng(11);
    GrKanLayer layer = GrKanLayer::init_variance_preserving(64, 64, 8, Act::swish, rng);
    Tensor x = Tensor::zeros(10000, 64);
    for (size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
    ad::NoGradGuard no_grad;
    const double sd = column_std(layer.forward(Var(x)).value());
    CHECK(sd >= 0.8);
    CHECK(sd <= 1.25);

    // Identity target: gain is 1, so weights behave like Normal(0, 1/I).
    Rng rng2(12);
    GrKanLayer ident = GrKanLayer::init_variance_preserving(64, 64, 8, Act::identity, rng2);
    const double wsd = column_std(ident.lin.W.value());
    CHECK(wsd == doctest::Approx(1.0 / 8.0).epsilon(0.05));
}

TEST_CASE("five stacked variance-preserving layers stay in band") {
    Rng rng(13);
    std::vector<GrKanLayer> stack;
    for (int d = 0; d < 5; ++d)
        stack.push_back(GrKanLayer::init_variance_preserving(64, 64, 8, Act::swish, rng));
    Tensor x = Tensor::zeros(4000, 64);
    for (size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
    ad::NoGradGuard no_grad;
    Var h(x);
    for (const auto& layer : stack) h = layer.forward(h);
    const double sd = column_std(h.value());
    CHECK(sd >= 0.5);
    CHECK(sd <= 2.0);
}

TEST_CASE("kan init keeps outputs in a sane band with spline path quiet") {
    const KnotGrid grid = make_knot_grid(-1.0, 1.0, 5, 3);
    Rng rng(14);
    KanLayer layer = KanLayer::init(64, 64, grid, rng);
    Tensor x = Tensor::zeros(2000, 64);
    for (size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
    ad::NoGradGuard no_grad;
    const double sd = column_std(layer.forward(Var(x)).value());
    CHECK(sd >= 0.3);
    CHECK(sd <= 3.0);

    // The spline path starts much quieter than the swish base path.
    KanLayer base_only = layer, spline_only = layer;
    base_only.spline_scale = Var(Tensor::zeros(64, 64));
    spline_only.base_w = Var(Tensor::zeros(64, 64));
    const double base_sd = column_std(base_only.forward(Var(x)).value());
    const double spline_sd = column_std(spline_only.forward(Var(x)).value());
    CHECK(spline_sd < base_sd);
}

TEST_CASE("parameter counts are exact and additive") {
    const KnotGrid grid = make_knot_grid(-1.0, 1.0, 5, 3);
    Rng rng(15);
    CHECK(Linear::init(1, 12, rng).param_count() == 24);
    CHECK(Linear::init(12, 12, rng).param_count() == 156);
    CHECK(Linear::init(12, 1, rng).param_count() == 13);

    KanLayer k1 = KanLayer::init(1, 4, grid, rng);
    KanLayer k2 = KanLayer::init(4, 1, grid, rng);
    CHECK(k1.param_count() == 40);  // 4 + 4 + 8*4
    CHECK(k2.param_count() == 40);  // 4 + 4 + 32*1
    CHECK(k1.param_count() + k2.param_count() == 80);

    GrKanLayer g1 = GrKanLayer::init_variance_preserving(8, 8, 4, Act::swish, rng);
    GrKanLayer g2 = GrKanLayer::init_variance_preserving(8, 1, 4, Act::swish, rng);
    CHECK(g1.param_count() == 112);  // 4*(6+4) + 72
    CHECK(g2.param_count() == 49);   // 4*(6+4) + 9
    CHECK(g1.params().size() == 10);
    size_t total = 0;
    for (const Var& p : g1.params()) total += p.size();
    CHECK(total == g1.param_count());
}

TEST_CASE("no dead parameters at init") {
    const KnotGrid grid = make_knot_grid(-1.0, 1.0, 5, 3);
    Rng rng(16);
    auto check_all_alive = [&](std::vector<Var> params, const std::function<Var()>& loss) {
        ad::Tape tape;
        tape.backward(loss());
        for (Var& p : params) {
            bool alive = false;
            for (size_t i = 0; i < p.size(); ++i)
                if (p.grad()[i] != 0.0) alive = true;
            CHECK(alive);
        }
    };

    Linear lin = Linear::init(3, 2, rng);
    const Tensor lx = random_matrix(8, 3, rng);
    check_all_alive({lin.W, lin.b},
                    [&] { return ad::sum(ad::mul(lin.forward(Var(lx)), lin.forward(Var(lx)))); });

    KanLayer kan = KanLayer::init(2, 2, grid, rng);
    const Tensor kx = random_matrix(16, 2, rng, -0.95, 0.95);
    check_all_alive(kan.params(), [&] { return ad::sum(ad::mul(kan.forward(Var(kx)),
                                                               kan.forward(Var(kx)))); });

    GrKanLayer gr = GrKanLayer::init_variance_preserving(4, 2, 2, Act::swish, rng);
    const Tensor gx = random_matrix(8, 4, rng, -2.0, 2.0);
    check_all_alive(gr.params(), [&] { return ad::sum(ad::mul(gr.forward(Var(gx)),
                                                              gr.forward(Var(gx)))); });
}

TEST_CASE("grkan layer loss passes the gradient oracle") {
    Rng rng(17);
    GrKanLayer layer = GrKanLayer::init_variance_preserving(4, 2, 2, Act::swish, rng);
    const Tensor x = random_matrix(3, 4, rng, -1.5, 1.5);
    std::vector<Var> ps = layer.params();
    size_t dim = 0;
    for (const Var& p : ps) dim += p.size();
    Tensor flat = Tensor::zeros(dim);
    size_t k = 0;
    for (const Var& p : ps)
        for (size_t i = 0; i < p.size(); ++i) flat[k++] = p.value()[i];
    const double err = ad::finite_diff_check(
        [&](const Var& v) {
            GrKanLayer probe;
            probe.groups = 2;
            size_t off = 0;
            for (size_t g = 0; g < 2; ++g) {
                probe.nums.push_back(ad::segment(v, off, 6));
                off += 6;
                probe.dens.push_back(ad::segment(v, off, 4));
                off += 4;
            }
            probe.lin.W = ad::reshape(ad::segment(v, off, 8), 4, 2);
            off += 8;
            probe.lin.b = ad::segment(v, off, 2);
            return ad::mean(ad::mul(probe.forward(Var(x)), probe.forward(Var(x))));
        },
        flat);
    CHECK(err < 1e-4);
}
