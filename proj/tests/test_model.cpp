#include <catch_amalgamated.hpp>

#include <cmath>

#include "wavegap/model.hpp"

using namespace wavegap;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("logistic gain derivatives match finite differences", "[model]")
{
    Gain F(20, 0.4);
    for (double u : {-0.2, 0.1, 0.4, 0.55, 1.1}) {
        const double e = 1e-6;
        CHECK_THAT(F.d1(u), WithinAbs((F(u + e) - F(u - e)) / (2 * e), 1e-6));
        CHECK_THAT(F.d2(u), WithinAbs((F.d1(u + e) - F.d1(u - e)) / (2 * e), 1e-4));
    }
    CHECK_THAT(F.sup_d1(), WithinRel(F.d1(0.4), 1e-14));
}

TEST_CASE("gain increment avoids cancellation", "[model]")
{
    Gain F(20, 0.4);
    for (double u : {0.0, 0.3, 0.4, 1.0})
        for (double v : {1e-12, -3e-9, 1e-4, -0.2}) {
            double ref = F(u + v) - F(u);
            CHECK_THAT(F.increment(u, v), WithinAbs(ref, 1e-15));
            if (std::abs(v) < 1e-8) CHECK_THAT(F.increment(u, v) / v, WithinRel(F.d1(u), 1e-6));
        }
}

TEST_CASE("sup of F'' is attained at the curvature peak", "[model]")
{
    Gain F(8, 0.5);
    double best = 0;
    for (int i = 0; i <= 200000; ++i) best = std::max(best, std::abs(F.d2(-1 + 3.0 * i / 200000)));
    CHECK_THAT(F.sup_d2(), WithinRel(best, 1e-6));
}

TEST_CASE("fixed points of the neural-field preset", "[model]")
{
    // brentq on x - F(x), tolerance 1e-15
    auto sys = neural_field(Kernel::exponential(1), Gain(20, 0.4));
    auto [a1, a, a2] = find_fixed_points(sys);
    CHECK_THAT(a1, WithinAbs(0.00033762145376287658, 1e-12));
    CHECK_THAT(a, WithinAbs(0.37431186204497863, 1e-12));
    CHECK_THAT(a2, WithinAbs(0.99999385507024563, 1e-12));

    auto mid = neural_field(Kernel::exponential(1), Gain(8, 0.45));
    auto r = find_fixed_points(mid);
    CHECK_THAT(r[0], WithinAbs(0.034851398644922156, 1e-12));
    CHECK_THAT(r[1], WithinAbs(0.39857339275884884, 1e-12));
    CHECK_THAT(r[2], WithinAbs(0.98650784332617714, 1e-12));
}

TEST_CASE("symmetric gain has its middle state at one half", "[model]")
{
    auto sys = neural_field(Kernel::exponential(1), Gain(10, 0.5));
    auto [a1, a, a2] = find_fixed_points(sys);
    CHECK_THAT(a, WithinAbs(0.5, 1e-13));
    CHECK_THAT(a1 + a2, WithinAbs(1.0, 1e-13));
}

TEST_CASE("cubic surrogate has roots 0, 1/2, 1", "[model]")
{
    BistableSystem sys;
    sys.S = [](double x, double g) { return -x + g; };
    sys.g = [](double x) { return x - 4 * x * (x - 0.5) * (x - 1); };
    auto [a1, a, a2] = find_fixed_points(sys, -0.73, 1.91);
    CHECK_THAT(a1, WithinAbs(0.0, 1e-13));
    CHECK_THAT(a, WithinAbs(0.5, 1e-13));
    CHECK_THAT(a2, WithinAbs(1.0, 1e-13));
}

TEST_CASE("phase-transition preset has roots 0, a, 1", "[model]")
{
    auto sys = phase_transition(Kernel::exponential(1), 1, 2, 0.3);
    auto [a1, a, a2] = find_fixed_points(sys, -0.77, 1.93);
    CHECK_THAT(a1, WithinAbs(0.0, 1e-13));
    CHECK_THAT(a, WithinAbs(0.3, 1e-13));
    CHECK_THAT(a2, WithinAbs(1.0, 1e-13));
}

TEST_CASE("monostable reaction is rejected", "[model]")
{
    BistableSystem sys;
    sys.S = [](double x, double g) { return -x + g; };
    sys.g = [](double x) { return 0.5 * x + 0.2; };
    CHECK_THROWS_AS(find_fixed_points(sys), RootCountError);
}

TEST_CASE("coefficient fields of the presets", "[model]")
{
    Grid g(10, 128);
    ConvolutionOperator conv(g, Kernel::exponential(1));
    Vec u = g.interior_nodes().unaryExpr([](double x) { return 0.5 + 0.5 * std::tanh(x); });

    Gain F(20, 0.4);
    auto nf = neural_field(Kernel::exponential(1), F);
    auto k = coefficient_fields(nf, conv, u, 0.0, 1.0);
    for (Eigen::Index i = 0; i < u.size(); ++i) {
        CHECK(k.f[i] == 1.0);
        CHECK(k.r[i] == 1.0);
        CHECK_THAT(k.q[i], WithinRel(F.d1(u[i]), 1e-14));
    }

    auto pt = phase_transition(Kernel::exponential(1), 1, 2, 0.5);
    auto kp = coefficient_fields(pt, conv, u, 0.0, 1.0);
    CHECK(kp.r.minCoeff() == 1.0);
    CHECK(kp.q.maxCoeff() == 1.0);
    CHECK(kp.f.minCoeff() >= 0.5 - 1e-14);
}

TEST_CASE("kernels carry unit mass and consistent tails", "[model]")
{
    for (const Kernel& k : {Kernel::exponential(1.5), Kernel::gaussian(0.7), Kernel::bump(2.0)}) {
        double mass = 0;
        const int n = 400000;
        const double R = k.effective_radius() + 1, h = 2 * R / n;
        for (int i = 0; i <= n; ++i) mass += (i == 0 || i == n ? 0.5 : 1.0) * h * k(-R + i * h);
        CHECK_THAT(mass, WithinAbs(1.0, 1e-6));
        CHECK_THAT(k.upper_mass(0.3) + k.lower_mass(-0.3), WithinAbs(1.0, 1e-14));
    }
    CHECK_THAT(Kernel::exponential(2).sup_log_derivative(), WithinRel(0.5, 1e-15));
    CHECK(std::isinf(Kernel::gaussian(1).sup_log_derivative()));
    CHECK_THROWS_AS(Kernel::exponential(0), KernelError);
}

TEST_CASE("tabulated kernel is renormalized", "[model]")
{
    Kernel k = Kernel::tabulated({-2, 0, 2}, {0, 2, 0});
    CHECK_THAT(k(0), WithinRel(0.5, 1e-14));
    CHECK_THAT(k.upper_mass(0), WithinAbs(0.5, 1e-14));
    CHECK_THROWS_AS(Kernel::tabulated({0, 1}, {1, 1}), KernelError);
    CHECK_THROWS_AS(Kernel::tabulated({0, 1, 1}, {1, 1, 1}), KernelError);
}
