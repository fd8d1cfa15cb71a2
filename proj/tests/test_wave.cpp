#include <catch_amalgamated.hpp>

#include <cmath>

#include "support.hpp"

using namespace testing;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("symmetric gain gives a standing front", "[wave]")
{
    const auto& p = preset("sym8");
    CHECK(std::abs(p.wave.c) < 1e-8);
    CHECK(p.wave.residual < 1e-10);
    CHECK(p.wave.ux.minCoeff() >= 0);
    CHECK(p.wave.u.minCoeff() > p.wave.a1 - 1e-12);
    CHECK(p.wave.u.maxCoeff() < p.wave.a2 + 1e-12);
    CHECK(wave_speed_formula(p.wave, *p.sys.gain) == 0.0);
}

TEST_CASE("asymmetric front speed against independent front tracking", "[wave]")
{
    // RK4 front tracking on [-60, 60], h = 0.01, trapezoidal kernel, slope over t in [30, 60]
    const double c_tracking = -0.2919880278;
    const auto& p = preset("asym");
    CHECK(p.wave.c < 0);
    CHECK_THAT(p.wave.c, WithinAbs(c_tracking, 1e-3));
    CHECK_THAT(wave_speed_formula(p.wave, *p.sys.gain), WithinAbs(p.wave.c, 1e-4));
}

TEST_CASE("evolution oracle tracks the solver speed", "[wave]")
{
    const auto& p = preset("asym");
    auto ev = measure_speed_by_evolution(p.sys, p.grid, 30, p.wave.scheme);
    CHECK_THAT(ev.c_emp, WithinAbs(p.wave.c, 1e-3));
    auto sym = measure_speed_by_evolution(preset("sym8").sys, Grid(20, 512), 20);
    CHECK(std::abs(sym.c_emp) < 1e-3);
    CHECK_THROWS_AS(measure_speed_by_evolution(p.sys, Grid(20, 256), 60), FrontLostError);
}

TEST_CASE("re-solving from the solution is a fixed point", "[wave]")
{
    const auto& p = preset("asym");
    auto again = solve_wave(p.sys, p.grid, p.wave.u, {}, p.wave.c);
    CHECK(again.iterations <= 1);
    CHECK((again.u - p.wave.u).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THAT(again.c, WithinAbs(p.wave.c, 1e-12));
}

TEST_CASE("speed bounds against closed-form quadrature", "[wave]")
{
    // reflected bounds for c < 0, scipy quad at 1e-14
    struct Case {
        double beta, theta, sigma, lower, upper;
    };
    for (const Case& k : {Case{20, 0.4, 0.5, -0.2680444577288989, -0.092353004871177619},
                          Case{20, 0.4, 1.0, -0.5360889154577978, -0.18470600974235524},
                          Case{20, 0.4, 2.0, -1.0721778309155956, -0.36941201948471047},
                          Case{8, 0.45, 1.0, -0.60632023811022928, -0.13666630499995264}}) {
        auto b = speed_bounds(Gain(k.beta, k.theta), Kernel::exponential(k.sigma));
        CHECK(b.reflected);
        CHECK_THAT(b.lower, WithinRel(k.lower, 1e-9));
        CHECK_THAT(b.upper, WithinRel(k.upper, 1e-9));
    }
    const auto& p = preset("asym");
    auto b = speed_bounds(*p.sys.gain, p.sys.kernel);
    CHECK(b.lower <= p.wave.c);
    CHECK(p.wave.c <= b.upper);
}

TEST_CASE("speed bounds are linear in the kernel scale", "[wave]")
{
    Gain F(12, 0.42);
    auto b1 = speed_bounds(F, Kernel::exponential(0.7));
    auto b2 = speed_bounds(F, Kernel::exponential(1.4));
    CHECK_THAT(b2.lower, WithinRel(2 * b1.lower, 1e-14));
    CHECK_THAT(b2.upper, WithinRel(2 * b1.upper, 1e-14));
}

TEST_CASE("speed bounds for c > 0 use the direct formula", "[wave]")
{
    Gain F(20, 0.6);
    auto b = speed_bounds(F, Kernel::exponential(1));
    CHECK_FALSE(b.reflected);
    CHECK(b.lower > 0);
    auto mirror = speed_bounds(Gain(20, 0.4), Kernel::exponential(1));
    CHECK_THAT(b.lower, WithinRel(-mirror.upper, 1e-9));
    CHECK_THAT(b.upper, WithinRel(-mirror.lower, 1e-9));
}

TEST_CASE("symmetric gain gives degenerate bounds", "[wave]")
{
    auto b = speed_bounds(Gain(8, 0.5), Kernel::exponential(1));
    CHECK(b.degenerate);
    CHECK(b.lower == 0.0);
    CHECK(b.upper == 0.0);
}

TEST_CASE("standing wave at zero speed is the wave itself", "[wave]")
{
    const auto& p = preset("sym8");
    const Gain& F = *p.sys.gain;
    auto sw = standing_wave_family(p.wave, F, p.sys.kernel);
    CHECK((sw.u0 - p.wave.u).cwiseAbs().maxCoeff() < 1e-8);
    for (Eigen::Index i = 0; i < p.wave.u.size(); i += 37) CHECK_THAT(sw.F0_nodes[i], WithinAbs(F(p.wave.u[i]), 1e-8));
    CHECK((reconstruct_from_standing(p.wave, sw.u0) - sw.u0).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("standing wave of a moving front is self-consistent", "[wave]")
{
    const auto& p = preset("asym");
    auto sw = standing_wave_family(p.wave, *p.sys.gain, p.sys.kernel);
    CHECK(sw.residual < 1e-6);
    CHECK((sw.u0 - sw.u0_shift).cwiseAbs().maxCoeff() < 1e-6);
    Vec back = reconstruct_from_standing(p.wave, sw.u0);
    CHECK((back - p.wave.u).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("phase-transition preset gives a standing monotone front", "[wave]")
{
    const auto& p = preset("conv");
    CHECK(std::abs(p.wave.c) < 1e-8);
    CHECK(p.wave.ux.minCoeff() >= 0);
}

TEST_CASE("narrow kernel on a wide domain converges quadratically", "[wave]")
{
    // forty kernel widths per side; the Newton system needs refinement of the LU solve here
    auto sys = neural_field(Kernel::exponential(0.5), Gain(10, 0.55));
    auto w = solve_wave(sys, Grid(20, 1024));
    CHECK(w.iterations <= 8);
    auto b = speed_bounds(*sys.gain, sys.kernel);
    CHECK(b.lower <= w.c);
    CHECK(w.c <= b.upper);
}
