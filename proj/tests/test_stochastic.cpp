#include <catch_amalgamated.hpp>

#include <cmath>

#include "support.hpp"
#include "wavegap/stochastic.hpp"

using namespace testing;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

struct Setup {
    SdeProblem p;
    double kappa = 0, Z = 0;
};

Setup setup(double sigma)
{
    const auto& pr = preset("sym8", 256);
    double M = contractivity_M(pr.s, pr.sys.kernel, pr.k, pr.grid).M;
    auto sc = certify_small_c(pr.op, pr.s, pr.wave, pr.k, pr.sys, M);
    Setup s;
    s.kappa = sc.kappa_of_c_solver;
    s.Z = sc.Z;
    s.p.wave = pr.wave;
    s.p.F = *pr.sys.gain;
    s.p.kernel = pr.sys.kernel;
    s.p.m = 2 * s.Z;
    s.p.noise_L = pr.grid.L;
    s.p.noise_width = 2 * pr.grid.L / 32;
    s.p.noise = bump_noise(pr.wave.x, pr.grid.L, 32, sigma);
    return s;
}

SdeOptions quick(int n_traj, double T)
{
    SdeOptions o;
    o.n_traj = n_traj;
    o.T_max = T;
    o.dt = 0.05;
    o.checkpoints = 10;
    o.seed = 5;
    return o;
}

} // namespace

TEST_CASE("rest term vanishes without deviation or curvature", "[stochastic]")
{
    Grid g(10, 200);
    ConvolutionOperator conv(g, Kernel::exponential(1));
    Vec u = g.interior_nodes().unaryExpr([](double x) { return 0.5 + 0.5 * std::tanh(x); });
    Gain F(8, 0.5);
    auto f = [&](double v) { return F(v); };
    auto df = [&](double v) { return F.d1(v); };
    CHECK(rest_term(conv, Vec::Zero(u.size()), u, f, df).cwiseAbs().maxCoeff() == 0.0);
    Vec v = 0.01 * g.interior_nodes().unaryExpr([](double x) { return std::exp(-x * x); });
    auto lin = [](double t) { return 0.3 * t - 0.1; };
    auto dlin = [](double) { return 0.3; };
    CHECK(rest_term(conv, v, u, lin, dlin).cwiseAbs().maxCoeff() < 1e-16);
    double bound = 0.5 * F.sup_d2() * v.cwiseAbs2().maxCoeff();
    CHECK(rest_term(conv, v, u, f, df).cwiseAbs().maxCoeff() <= bound);
}

TEST_CASE("bump noise is admissible", "[stochastic]")
{
    Grid g(20, 256);
    auto nm = bump_noise(g.interior_nodes(), g.L, 32, 0.1);
    CHECK(nm.rank() == 32);
    CHECK(nm.normalization() <= 1.0);
    CHECK(nm.normalization() > 0.99);
    Vec one = Vec::Ones(g.N - 2);
    CHECK(nm.hilbert_schmidt_sq(one, one, g.h()) > 0);
    CHECK(nm.hilbert_schmidt_sq(Vec::Zero(g.N - 2), one, g.h()) == 0.0);
    CHECK_THROWS_AS(bump_noise(g.interior_nodes(), g.L, 0, 0.1), PreconditionError);
}

TEST_CASE("shifted noise profile matches direct evaluation", "[stochastic]")
{
    auto s = setup(0.2);
    Vec dW = Vec::LinSpaced(32, -1, 1);
    for (double shift : {0.0, 0.37, -2.5}) {
        Vec fast = noise_profile(s.p, shift, dW);
        Vec direct = Vec::Zero(fast.size());
        for (int k = 0; k < 32; ++k) {
            double xc = -s.p.noise_L + (k + 0.5) * s.p.noise_width;
            for (Eigen::Index i = 0; i < fast.size(); ++i) {
                double z = (s.p.wave.x[i] + shift - xc) / s.p.noise_width;
                direct[i] += s.p.noise.lambda[k] * dW[k] * std::exp(-0.5 * z * z);
            }
        }
        CHECK((fast - 0.2 * direct).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("the wave is an exact rest state without noise", "[stochastic]")
{
    auto s = setup(0.0);
    ConvolutionOperator conv(s.p.wave.grid, s.p.kernel);
    Vec weight = wave_weight(s.p);
    PhaseState st;
    st.v = Vec::Zero(s.p.wave.u.size());
    std::mt19937_64 rng(1);
    for (int n = 0; n < 200; ++n) step(st, s.p, weight, s.p.wave.D(), conv, 0.05, rng);
    CHECK(st.v.cwiseAbs().maxCoeff() == 0.0);
    CHECK(st.C == 0.0);
    CHECK_THAT(st.t, WithinAbs(10.0, 1e-12));
}

TEST_CASE("lab-frame step keeps the wave to interpolation accuracy", "[stochastic]")
{
    auto s = setup(0.0);
    ConvolutionOperator conv(s.p.wave.grid, s.p.kernel);
    ShiftedWave ref(s.p.wave);
    Vec u = s.p.wave.u;
    double t = 0, C = 0;
    std::mt19937_64 rng(1);
    for (int n = 0; n < 100; ++n) u = step_lab(u, t, C, s.p, ref, conv, 0.05, rng);
    CHECK(deviation_from_lab(u, t, C, s.p, ref).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(std::abs(C) < 1e-6);
}

TEST_CASE("deterministic contraction of a small bump", "[stochastic]")
{
    auto s = setup(0.0);
    auto k = sde_constants(s.p, s.kappa, s.Z);
    REQUIRE(k.kappa_tilde > 0);
    ConvolutionOperator conv(s.p.wave.grid, s.p.kernel);
    Vec weight = wave_weight(s.p);
    PhaseState st;
    st.v = initial_deviation(s.p.wave, s.p.F, 0.5 * k.b_star);
    st.norm = weighted_norm(st.v, weight, s.p.wave.grid.h());
    std::mt19937_64 rng(1);
    std::vector<double> norms;
    for (int n = 0; n < 400; ++n) {
        step(st, s.p, weight, s.p.wave.D(), conv, 0.05, rng);
        norms.push_back(st.norm);
    }
    for (std::size_t i = 40; i < norms.size(); ++i) CHECK(norms[i] <= norms[i - 1] * (1 + 1e-12));
    CHECK(norms.back() < 0.5 * norms.front());
}

TEST_CASE("noiseless ensembles never escape", "[stochastic]")
{
    auto s = setup(0.0);
    auto o = quick(4, 20);
    o.init_fraction = 0.5;
    auto st = run_ensemble(s.p, s.kappa, s.Z, o);
    CHECK(st.escapes == 0);
    CHECK_THAT(st.bound, WithinAbs(0.25, 1e-15));
    CHECK(st.bound_respected);
    for (std::size_t j = 1; j < st.curve.mean.size(); ++j) CHECK(st.curve.mean[j] <= st.curve.mean[j - 1] * (1 + 1e-12));
    CHECK(st.curve.within_band);
}

TEST_CASE("ensemble started on the wave", "[stochastic]")
{
    auto s = setup(0.05);
    auto o = quick(4, 5);
    o.init_fraction = 1e-300;
    auto st = run_ensemble(s.p, s.kappa, s.Z, o);
    CHECK(st.escapes == 0);
    CHECK(st.bound < 1e-100);
}

TEST_CASE("fixed seeds reproduce trajectories across thread counts", "[stochastic]")
{
    auto s = setup(0.08);
    auto o = quick(6, 10);
    o.keep_paths = true;
    auto a = run_ensemble(s.p, s.kappa, s.Z, o);
    auto b = run_ensemble(s.p, s.kappa, s.Z, o);
    o.threads = 3;
    auto c = run_ensemble(s.p, s.kappa, s.Z, o);
    for (int i = 0; i < 6; ++i) {
        CHECK(a.trajectories[i].norm == b.trajectories[i].norm);
        CHECK(a.trajectories[i].norm == c.trajectories[i].norm);
        CHECK(a.trajectories[i].C == c.trajectories[i].C);
    }
    CHECK(a.trajectories[0].norm != a.trajectories[1].norm);
}

TEST_CASE("stochastic constants and hypothesis flags", "[stochastic]")
{
    auto s = setup(0.05);
    auto k = sde_constants(s.p, s.kappa, s.Z);
    CHECK(k.in_hypothesis);
    CHECK(k.M_R > 0);
    CHECK(k.b_star > 0);
    CHECK_THAT(k.kappa_tilde, WithinRel(s.kappa - k.noise_term - k.advection_term, 1e-14));
    s.p.m = 0.5 * s.Z;
    CHECK_FALSE(sde_constants(s.p, s.kappa, s.Z).in_hypothesis);
}

TEST_CASE("out-of-hypothesis noise is recorded, not rejected", "[stochastic]")
{
    auto s = setup(2.0);
    auto st = run_ensemble(s.p, s.kappa, s.Z, quick(4, 20));
    CHECK_FALSE(st.constants.in_hypothesis);
    CHECK(st.constants.kappa_tilde < 0);
    CHECK(st.trajectories.size() == 4);
}

TEST_CASE("Wilson score intervals", "[stochastic]")
{
    struct Case {
        int k, n;
        double lo, hi, se;
    };
    for (const Case& c : {Case{0, 500, 0, 0.0076246185309033626, 0.00099800399201596798},
                          Case{12, 500, 0.013781177149521824, 0.041477459691898179, 0.0069034180409911928},
                          Case{250, 500, 0.45634046916507415, 0.5436595308349258, 0.022338352580438516}}) {
        auto w = wilson(c.k, c.n);
        CHECK_THAT(w.lo, WithinAbs(c.lo, 1e-15));
        CHECK_THAT(w.hi, WithinAbs(c.hi, 1e-15));
        CHECK_THAT(w.standard_error, WithinAbs(c.se, 1e-15));
    }
}
