#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "wavegap/discretize.hpp"
#include "wavegap/errors.hpp"
#include "wavegap/kernel.hpp"

namespace wavegap {

/// Logistic gain F(u) = 1 / (1 + exp(-beta (u - theta))).
struct Gain {
    double beta = 20;
    double theta = 0.4;

    Gain() = default;
    Gain(double b, double t) : beta(b), theta(t)
    {
        if (!(beta > 0)) throw PreconditionError("gain steepness must be positive");
    }

    double operator()(double u) const { return 1 / (1 + std::exp(-beta * (u - theta))); }
    double d1(double u) const
    {
        double F = (*this)(u);
        return beta * F * (1 - F);
    }
    double d2(double u) const
    {
        double F = (*this)(u);
        return beta * beta * F * (1 - F) * (1 - 2 * F);
    }
    /// F(u + v) - F(u) without cancellation for small v.
    double increment(double u, double v) const
    {
        return -(*this)(u + v) * (1 - (*this)(u)) * std::expm1(-beta * v);
    }
    double inflection() const { return theta; }
    double sup_d1() const { return beta / 4; }
    double sup_d2() const { return beta * beta / (6 * std::sqrt(3.0)); }
};

/// u_t = d u_xx + S(u, w * g(u)).
struct BistableSystem {
    std::string name = "custom";
    Kernel kernel = Kernel::exponential(1);
    std::function<double(double, double)> S, dS1, dS2;
    std::function<double(double)> g, dg;
    double d = 0;
    std::optional<Gain> gain; ///< set for the neural-field preset (S = -x + g, g = F)
};

/// Neural field u_t = -u + w * F(u).
inline BistableSystem neural_field(const Kernel& kernel, const Gain& F, double d = 0)
{
    BistableSystem s;
    s.name = "neural_field";
    s.kernel = kernel;
    s.S = [](double x, double g) { return -x + g; };
    s.dS1 = [](double, double) { return -1.0; };
    s.dS2 = [](double, double) { return 1.0; };
    s.g = [F](double u) { return F(u); };
    s.dg = [F](double u) { return F.d1(u); };
    s.d = d;
    s.gain = F;
    return s;
}

/// Convolution phase-transition model S(x, g) = lambda g - x + (1 - lambda) x + k x (x - a)(1 - x), g = id.
inline BistableSystem phase_transition(const Kernel& kernel, double lambda, double k, double a, double d = 0)
{
    if (!(lambda > 0)) throw PreconditionError("phase-transition coupling must be positive");
    if (!(a > 0 && a < 1)) throw PreconditionError("phase-transition threshold must lie in (0, 1)");
    BistableSystem s;
    s.name = "phase_transition";
    s.kernel = kernel;
    s.S = [=](double x, double g) { return lambda * g - x + (1 - lambda) * x + k * x * (x - a) * (1 - x); };
    s.dS1 = [=](double x, double) {
        return -lambda + k * (-3 * x * x + 2 * (1 + a) * x - a);
    };
    s.dS2 = [=](double, double) { return lambda; };
    s.g = [](double u) { return u; };
    s.dg = [](double) { return 1.0; };
    s.d = d;
    return s;
}

/// Zeros a1 < a < a2 of x -> S(x, g(x)).
inline std::array<double, 3> find_fixed_points(const BistableSystem& sys, double lo = -10, double hi = 10)
{
    auto phi = [&](double x) { return sys.S(x, sys.g(x)); };
    constexpr int cells = 1024;
    std::vector<double> roots;
    double xp = lo, fp = phi(lo);
    if (fp == 0) roots.push_back(lo);
    for (int k = 1; k <= cells; ++k) {
        double x = lo + (hi - lo) * k / cells;
        double f = phi(x);
        if (f == 0) {
            roots.push_back(x);
        } else if (fp != 0 && (f > 0) != (fp > 0)) {
            std::uintmax_t it = 200;
            auto r = boost::math::tools::bisect(phi, xp, x, boost::math::tools::eps_tolerance<double>(50), it);
            double z = 0.5 * (r.first + r.second);
            auto dphi = [&](double t) {
                double e = 1e-7 * (1 + std::abs(t));
                return (phi(t + e) - phi(t - e)) / (2 * e);
            };
            for (int n = 0; n < 3; ++n) {
                double dz = dphi(z);
                if (dz == 0) break;
                double znew = z - phi(z) / dz;
                if (!(znew > xp && znew < x)) break;
                z = znew;
            }
            roots.push_back(z);
        }
        xp = x;
        fp = f;
    }
    if (roots.size() != 3)
        throw RootCountError("expected three zeros of S(x, g(x)) on [" + std::to_string(lo) + ", " +
                             std::to_string(hi) + "], found " + std::to_string(roots.size()));
    auto slope = [&](double t) {
        double e = 1e-6 * (1 + std::abs(t));
        return (phi(t + e) - phi(t - e)) / (2 * e);
    };
    if (!(slope(roots[0]) < 0 && slope(roots[1]) > 0 && slope(roots[2]) < 0))
        throw StabilityError("zeros of S(x, g(x)) do not have the bistable sign pattern (-, +, -)");
    return {roots[0], roots[1], roots[2]};
}

/// f = -dS1, r = dS2, q = g' sampled along the profile, with bounds.
struct CoefficientFields {
    Vec f, r, q;
    double f_inf = 0, f_sup = 0, r_inf = 0, r_sup = 0, q_inf = 0, q_sup = 0;
};

/// u_interior holds nodes 1..N-2; nodes 0 and N-1 carry a1 and a2.
inline CoefficientFields coefficient_fields(const BistableSystem& sys, const ConvolutionOperator& conv,
                                            const Vec& u_interior, double a1, double a2)
{
    const Eigen::Index n = u_interior.size();
    if (n != conv.grid().N - 2) throw ShapeError("profile length does not match the convolution grid");
    Vec gfull(n + 2);
    gfull[0] = sys.g(a1);
    gfull[n + 1] = sys.g(a2);
    for (Eigen::Index i = 0; i < n; ++i) gfull[i + 1] = sys.g(u_interior[i]);
    Vec wg = conv.apply(gfull, sys.g(a1), sys.g(a2));
    CoefficientFields c;
    c.f.resize(n);
    c.r.resize(n);
    c.q.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double u = u_interior[i], z = wg[i + 1];
        c.f[i] = -sys.dS1(u, z);
        c.r[i] = sys.dS2(u, z);
        c.q[i] = sys.dg(u);
    }
    c.f_inf = c.f.minCoeff();
    c.f_sup = c.f.maxCoeff();
    c.r_inf = c.r.minCoeff();
    c.r_sup = c.r.maxCoeff();
    c.q_inf = c.q.minCoeff();
    c.q_sup = c.q.maxCoeff();
    if (!(c.r_inf > 0)) throw PositivityError("coefficient r is not strictly positive");
    if (!(c.q_inf > 0)) throw PositivityError("coefficient q is not strictly positive");
    return c;
}

} // namespace wavegap
