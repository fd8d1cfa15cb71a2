#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <boost/math/interpolators/pchip.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "wavegap/discretize.hpp"
#include "wavegap/errors.hpp"
#include "wavegap/model.hpp"

namespace wavegap {

using Pchip = boost::math::interpolators::pchip<std::vector<double>>;

/// First-derivative discretization used by the wave and spectral pipeline.
struct DerivativeScheme {
    int order = 6;      ///< centered order when upwinding is off or c = 0
    bool upwind = true; ///< 5th-order upwind-biased stencil whenever c != 0

    Stencil first(double h, double c) const
    {
        if (upwind && std::abs(c) > 1e-10) return Stencil::first_derivative(6, h, c > 0 ? 1 : -1);
        return Stencil::first_derivative(order, h);
    }
    Stencil second(double h) const { return Stencil::second_derivative(order == 8 ? 8 : 6, h); }
};

struct WaveOptions {
    double tol = 1e-10;
    int max_iter = 50;
    double monotone_floor = 1e-12; ///< relative level below which u_x is treated as tail noise
    double boundary_strip = 1.0;   ///< width next to +-L where the far-field closure dominates u_x
    double strip_floor = 1e-6;     ///< relative level tolerated inside the strip
    DerivativeScheme scheme;
};

/// Traveling wave (u, c) on the interior nodes of a grid.
struct WaveSolution {
    Grid grid;
    Vec x, u, ux, uxx;
    double c = 0;
    double a1 = 0, a = 0, a2 = 0;
    double residual = 0;
    int iterations = 0;
    DerivativeScheme scheme;

    Stencil D() const { return scheme.first(grid.h(), c); }
    Vec full() const { return with_boundary(u, a1, a2); }
};

namespace detail {

/// Boundary-node and tail contributions of w * g(u) on interior rows.
inline Vec boundary_source(const ConvolutionOperator& conv, double gl, double gr)
{
    const int N = conv.grid().N, n = N - 2;
    Vec b(n);
    for (int i = 0; i < n; ++i)
        b[i] = conv.entry(i + 1, 0) * gl + conv.entry(i + 1, N - 1) * gr + conv.tail_left()[i + 1] * gl +
               conv.tail_right()[i + 1] * gr;
    return b;
}

/// Interpolation weights for the value at x = 0 between two interior nodes.
inline std::pair<int, double> origin_weights(const Grid& grid)
{
    const double h = grid.h();
    int j = static_cast<int>(std::floor(grid.L / h));
    if (grid.x(j + 1) <= 0) ++j;
    double t = (0 - grid.x(j)) / h;
    return {j - 1, t};
}

} // namespace detail

inline Vec logistic_ramp(const Grid& grid, double a1, double a2, double scale)
{
    Vec x = grid.interior_nodes();
    Vec u(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) u[i] = a1 + (a2 - a1) / (1 + std::exp(-x[i] / scale));
    return u;
}

/// Newton solve of c u_x + d u_xx + S(u, w * g(u)) = 0 with u(0) = a.
inline WaveSolution solve_wave(const BistableSystem& sys, const Grid& grid, std::optional<Vec> init = {},
                               const WaveOptions& opt = {}, std::optional<double> c_init = {})
{
    auto [a1, a, a2] = find_fixed_points(sys);
    ConvolutionOperator conv(grid, sys.kernel);
    const int n = grid.N - 2;
    const double h = grid.h();
    const Mat W = conv.interior_matrix();
    const Vec bnd = detail::boundary_source(conv, sys.g(a1), sys.g(a2));
    const Stencil D2 = opt.scheme.second(h);
    const auto [jo, to] = detail::origin_weights(grid);

    Vec u = init ? *init : logistic_ramp(grid, a1, a2, sys.kernel.scale());
    if (u.size() != n) throw ShapeError("initial profile length does not match grid interior");
    double c = c_init.value_or(0.0);

    Vec gu(n), dgu(n), z(n);
    auto residual = [&](const Vec& v, double cc, Vec& R) {
        for (int i = 0; i < n; ++i) gu[i] = sys.g(v[i]);
        z.noalias() = W * gu;
        z += bnd;
        Stencil D = opt.scheme.first(h, cc);
        R.resize(n + 1);
        R.head(n) = cc * D.apply(v, a1, a2);
        if (sys.d != 0) R.head(n) += sys.d * D2.apply(v, a1, a2);
        for (int i = 0; i < n; ++i) R[i] += sys.S(v[i], z[i]);
        R[n] = (1 - to) * v[jo] + to * v[jo + 1] - a;
        return R.cwiseAbs().maxCoeff();
    };

    Vec R;
    double nr = residual(u, c, R);
    int it = 0;
    Mat J(n + 1, n + 1);
    for (; it < opt.max_iter && !(nr < opt.tol); ++it) {
        Stencil D = opt.scheme.first(h, c);
        for (int i = 0; i < n; ++i) dgu[i] = sys.dg(u[i]);
        J.setZero();
        J.topLeftCorner(n, n) = W * dgu.asDiagonal();
        for (int i = 0; i < n; ++i) {
            double r = sys.dS2(u[i], z[i]);
            J.row(i).head(n) *= r;
            J(i, i) += sys.dS1(u[i], z[i]);
        }
        for (int i = 0; i < n; ++i)
            for (const auto& [off, w] : D.taps()) {
                int j = i + off;
                if (j >= 0 && j < n) J(i, j) += c * w;
            }
        if (sys.d != 0)
            for (int i = 0; i < n; ++i)
                for (const auto& [off, w] : D2.taps()) {
                    int j = i + off;
                    if (j >= 0 && j < n) J(i, j) += sys.d * w;
                }
        J.col(n).head(n) = D.apply(u, a1, a2);
        J(n, jo) = 1 - to;
        J(n, jo + 1) = to;
        Eigen::PartialPivLU<Mat> lu(J);
        Vec dz = lu.solve(-R);
        // partial pivoting loses digits on wide domains; two refinement sweeps restore them
        for (int k = 0; k < 2; ++k) dz += lu.solve(-R - J * dz);
        double lam = 1;
        Vec un(n), Rn;
        double cn = c, nn = nr;
        while (true) {
            un = u + lam * dz.head(n);
            cn = c + lam * dz[n];
            nn = residual(un, cn, Rn);
            if (nn < (1 - 1e-4 * lam) * nr || lam < 1e-3) break;
            lam *= 0.5;
        }
        if (!std::isfinite(nn)) throw NewtonDivergence("wave Newton iteration produced non-finite values");
        u = un;
        c = cn;
        R = Rn;
        nr = nn;
    }
    if (!(nr < opt.tol))
        throw NewtonDivergence("wave Newton iteration did not reach tolerance after " +
                               std::to_string(opt.max_iter) + " iterations (residual " + std::to_string(nr) + ")");

    WaveSolution sol;
    sol.grid = grid;
    sol.x = grid.interior_nodes();
    sol.u = u;
    sol.c = c;
    sol.a1 = a1;
    sol.a = a;
    sol.a2 = a2;
    sol.residual = nr;
    sol.iterations = it;
    sol.scheme = opt.scheme;
    Stencil D = sol.D();
    sol.ux = D.apply_extrapolated(u, a1, a2);
    sol.uxx = D.apply_extrapolated(sol.ux, 0, 0);
    const double umax = sol.ux.maxCoeff();
    for (int i = 0; i < n; ++i) {
        const bool strip = std::abs(sol.x[i]) > grid.L - opt.boundary_strip;
        if (sol.ux[i] <= 0 && std::abs(sol.ux[i]) > (strip ? opt.strip_floor : opt.monotone_floor) * umax)
            throw MonotonicityError("profile derivative is not positive at x = " + std::to_string(sol.x[i]));
    }
    return sol;
}

struct EvolutionResult {
    double c_emp = 0;
    std::vector<double> t, position;
};

/// Method-of-lines RK4 from a step at x = 0; slope of the level-a crossing over the second half.
inline EvolutionResult measure_speed_by_evolution(const BistableSystem& sys, const Grid& grid, double T_end,
                                                  const DerivativeScheme& scheme = {})
{
    auto [a1, a, a2] = find_fixed_points(sys);
    ConvolutionOperator conv(grid, sys.kernel);
    const int n = grid.N - 2;
    const double h = grid.h();
    const Mat W = conv.interior_matrix();
    const Vec bnd = detail::boundary_source(conv, sys.g(a1), sys.g(a2));
    const Stencil D2 = scheme.second(h);
    const double dt0 = 0.25 * std::min(1.0, h * h / (2 * sys.d + 1e-300));
    const int steps = static_cast<int>(std::ceil(T_end / dt0));
    const double dt = T_end / steps;
    Vec x = grid.interior_nodes();
    Vec u(n);
    for (int i = 0; i < n; ++i) u[i] = x[i] < 0 ? a1 : a2;

    Vec gu(n);
    auto rhs = [&](const Vec& v) {
        for (int i = 0; i < n; ++i) gu[i] = sys.g(v[i]);
        Vec z = W * gu + bnd;
        Vec out(n);
        for (int i = 0; i < n; ++i) out[i] = sys.S(v[i], z[i]);
        if (sys.d != 0) out += sys.d * D2.apply(v, a1, a2);
        return out;
    };
    auto crossing = [&](const Vec& v) {
        for (int i = 0; i + 1 < n; ++i)
            if (v[i] < a && v[i + 1] >= a) return x[i] + (a - v[i]) / (v[i + 1] - v[i]) * h;
        throw FrontLostError("level-a crossing not found");
    };

    EvolutionResult res;
    for (int s = 1; s <= steps; ++s) {
        Vec k1 = rhs(u);
        Vec k2 = rhs(u + 0.5 * dt * k1);
        Vec k3 = rhs(u + 0.5 * dt * k2);
        Vec k4 = rhs(u + dt * k3);
        u += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
        double X = crossing(u);
        if (std::abs(X) > grid.L / 2) throw FrontLostError("front left [-L/2, L/2] at t = " + std::to_string(s * dt));
        res.t.push_back(s * dt);
        res.position.push_back(X);
    }
    double st = 0, sx = 0, stt = 0, stx = 0;
    int m = 0;
    for (std::size_t k = 0; k < res.t.size(); ++k) {
        if (res.t[k] < T_end / 2) continue;
        st += res.t[k];
        sx += res.position[k];
        stt += res.t[k] * res.t[k];
        stx += res.t[k] * res.position[k];
        ++m;
    }
    if (m < 2) throw FrontLostError("too few samples to fit the front speed");
    res.c_emp = (m * stx - st * sx) / (m * stt - st * st);
    return res;
}

/// Integral of x - F(x) over [lo, hi].
inline double gain_defect_integral(const Gain& F, double lo, double hi)
{
    auto f = [&](double x) { return x - F(x); };
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, lo, hi, 15, 1e-15);
}

/// c = int_{a1}^{a2} (x - F) dx / int u_x^2 F'(u) dx.
inline double wave_speed_formula(const WaveSolution& sol, const Gain& F)
{
    double num = gain_defect_integral(F, sol.a1, sol.a2);
    double den = 0;
    for (Eigen::Index i = 0; i < sol.u.size(); ++i) den += sol.ux[i] * sol.ux[i] * F.d1(sol.u[i]);
    den *= sol.grid.h();
    if (!(den >= 1e-14)) throw DivisionError("wave-speed denominator vanishes");
    return num / den;
}

struct SpeedBounds {
    double lower = 0, upper = 0;
    double numerator = 0;     ///< int_{a1}^{a2} (x - F)
    double lower_defect = 0;  ///< int_{a1}^{a} (x - F) > 0
    double upper_excess = 0;  ///< int_{a}^{a2} (F - x) > 0
    double a1 = 0, a = 0, a2 = 0;
    bool degenerate = false;
    bool reflected = false;   ///< bounds obtained for F~(u) = 1 - F(1 - u) and negated
};

/// Bounds on c for the exponential kernel of scale sigma and convex-concave F.
inline SpeedBounds speed_bounds(const Gain& F, const Kernel& kernel)
{
    if (kernel.family() != KernelFamily::Exponential)
        throw PreconditionError("speed bounds are only available for the two-sided exponential kernel");
    const double sigma = kernel.scale();
    BistableSystem sys = neural_field(kernel, F);
    auto [a1, a, a2] = find_fixed_points(sys);
    {
        const int samples = 4096;
        double lo = a1 - 1, hi = a2 + 1, peak = 0;
        std::vector<double> v(samples + 1);
        for (int k = 0; k <= samples; ++k) {
            v[k] = F.d2(lo + (hi - lo) * k / samples);
            peak = std::max(peak, std::abs(v[k]));
        }
        int changes = 0, last = 0;
        for (double s : v) {
            if (std::abs(s) <= 1e-12 * peak) continue;
            int sg = s > 0 ? 1 : -1;
            if (last != 0 && sg != last) ++changes;
            last = sg;
        }
        if (changes > 1) throw ConvexConcaveError("F'' changes sign more than once");
    }
    SpeedBounds b;
    b.a1 = a1;
    b.a = a;
    b.a2 = a2;
    b.numerator = gain_defect_integral(F, a1, a2);
    b.lower_defect = gain_defect_integral(F, a1, a);
    b.upper_excess = -gain_defect_integral(F, a, a2);
    const double scale_num = std::abs(b.numerator);
    if (scale_num <= 1e-13 * (a2 - a1) * (a2 - a1)) {
        b.degenerate = true;
        return b;
    }
    if (b.numerator > 0) {
        b.lower = sigma / (std::sqrt(2.0) * (a2 - a1)) * b.numerator / std::sqrt(b.lower_defect);
        b.upper = sigma / 4 * b.numerator / b.upper_excess;
    } else {
        b.reflected = true;
        b.lower = -sigma / 4 * scale_num / b.lower_defect;
        b.upper = -sigma / (std::sqrt(2.0) * (a2 - a1)) * scale_num / std::sqrt(b.upper_excess);
    }
    return b;
}

/// Standing wave u0 = w * F(u) = u - c u_x with gain F0 = F o u o (u0)^{-1}.
struct StandingWave {
    Vec u0;        ///< w * F(u) on interior nodes
    Vec u0_shift;  ///< u - c u_x
    Vec F0_nodes;  ///< F0(u0(x_i))
    double residual = 0; ///< ||u0 - w * F0(u0)||_inf
    double a1 = 0, a2 = 0;
    std::vector<double> inv_y, inv_x, prof_x, prof_u;

    /// F0 evaluated by monotone cubic interpolation of the inverse.
    double F0(const Gain& F, double y) const
    {
        if (y < inv_y.front()) return F(a1);
        if (y > inv_y.back()) return F(a2);
        Pchip inv{std::vector<double>(inv_y), std::vector<double>(inv_x)};
        Pchip prof{std::vector<double>(prof_x), std::vector<double>(prof_u)};
        return F(prof(inv(y)));
    }
};

inline StandingWave standing_wave_family(const WaveSolution& sol, const Gain& F, const Kernel& kernel)
{
    ConvolutionOperator conv(sol.grid, kernel);
    const Eigen::Index n = sol.u.size();
    Vec Fu(n + 2);
    Fu[0] = F(sol.a1);
    Fu[n + 1] = F(sol.a2);
    for (Eigen::Index i = 0; i < n; ++i) Fu[i + 1] = F(sol.u[i]);
    StandingWave sw;
    sw.a1 = sol.a1;
    sw.a2 = sol.a2;
    sw.u0 = conv.apply(Fu, F(sol.a1), F(sol.a2)).segment(1, n);
    sw.u0_shift = sol.u - sol.c * sol.ux;

    const double span = sol.a2 - sol.a1;
    for (Eigen::Index i = 1; i < n; ++i) {
        double du = sw.u0[i] - sw.u0[i - 1];
        if (du < 0 && std::abs(du) > 1e-13 * span)
            throw MonotonicityError("standing wave is not increasing at x = " + std::to_string(sol.x[i]));
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!sw.inv_y.empty() && !(sw.u0[i] > sw.inv_y.back())) continue;
        sw.inv_y.push_back(sw.u0[i]);
        sw.inv_x.push_back(sol.x[i]);
    }
    if (sw.inv_y.size() < 4) throw MonotonicityError("standing wave has too few strictly increasing nodes");
    sw.prof_x.assign(sol.x.data(), sol.x.data() + n);
    sw.prof_u.assign(sol.u.data(), sol.u.data() + n);

    Pchip inv{std::vector<double>(sw.inv_y), std::vector<double>(sw.inv_x)};
    Pchip prof{std::vector<double>(sw.prof_x), std::vector<double>(sw.prof_u)};
    sw.F0_nodes.resize(n);
    Vec F0full(n + 2);
    F0full[0] = F(sol.a1);
    F0full[n + 1] = F(sol.a2);
    for (Eigen::Index i = 0; i < n; ++i) {
        double y = std::clamp(sw.u0[i], sw.inv_y.front(), sw.inv_y.back());
        double v = F(prof(inv(y)));
        sw.F0_nodes[i] = v;
        F0full[i + 1] = v;
    }
    Vec back = conv.apply(F0full, F(sol.a1), F(sol.a2)).segment(1, n);
    sw.residual = (back - sw.u0).cwiseAbs().maxCoeff();
    return sw;
}

/// u(x) = int_0^inf e^{-s} u0(x + c s) ds evaluated at the interior nodes.
inline Vec reconstruct_from_standing(const WaveSolution& sol, const Vec& u0)
{
    const Eigen::Index n = u0.size();
    const double h = sol.grid.h();
    std::vector<double> data(n + 2);
    data[0] = sol.a1;
    data[n + 1] = sol.a2;
    for (Eigen::Index i = 0; i < n; ++i) data[i + 1] = u0[i];
    boost::math::interpolators::cardinal_cubic_b_spline<double> spline(data.begin(), data.end(), -sol.grid.L, h,
                                                                       0.0, 0.0);
    const double L = sol.grid.L;
    auto value = [&](double x) {
        if (x <= -L) return sol.a1;
        if (x >= L) return sol.a2;
        return spline(x);
    };
    Vec out(n);
    if (sol.c == 0) return u0;
    boost::math::quadrature::exp_sinh<double> integrator;
    for (Eigen::Index i = 0; i < n; ++i) {
        double xi = sol.x[i];
        auto f = [&](double s) { return std::exp(-s) * value(xi + sol.c * s); };
        out[i] = integrator.integrate(f, 1e-13);
    }
    return out;
}

} // namespace wavegap
