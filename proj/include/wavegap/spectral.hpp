#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "wavegap/discretize.hpp"
#include "wavegap/errors.hpp"
#include "wavegap/model.hpp"
#include "wavegap/wave.hpp"

namespace wavegap {

/// Dense frozen-wave operator L# = A + P on interior nodes (zero far field).
struct FrozenOperator {
    Mat L, Ladj, A, P;
    double c = 0, d = 0, h = 0;

    double norm_inf() const { return L.cwiseAbs().rowwise().sum().maxCoeff(); }
};

/// L# v = -f v + c D1 v + d D2 v + r (w * (q v)).
inline FrozenOperator assemble(const CoefficientFields& k, double c, double d, const ConvolutionOperator& conv,
                               const DerivativeScheme& scheme = {})
{
    const Eigen::Index n = k.f.size();
    if (n != conv.grid().N - 2 || k.r.size() != n || k.q.size() != n)
        throw ShapeError("coefficient fields do not match the grid interior");
    const double h = conv.grid().h();
    FrozenOperator op;
    op.c = c;
    op.d = d;
    op.h = h;
    op.P = k.r.asDiagonal() * conv.interior_matrix() * k.q.asDiagonal();
    op.A = c * scheme.first(h, c).matrix(n);
    if (d != 0) op.A += d * scheme.second(h).matrix(n);
    op.A.diagonal() -= k.f;
    op.L = op.A + op.P;
    op.Ladj = op.L.transpose();
    return op;
}

/// Positive zero-eigenvector of L#*, normalized by <u_x, psi> = 1 (uniform interior weights h).
inline Vec adjoint_eigenfunction(const FrozenOperator& op, const Vec& ux, double shift = 1e-8, int max_iter = 500)
{
    const Eigen::Index n = op.Ladj.rows();
    Mat S = op.Ladj;
    S.diagonal().array() -= shift;
    Eigen::PartialPivLU<Mat> lu(S);
    Vec psi = Vec::Ones(n);
    bool done = false;
    for (int it = 0; it < max_iter; ++it) {
        Vec y = lu.solve(psi);
        y /= y.cwiseAbs().maxCoeff();
        if (y.sum() < 0) y = -y;
        Vec Ly = op.Ladj * y;
        double lam = y.dot(Ly) / y.dot(y);
        double res = (Ly - lam * y).cwiseAbs().maxCoeff();
        psi = y;
        if (res < 1e-10) {
            done = true;
            break;
        }
    }
    if (!done) throw ConvergenceError("adjoint inverse iteration did not converge");
    if (psi.minCoeff() < -1e-10 * psi.maxCoeff())
        throw PositivityError("adjoint eigenfunction changes sign (min/max = " +
                              std::to_string(psi.minCoeff() / psi.maxCoeff()) + ")");
    psi /= op.h * ux.dot(psi);
    return psi;
}

/// Affine fit of log values on a window.
struct TailFit {
    double slope = 0, intercept = 0, misfit = 0;
    double operator()(double x) const { return std::exp(intercept + slope * x); }
};

inline TailFit fit_log_affine(const Vec& x, const Vec& v, Eigen::Index lo, Eigen::Index hi)
{
    const Eigen::Index m = hi - lo + 1;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (Eigen::Index i = lo; i <= hi; ++i) {
        double y = std::log(v[i]);
        sx += x[i];
        sy += y;
        sxx += x[i] * x[i];
        sxy += x[i] * y;
    }
    TailFit f;
    double den = m * sxx - sx * sx;
    f.slope = den != 0 ? (m * sxy - sx * sy) / den : 0;
    f.intercept = (sy - f.slope * sx) / m;
    for (Eigen::Index i = lo; i <= hi; ++i)
        f.misfit = std::max(f.misfit, std::abs(std::log(v[i]) - f.intercept - f.slope * x[i]));
    return f;
}

/// Window [lo, hi] where both a and b exceed threshold times their maxima.
inline std::pair<Eigen::Index, Eigen::Index> trusted_window(const Vec& a, const Vec& b, double threshold)
{
    const double ma = a.maxCoeff(), mb = b.maxCoeff();
    Eigen::Index lo = -1, hi = -1;
    for (Eigen::Index i = 0; i < a.size(); ++i)
        if (a[i] > threshold * ma && b[i] > threshold * mb) {
            if (lo < 0) lo = i;
            hi = i;
        }
    if (lo < 0 || hi - lo < 16) throw TailFitError("trusted interior is empty");
    return {lo, hi};
}

/// Replaces v outside [lo, hi] by exponential extrapolation fitted on the window edges.
inline Vec extend_exponentially(const Vec& x, const Vec& v, Eigen::Index lo, Eigen::Index hi, TailFit* left = nullptr,
                                TailFit* right = nullptr)
{
    const Eigen::Index m = std::max<Eigen::Index>(8, (hi - lo) / 20);
    TailFit fl = fit_log_affine(x, v, lo, lo + m - 1);
    TailFit fr = fit_log_affine(x, v, hi - m + 1, hi);
    Vec out = v;
    for (Eigen::Index i = 0; i < lo; ++i) out[i] = fl(x[i]);
    for (Eigen::Index i = hi + 1; i < x.size(); ++i) out[i] = fr(x[i]);
    if (left) *left = fl;
    if (right) *right = fr;
    return out;
}

/// Eigenfunctions, densities and the Markov kernel p0 of a frozen operator.
struct SpectralData {
    Vec x;
    double h = 0;
    Vec ux, psi;
    Vec Pux, Pstar_psi;
    Vec rho, nu, mu, mu_star, m;
    Vec mu_ext; ///< mu with fitted exponential tails outside the trusted window
    double Z_mu = 0, Z_mu_alt = 0;
    Mat p0;
    Eigen::Index lo = 0, hi = 0; ///< trusted window
    TailFit rho_left, rho_right, mu_left, mu_right;
    double trusted_threshold = 1e-8;
    double boundary_strip = 1.0;

    double integral(const Vec& v) const { return h * v.sum(); }
    double mean(const Vec& dens, const Vec& g) const { return h * dens.dot(g); }
    double variance(const Vec& dens, const Vec& g) const
    {
        double m1 = mean(dens, g);
        return h * dens.dot(g.cwiseProduct(g)) - m1 * m1;
    }
};

inline SpectralData build_densities(const FrozenOperator& op, const Vec& x, const Vec& ux, const Vec& psi,
                                    const CoefficientFields& k, double trusted_threshold = 1e-8,
                                    double boundary_strip = 1.0)
{
    if (psi.minCoeff() < -1e-10 * psi.maxCoeff()) throw PositivityError("psi must be positive");
    SpectralData s;
    s.x = x;
    s.h = op.h;
    s.ux = ux;
    s.psi = psi;
    s.trusted_threshold = trusted_threshold;
    s.Pux = op.P * ux;
    s.Pstar_psi = op.P.transpose() * psi;
    s.Z_mu = s.h * s.Pux.dot(psi);
    s.Z_mu_alt = s.h * ux.dot(s.Pstar_psi);
    if (std::abs(s.Z_mu - s.Z_mu_alt) > 1e-6 * std::abs(s.Z_mu))
        throw NormalizationError("the two computations of Z_mu disagree");
    s.mu = s.Pux.cwiseProduct(psi) / s.Z_mu;
    s.mu_star = ux.cwiseProduct(s.Pstar_psi) / s.Z_mu;
    s.nu = ux.cwiseProduct(psi);
    s.m = k.q.cwiseQuotient(k.r);

    auto [lo, hi] = trusted_window(ux, psi, trusted_threshold);
    const double L = x[x.size() - 1] + s.h;
    while (lo < hi && x[lo] < -L + boundary_strip) ++lo;
    while (hi > lo && x[hi] > L - boundary_strip) --hi;
    if (hi - lo < 16) throw TailFitError("trusted interior is empty");
    s.boundary_strip = boundary_strip;
    s.lo = lo;
    s.hi = hi;
    Vec ratio = Vec::Ones(x.size());
    for (Eigen::Index i = lo; i <= hi; ++i) ratio[i] = psi[i] / ux[i];
    s.rho = extend_exponentially(x, ratio, lo, hi, &s.rho_left, &s.rho_right);
    Vec mu_w = Vec::Ones(x.size());
    for (Eigen::Index i = lo; i <= hi; ++i) mu_w[i] = s.mu[i];
    s.mu_ext = extend_exponentially(x, mu_w, lo, hi, &s.mu_left, &s.mu_right);

    const Eigen::Index n = ux.size();
    s.p0.resize(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i) s.p0(i, j) = s.Pux[i] > 0 ? op.P(i, j) * ux[j] / s.Pux[i] : 0.0;
    return s;
}

/// Random smooth test function: 16 random sinusoids under a bump supported in [-R, R].
template <class Rng>
Vec random_test_function(const Vec& x, double R, Rng& rng, double max_frequency = 3.0)
{
    std::uniform_real_distribution<double> freq(0.0, max_frequency), phase(0.0, 2 * std::numbers::pi);
    std::normal_distribution<double> amp(0.0, 1.0);
    double k[16], p[16], a[16];
    for (int j = 0; j < 16; ++j) {
        k[j] = freq(rng);
        p[j] = phase(rng);
        a[j] = amp(rng);
    }
    Vec h(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        double t = x[i] / R;
        double win = std::abs(t) < 1 ? std::exp(1 - 1 / (1 - t * t)) : 0.0;
        double s = 0;
        for (int j = 0; j < 16; ++j) s += a[j] * std::sin(k[j] * x[i] + p[j]);
        h[i] = s * win;
    }
    return h;
}

struct EnergyIdentity {
    double lhs = 0, rhs = 0, residual = 0;
};

/// Both sides of the weighted energy identity for v = h u_x.
inline EnergyIdentity energy_identity(const SpectralData& s, const FrozenOperator& op, const Vec& hv,
                                      const DerivativeScheme& scheme = {})
{
    const Eigen::Index n = hv.size();
    const double L = s.x.cwiseAbs().maxCoeff();
    const double scale = hv.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < n; ++i)
        if (std::abs(s.x[i]) > 0.9 * L && std::abs(hv[i]) > 1e-10 * std::max(scale, 1e-300) && scale > 0)
            throw SupportError("test function is not negligible near the boundary");
    EnergyIdentity e;
    Vec v = hv.cwiseProduct(s.ux);
    e.lhs = s.h * (op.L * v).dot(hv.cwiseProduct(s.psi));
    Vec P0h = s.p0 * hv;
    double mm = s.mean(s.mu, hv), ms = s.mean(s.mu_star, hv);
    double cov = s.h * s.mu.dot(P0h.cwiseProduct(hv)) - s.mean(s.mu, P0h) * mm;
    const double Z = s.Z_mu;
    e.rhs = -Z / 2 * s.variance(s.mu, hv) - Z / 2 * s.variance(s.mu_star, hv) - Z / 2 * (mm - ms) * (mm - ms) +
            Z * cov;
    if (op.d != 0) {
        Vec hx = scheme.first(s.h, 0).apply(hv, 0, 0);
        e.rhs -= op.d * s.h * s.nu.dot(hx.cwiseProduct(hx));
    }
    e.residual = std::abs(e.lhs - e.rhs) / (1 + std::abs(e.lhs));
    return e;
}

inline double energy_identity_residual(const SpectralData& s, const FrozenOperator& op, const Vec& hv)
{
    return energy_identity(s, op, hv).residual;
}

} // namespace wavegap
