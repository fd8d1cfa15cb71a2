#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <boost/math/quadrature/gauss.hpp>

#include "wavegap/discretize.hpp"
#include "wavegap/errors.hpp"
#include "wavegap/model.hpp"
#include "wavegap/spectral.hpp"
#include "wavegap/util.hpp"
#include "wavegap/wave.hpp"

namespace wavegap {

struct ContractivityM {
    double M = 0;
    Eigen::Index argmax = 0;
    bool saturated = true; ///< false when the maximum sits on the edge of the trusted window
};

/// M = max_i sum_j (w_x/w)^2(x_i - y_j) p0(x_i, y_j) over the trusted rows.
inline ContractivityM contractivity_M(const SpectralData& s, const Kernel& kernel, const CoefficientFields& k,
                                      const Grid& grid)
{
    ConvolutionOperator wm(grid, kernel, ConvolutionWeight::LogDerivativeSquared);
    Vec num = k.r.cwiseProduct(wm.interior_matrix() * k.q.cwiseProduct(s.ux));
    ContractivityM out;
    out.M = -1;
    for (Eigen::Index i = s.lo; i <= s.hi; ++i) {
        double v = num[i] / s.Pux[i];
        if (v > out.M) {
            out.M = v;
            out.argmax = i;
        }
    }
    out.saturated = out.argmax > s.lo + 2 && out.argmax < s.hi - 2;
    if (!std::isfinite(out.M)) throw UnboundedError("contractivity constant M is not finite");
    return out;
}

/// Tail decay rate of a density on one side, from the outermost decade of its values.
inline TailFit density_tail_fit(const Vec& x, const Vec& mu, bool right_side)
{
    const Eigen::Index n = x.size();
    const Eigen::Index edge = right_side ? n - 1 : 0;
    const double target = 10 * mu[edge];
    Eigen::Index len = 1;
    while (len < n / 4) {
        Eigen::Index i = right_side ? edge - len : edge + len;
        if (mu[i] > target && len >= 8) break;
        ++len;
    }
    Eigen::Index lo = right_side ? edge - len + 1 : edge;
    Eigen::Index hi = right_side ? edge : edge + len - 1;
    TailFit f = fit_log_affine(x, mu, lo, hi);
    if (f.misfit > 0.05 * std::max(1.0, std::abs(f.slope) * (x[hi] - x[lo])))
        throw TailFitError("log density is not asymptotically affine in the tail");
    if ((right_side && !(f.slope < 0)) || (!right_side && !(f.slope > 0)))
        throw TailFitError("density does not decay in the tail");
    return f;
}

struct Muckenhoupt {
    double B1 = 0, B2 = 0;
};

/// Hardy constants around the split point 0, tails closed with fitted exponentials.
inline Muckenhoupt muckenhoupt(const Vec& x, const Vec& density)
{
    const Eigen::Index n = x.size();
    const double h = x[1] - x[0];
    if (density.minCoeff() <= 0) throw PositivityError("muckenhoupt: density must be positive");
    TailFit fl = density_tail_fit(x, density, false);
    TailFit fr = density_tail_fit(x, density, true);
    Vec mu = density;
    double mass = h * (mu.sum() - 0.5 * (mu[0] + mu[n - 1])) + mu[0] / fl.slope - mu[n - 1] / fr.slope;
    mu /= mass;
    // Split exactly at 0: x[j0] <= 0 < x[j0 + 1].
    Eigen::Index j0 = 0;
    while (j0 + 2 < n && x[j0 + 1] <= 0) ++j0;
    const double t0 = (0 - x[j0]) / h;
    const double inv0 = 1 / ((1 - t0) * mu[j0] + t0 * mu[j0 + 1]);

    // Right: T(r) = mass beyond r, I(r) = int_0^r 1/mu.
    std::vector<double> tail(n, 0.0);
    tail[n - 1] = -mu[n - 1] / fr.slope;
    for (Eigen::Index i = n - 2; i >= 0; --i) tail[i] = tail[i + 1] + 0.5 * h * (mu[i] + mu[i + 1]);
    Muckenhoupt b;
    double inv = 0.5 * (x[j0 + 1] - 0) * (inv0 + 1 / mu[j0 + 1]);
    b.B1 = tail[j0 + 1] * inv;
    for (Eigen::Index i = j0 + 2; i < n; ++i) {
        inv += 0.5 * h * (1 / mu[i] + 1 / mu[i - 1]);
        b.B1 = std::max(b.B1, tail[i] * inv);
    }
    std::vector<double> head(n, 0.0);
    head[0] = mu[0] / fl.slope;
    for (Eigen::Index i = 1; i < n; ++i) head[i] = head[i - 1] + 0.5 * h * (mu[i] + mu[i - 1]);
    inv = 0.5 * (0 - x[j0]) * (inv0 + 1 / mu[j0]);
    b.B2 = head[j0] * inv;
    for (Eigen::Index i = j0 - 1; i >= 0; --i) {
        inv += 0.5 * h * (1 / mu[i] + 1 / mu[i + 1]);
        b.B2 = std::max(b.B2, head[i] * inv);
    }
    return b;
}

/// 1 / (smallest nonzero eigenvalue) of the weighted Neumann problem for density mu.
inline double poincare_direct(const Vec& x, const Vec& density)
{
    const double peak = density.maxCoeff();
    Eigen::Index lo = 0, hi = x.size() - 1;
    while (lo < hi && !(density[lo] > 1e-200 * peak)) ++lo;
    while (hi > lo && !(density[hi] > 1e-200 * peak)) --hi;
    const Eigen::Index m = hi - lo + 1;
    if (m < 3) throw DegenerateError("poincare: density support too small");
    const double h = x[1] - x[0];
    Vec w(m), kmid(m - 1);
    for (Eigen::Index i = 0; i < m; ++i) w[i] = h * density[lo + i] * ((i == 0 || i == m - 1) ? 0.5 : 1.0);
    for (Eigen::Index i = 0; i + 1 < m; ++i) kmid[i] = 0.5 * (density[lo + i] + density[lo + i + 1]) / h;
    Vec diag = Vec::Zero(m), sub(m - 1);
    for (Eigen::Index i = 0; i + 1 < m; ++i) {
        diag[i] += kmid[i] / w[i];
        diag[i + 1] += kmid[i] / w[i + 1];
        sub[i] = -kmid[i] / std::sqrt(w[i] * w[i + 1]);
    }
    Eigen::SelfAdjointEigenSolver<Mat> es;
    es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
    double lam1 = es.eigenvalues()[1];
    if (!(lam1 >= 1e-12)) throw DegenerateError("poincare: spectral gap below 1e-12");
    return 1 / lam1;
}

struct Equivalence {
    double delta1 = 0, delta2 = 0, delta1_star = 0, delta2_star = 0;
};

inline Equivalence equivalence_constants(const SpectralData& s)
{
    Equivalence e;
    e.delta1 = e.delta1_star = std::numeric_limits<double>::infinity();
    e.delta2 = e.delta2_star = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = s.lo; i <= s.hi; ++i) {
        double a = s.Pux[i] / s.ux[i], b = s.Pstar_psi[i] / s.psi[i];
        if (!(a > 0) || !(b > 0)) throw NonPositiveError("equivalence ratio is not positive");
        e.delta1 = std::min(e.delta1, a);
        e.delta2 = std::max(e.delta2, a);
        e.delta1_star = std::min(e.delta1_star, b);
        e.delta2_star = std::max(e.delta2_star, b);
    }
    return e;
}

namespace detail {

/// int_{L}^{inf} w(x - y) e^{a + eta y} dy (right = true) or the mirror integral over y < -L.
inline double exp_tail_convolution(const Kernel& kernel, double x, double L, const TailFit& fit, bool right)
{
    const double eta = fit.slope;
    if (kernel.family() == KernelFamily::Exponential) {
        const double s = kernel.scale();
        if (right) {
            if (!(eta < 1 / s)) return std::numeric_limits<double>::infinity();
            return std::exp(fit.intercept + x / s + (eta - 1 / s) * L) / ((1 / s - eta) * 2 * s);
        }
        if (!(eta > -1 / s)) return std::numeric_limits<double>::infinity();
        return std::exp(fit.intercept - x / s - (eta + 1 / s) * L) / ((1 / s + eta) * 2 * s);
    }
    const double R = kernel.effective_radius() + std::abs(x) + L;
    const int panels = 400;
    const auto& gx = boost::math::quadrature::gauss<double, 8>::abscissa();
    const auto& gw = boost::math::quadrature::gauss<double, 8>::weights();
    double acc = 0;
    const double lo = right ? L : -L - R, hi = right ? L + R : -L;
    const double ph = (hi - lo) / panels;
    for (int p = 0; p < panels; ++p) {
        double mid = lo + (p + 0.5) * ph;
        for (std::size_t q = 0; q < gx.size(); ++q)
            for (int sgn : {-1, 1}) {
                double y = mid + sgn * 0.5 * ph * gx[q];
                acc += gw[q] * 0.5 * ph * kernel(x - y) * fit(y);
            }
    }
    return acc;
}

} // namespace detail

struct KRho {
    double K = 0;
    Eigen::Index argmax = 0;
    bool bounded = true;
};

/// K_rho = max (w * rho) / rho over the trusted window, rho extended by its fitted exponentials.
inline KRho k_rho(const SpectralData& s, const Kernel& kernel, const Grid& grid)
{
    ConvolutionOperator conv(grid, kernel);
    const int N = grid.N;
    Vec full(N);
    full[0] = s.rho_left(grid.x(0));
    full[N - 1] = s.rho_right(grid.x(N - 1));
    full.segment(1, N - 2) = s.rho;
    Vec wr = conv.apply(full, 0, 0);
    KRho out;
    out.K = -1;
    for (Eigen::Index i = s.lo; i <= s.hi; ++i) {
        double xi = s.x[i];
        double tail = detail::exp_tail_convolution(kernel, xi, grid.L, s.rho_left, false) +
                      detail::exp_tail_convolution(kernel, xi, grid.L, s.rho_right, true);
        double v = (wr[i + 1] + tail) / s.rho[i];
        if (!std::isfinite(v)) {
            out.K = std::numeric_limits<double>::infinity();
            out.bounded = false;
            out.argmax = i;
            return out;
        }
        if (v > out.K) {
            out.K = v;
            out.argmax = i;
        }
    }
    return out;
}

struct DecayChecks {
    double alpha = 0, k = 0, beta = 0, l = 0; ///< mu ~ k e^{alpha x} (left), l e^{-beta x} (right)
    double misfit_left = 0, misfit_right = 0;
    double uxxx_over_ux = 0, uxx_over_ux = 0, psixx_over_psi = 0, psix_over_psi = 0;
};

inline DecayChecks decay_and_derivative_checks(const SpectralData& s, const WaveSolution& w)
{
    DecayChecks d;
    Vec mu = s.mu.segment(s.lo, s.hi - s.lo + 1);
    Vec x = s.x.segment(s.lo, s.hi - s.lo + 1);
    TailFit fl = density_tail_fit(x, mu, false), fr = density_tail_fit(x, mu, true);
    d.alpha = fl.slope;
    d.k = std::exp(fl.intercept);
    d.beta = -fr.slope;
    d.l = std::exp(fr.intercept);
    d.misfit_left = fl.misfit;
    d.misfit_right = fr.misfit;
    Stencil D = w.D();
    Vec uxxx = D.apply(w.uxx, 0, 0);
    Stencil Dc = w.scheme.first(s.h, 0), D2 = w.scheme.second(s.h);
    Vec psix = Dc.apply(s.psi, 0, 0), psixx = D2.apply(s.psi, 0, 0);
    for (Eigen::Index i = s.lo; i <= s.hi; ++i) {
        d.uxxx_over_ux = std::max(d.uxxx_over_ux, std::abs(uxxx[i] / s.ux[i]));
        d.uxx_over_ux = std::max(d.uxx_over_ux, std::abs(w.uxx[i] / s.ux[i]));
        d.psixx_over_psi = std::max(d.psixx_over_psi, std::abs(psixx[i] / s.psi[i]));
        d.psix_over_psi = std::max(d.psix_over_psi, std::abs(psix[i] / s.psi[i]));
    }
    return d;
}

inline double contraction_gamma(double kappa0, double M) { return kappa0 * M / (1 + kappa0 * M); }

/// kappa = (delta1*/2)(1 - kappa0 M / (1 + kappa0 M)).
inline double theoretical_kappa(double delta1_star, double kappa0, double M)
{
    return delta1_star / 2 * (1 - contraction_gamma(kappa0, M));
}

/// Largest eigenvalue of the symmetric part of L in L2(weight), projected off `mode`.
inline double projected_top_eigenvalue(const Mat& L, const Vec& weight, const Vec& mode)
{
    const Eigen::Index n = L.rows();
    Vec sw = weight.cwiseSqrt();
    Mat S(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i)
            S(i, j) = 0.5 * (sw[i] / sw[j] * L(i, j) + sw[j] / sw[i] * L(j, i));
    Vec e = sw.cwiseProduct(mode);
    e.normalize();
    Vec Se = S * e;
    double eSe = e.dot(Se);
    const double big = 1e3 * (1 + L.cwiseAbs().rowwise().sum().maxCoeff());
    S -= e * Se.transpose() + Se * e.transpose();
    S += (eSe - big) * e * e.transpose();
    Eigen::SelfAdjointEigenSolver<Mat> es(S, Eigen::EigenvaluesOnly);
    return es.eigenvalues()[n - 1];
}

/// Top of the rho-weighted symmetric part of L# on {<v, psi> = 0}.
inline double direct_gap(const FrozenOperator& op, const SpectralData& s)
{
    return projected_top_eigenvalue(op.L, s.h * s.rho, s.ux);
}

struct ContractivitySample {
    double worst = 0;
    int violations = 0;
    int evaluated = 0;
};

/// Max of Var_mu(P0 h) / Var_mu*(h) over random smooth h; violations counted against gamma.
inline ContractivitySample contractivity_sample(const SpectralData& s, int n_samples, double gamma,
                                                std::uint64_t seed, int threads = 1)
{
    const double R = 0.5 * s.x.cwiseAbs().maxCoeff();
    std::vector<double> ratios(n_samples, -1.0);
    parallel_for(n_samples, threads, [&](int i) {
        auto rng = stream_rng(seed, static_cast<std::uint64_t>(i));
        Vec hv = random_test_function(s.x, R, rng);
        double vs = s.variance(s.mu_star, hv);
        if (!(vs > 1e-300)) return;
        ratios[i] = s.variance(s.mu, s.p0 * hv) / vs;
    });
    ContractivitySample out;
    for (double r : ratios) {
        if (r < 0) continue;
        ++out.evaluated;
        out.worst = std::max(out.worst, r);
        if (r > gamma + 1e-8) ++out.violations;
    }
    return out;
}

/// Every constant of the spectral-gap certificate plus hypothesis flags.
struct GapCertificate {
    double M = 0;
    bool M_saturated = true;
    Muckenhoupt B;
    double kappa0_direct = 0;
    double bracket_lo = 0, bracket_hi = 0;
    bool bracket_ok = false;
    Equivalence delta;
    KRho K_rho;
    DecayChecks decay;
    double gamma = 0, kappa = 0, kappa_conservative = 0;
    double lambda_gap = 0, tolerance = 0, norm_L = 0;
    ContractivitySample lemma;
    bool psi_positive = true, delta_positive = false, M_finite = false, K_rho_finite = false, decay_ok = false,
         gamma_ok = false, kappa_positive = false, lemma_ok = false;
    bool hypotheses_ok = false, gap_ok = false, certified = false;
};

struct GapOptions {
    int n_samples = 1000;
    std::uint64_t seed = 1;
    int threads = 1;
    bool compute_gap = true;
};

inline GapCertificate certify_gap(const FrozenOperator& op, const SpectralData& s, const WaveSolution& w,
                                  const CoefficientFields& k, const Kernel& kernel, const GapOptions& opt = {})
{
    GapCertificate g;
    g.psi_positive = s.psi.minCoeff() >= -1e-10 * s.psi.maxCoeff();
    auto Mres = contractivity_M(s, kernel, k, w.grid);
    g.M = Mres.M;
    g.M_saturated = Mres.saturated;
    g.M_finite = std::isfinite(g.M) && g.M >= 0;
    g.B = muckenhoupt(s.x, s.mu_ext);
    g.kappa0_direct = poincare_direct(s.x, s.mu_ext);
    g.bracket_lo = std::min(g.B.B1, g.B.B2);
    g.bracket_hi = 4 * std::max(g.B.B1, g.B.B2);
    g.bracket_ok = g.bracket_lo <= g.kappa0_direct && g.kappa0_direct <= g.bracket_hi;
    try {
        g.delta = equivalence_constants(s);
        g.delta_positive = true;
    } catch (const NonPositiveError&) {
        g.delta_positive = false;
    }
    g.K_rho = k_rho(s, kernel, w.grid);
    g.K_rho_finite = g.K_rho.bounded;
    try {
        g.decay = decay_and_derivative_checks(s, w);
        g.decay_ok = g.decay.alpha > 0 && g.decay.beta > 0;
    } catch (const TailFitError&) {
        g.decay_ok = false;
    }
    g.gamma = contraction_gamma(g.kappa0_direct, g.M);
    g.gamma_ok = g.gamma > 0 && g.gamma < 1;
    g.kappa = theoretical_kappa(g.delta.delta1_star, g.kappa0_direct, g.M);
    g.kappa_conservative = theoretical_kappa(g.delta.delta1_star, g.bracket_hi, g.M);
    g.kappa_positive = g.kappa > 0;
    g.lemma = contractivity_sample(s, opt.n_samples, g.gamma, opt.seed, opt.threads);
    g.lemma_ok = g.lemma.violations == 0;
    g.hypotheses_ok = g.psi_positive && g.delta_positive && g.M_finite && g.K_rho_finite && g.decay_ok &&
                      g.bracket_ok && g.gamma_ok && g.kappa_positive && g.lemma_ok;
    g.norm_L = op.norm_inf();
    g.tolerance = 10 * s.h * s.h * g.norm_L;
    if (opt.compute_gap) {
        g.lambda_gap = direct_gap(op, s);
        g.gap_ok = g.lambda_gap <= -g.kappa + g.tolerance;
    }
    g.certified = g.hypotheses_ok && g.gap_ok;
    return g;
}

} // namespace wavegap
