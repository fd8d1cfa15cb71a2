#pragma once

#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "wavegap/errors.hpp"
#include "wavegap/gap.hpp"
#include "wavegap/model.hpp"
#include "wavegap/spectral.hpp"
#include "wavegap/wave.hpp"

namespace wavegap {

/// Zero-speed comparison operator L0 v = -f v + P0 v, P0 = P diag(u_x / phi0).
struct Auxiliary {
    Vec phi0, psi0, mu0, mu0_ext, m;
    double Z0 = 0, Z_mu0 = 0;
    double identity_residual = 0, adjoint_identity_residual = 0;
    double kappa0_poincare = 0; ///< Poincare constant of mu0
    double M = 0;
    double gamma0 = 0;
    double kappa0 = 0; ///< gap constant of L0 inserted into kappa(c)
};

inline Auxiliary build_auxiliary(const FrozenOperator& op, const SpectralData& s, const CoefficientFields& k,
                                 double M)
{
    if (op.d != 0) throw PreconditionError("small-c analysis requires d = 0");
    if (!(k.f.minCoeff() > 0)) throw PreconditionError("small-c analysis requires inf f > 0");
    Auxiliary a;
    a.M = M;
    const Vec& ux = s.ux;
    a.m = k.q.cwiseQuotient(k.r);
    a.phi0 = s.Pux.cwiseQuotient(k.f);
    if (!(a.phi0.minCoeff() > 0)) throw PositivityError("phi0 = P u_x / f is not positive");
    a.Z0 = s.h * a.m.cwiseProduct(ux).dot(a.phi0);
    a.psi0 = a.m.cwiseProduct(ux) / a.Z0;

    Vec ratio = ux.cwiseQuotient(a.phi0);
    Vec P0phi = op.P * ratio.cwiseProduct(a.phi0);
    Vec fphi = k.f.cwiseProduct(a.phi0);
    a.identity_residual = (P0phi - fphi).cwiseAbs().maxCoeff() / fphi.cwiseAbs().maxCoeff();
    Vec P0adj_psi = ratio.cwiseProduct(op.P.transpose() * a.psi0);
    Vec fpsi = k.f.cwiseProduct(a.psi0);
    a.adjoint_identity_residual = (P0adj_psi - fpsi).cwiseAbs().maxCoeff() / fpsi.cwiseAbs().maxCoeff();

    Vec w = a.m.cwiseProduct(s.Pux).cwiseProduct(ux);
    a.Z_mu0 = s.h * w.sum();
    a.mu0 = w / a.Z_mu0;
    Vec mu_w = Vec::Ones(a.mu0.size());
    for (Eigen::Index i = s.lo; i <= s.hi; ++i) mu_w[i] = a.mu0[i];
    a.mu0_ext = extend_exponentially(s.x, mu_w, s.lo, s.hi);
    a.kappa0_poincare = poincare_direct(s.x, a.mu0_ext);
    a.gamma0 = contraction_gamma(a.kappa0_poincare, M);
    a.kappa0 = k.f.minCoeff() / 2 * (1 - a.gamma0);
    return a;
}

/// kappa(c) = kappa0 (1 - 2 c^2 A / Z0) - |c| B.
struct KappaOfC {
    double kappa0 = 0, A = 0, B = 0, Z0 = 1;

    double operator()(double c) const { return kappa0 * (1 - 2 * c * c * A / Z0) - std::abs(c) * B; }
};

/// A = ||u_xx / f||_m^2, B = ||(u_xx / (u_x f)) (kappa0 - f)||_inf on the trusted window.
inline KappaOfC kappa_of_c(const Auxiliary& a, const SpectralData& s, const Vec& uxx, const CoefficientFields& k)
{
    KappaOfC kc;
    kc.kappa0 = a.kappa0;
    kc.Z0 = a.Z0;
    Vec g = uxx.cwiseQuotient(k.f);
    kc.A = s.h * g.cwiseProduct(g).dot(a.m);
    for (Eigen::Index i = s.lo; i <= s.hi; ++i)
        kc.B = std::max(kc.B, std::abs(uxx[i] / (s.ux[i] * k.f[i]) * (a.kappa0 - k.f[i])));
    return kc;
}

/// Smallest |c| with kappa(c) <= 0; +infinity when kappa never vanishes.
inline double c_star(const KappaOfC& k)
{
    if (!(k.kappa0 > 0)) return 0;
    const double inf = std::numeric_limits<double>::infinity();
    double hi = inf;
    if (k.A > 0) hi = std::sqrt(k.Z0 / (2 * k.A));
    if (k.B > 0) hi = std::min(hi, k.kappa0 / k.B);
    if (!std::isfinite(hi)) return inf;
    double lo = 0;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
        double mid = 0.5 * (lo + hi);
        (k(mid) > 0 ? lo : hi) = mid;
    }
    return hi;
}

struct NfeCondition {
    bool holds = false;
    double margin = 0;
};

/// kappa0 (1 - 2 c^2 M^2 / (1 - |c| M)) - |c| M |kappa0 - 1| > 0 with |c| M < 1.
inline NfeCondition nfe_condition(double kappa0, double M, double c)
{
    const double cm = std::abs(c) * M;
    if (cm >= 1) throw DomainError("|c| M >= 1: the small-speed bound is not defined");
    NfeCondition r;
    r.margin = kappa0 * (1 - 2 * c * c * M * M / (1 - cm)) - cm * std::abs(kappa0 - 1);
    r.holds = r.margin > 0;
    return r;
}

/// Top eigenvalue of the m-weighted symmetric part of L = -f + P projected off u_x.
inline double m_weighted_gap(const FrozenOperator& op, const CoefficientFields& k, const SpectralData& s,
                             double* norm_L = nullptr)
{
    Mat L = op.P;
    L.diagonal() -= k.f;
    if (norm_L) *norm_L = L.cwiseAbs().rowwise().sum().maxCoeff();
    return projected_top_eigenvalue(L, s.h * k.q.cwiseQuotient(k.r), s.ux);
}

struct SmallCCertificate {
    Auxiliary aux;
    KappaOfC kappa;
    double c_solver = 0, kappa_of_c_solver = 0, c_star = 0, kappa_at_c_star = 0;
    double Z = 0; ///< 2 kappa0 / Z0
    bool strictly_below_c_star = false;
    bool is_nfe = false;
    double kernel_M = 0; ///< ||w_x / w||_inf
    NfeCondition nfe;
    bool nfe_domain_ok = true;
    double uxx_ratio = 0, uxx_ratio_bound = 0; ///< ||u_xx||_m^2 / Z0 against M^2 / (1 - |c| M)
    double lambda_m = 0, norm_L = 0, tolerance = 0;
    bool gap_ok = false;
    bool certified = false;
};

inline SmallCCertificate certify_small_c(const FrozenOperator& op, const SpectralData& s, const WaveSolution& w,
                                         const CoefficientFields& k, const BistableSystem& sys, double M)
{
    SmallCCertificate out;
    out.aux = build_auxiliary(op, s, k, M);
    out.kappa = kappa_of_c(out.aux, s, w.uxx, k);
    out.c_solver = w.c;
    out.kappa_of_c_solver = out.kappa(w.c);
    out.c_star = c_star(out.kappa);
    out.kappa_at_c_star = std::isfinite(out.c_star) ? out.kappa(out.c_star)
                                                        : std::numeric_limits<double>::quiet_NaN();
    out.Z = 2 * out.aux.kappa0 / out.aux.Z0;
    out.strictly_below_c_star = std::abs(w.c) < out.c_star;
    out.is_nfe = sys.gain.has_value();
    out.kernel_M = sys.kernel.sup_log_derivative();
    if (out.is_nfe) {
        try {
            out.nfe = nfe_condition(out.aux.kappa0, out.kernel_M, w.c);
        } catch (const DomainError&) {
            out.nfe_domain_ok = false;
        }
        out.uxx_ratio = s.h * w.uxx.cwiseProduct(w.uxx).dot(out.aux.m) / out.aux.Z0;
        const double cm = std::abs(w.c) * out.kernel_M;
        out.uxx_ratio_bound = cm < 1 ? out.kernel_M * out.kernel_M / (1 - cm)
                                     : std::numeric_limits<double>::infinity();
    }
    out.lambda_m = m_weighted_gap(op, k, s, &out.norm_L);
    out.tolerance = 10 * s.h * s.h * out.norm_L;
    out.gap_ok = out.lambda_m <= out.tolerance;
    bool condition = out.is_nfe ? (out.nfe_domain_ok && out.nfe.holds) : out.kappa_of_c_solver > 0;
    out.certified = out.strictly_below_c_star && condition && out.gap_ok;
    return out;
}

} // namespace wavegap
