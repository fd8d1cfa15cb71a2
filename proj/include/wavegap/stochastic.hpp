#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "wavegap/discretize.hpp"
#include "wavegap/errors.hpp"
#include "wavegap/model.hpp"
#include "wavegap/util.hpp"
#include "wavegap/wave.hpp"

namespace wavegap {

/// Finite-rank multiplicative noise Sigma(v)[e_k] = sigma lambda_k v phi_k.
struct NoiseModel {
    double sigma = 0;
    Mat modes;      ///< n x K, columns phi_k sampled on interior nodes
    Vec lambda;     ///< K weights

    int rank() const { return static_cast<int>(lambda.size()); }

    /// sum_k lambda_k^2 ||phi_k||_inf^2, at most 1 for an admissible model.
    double normalization() const
    {
        double s = 0;
        for (int k = 0; k < rank(); ++k) s += lambda[k] * lambda[k] * std::pow(modes.col(k).cwiseAbs().maxCoeff(), 2);
        return s;
    }

    /// sum_k sigma lambda_k phi_k dW_k, the noise profile multiplied pointwise by v.
    Vec profile(const Vec& dW) const { return sigma * (modes * lambda.cwiseProduct(dW)); }

    Vec apply(const Vec& v, const Vec& dW) const { return v.cwiseProduct(profile(dW)); }

    /// sum_k ||Sigma(v) e_k||^2 in the weighted norm h sum(. * weight).
    double hilbert_schmidt_sq(const Vec& v, const Vec& weight, double h) const
    {
        double s = 0;
        for (int k = 0; k < rank(); ++k) {
            Vec e = sigma * lambda[k] * v.cwiseProduct(modes.col(k));
            s += h * e.cwiseProduct(e).dot(weight);
        }
        return s;
    }
};

/// K Gaussian bumps of unit height tiling [-L, L], lambda_k = 1 / sqrt(K).
inline NoiseModel bump_noise(const Vec& x, double L, int K, double sigma)
{
    if (K < 1) throw PreconditionError("noise rank must be positive");
    if (!(sigma >= 0)) throw PreconditionError("noise amplitude must be non-negative");
    NoiseModel nm;
    nm.sigma = sigma;
    nm.modes.resize(x.size(), K);
    nm.lambda = Vec::Constant(K, 1 / std::sqrt(static_cast<double>(K)));
    const double width = 2 * L / K;
    for (int k = 0; k < K; ++k) {
        double xc = -L + (k + 0.5) * width;
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            double z = (x[i] - xc) / width;
            nm.modes(i, k) = std::exp(-0.5 * z * z);
        }
    }
    return nm;
}

/// Reference wave u_hat and its derivative, shiftable by monotone interpolation.
class ShiftedWave {
public:
    explicit ShiftedWave(const WaveSolution& w) : L_(w.grid.L), a1_(w.a1), a2_(w.a2)
    {
        Vec xf = w.grid.nodes();
        Vec uf = w.full();
        Vec uxf = with_boundary(w.ux, 0, 0);
        std::vector<double> xs(xf.data(), xf.data() + xf.size());
        std::vector<double> xs2 = xs;
        u_ = std::make_shared<Pchip>(std::move(xs), std::vector<double>(uf.data(), uf.data() + uf.size()));
        ux_ = std::make_shared<Pchip>(std::move(xs2), std::vector<double>(uxf.data(), uxf.data() + uxf.size()));
    }

    /// u_hat(x_i - s).
    Vec u(const Vec& x, double s) const
    {
        Vec out(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            double y = x[i] - s;
            out[i] = y <= -L_ ? a1_ : (y >= L_ ? a2_ : (*u_)(y));
        }
        return out;
    }

    Vec ux(const Vec& x, double s) const
    {
        Vec out(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            double y = x[i] - s;
            out[i] = (y <= -L_ || y >= L_) ? 0.0 : (*ux_)(y);
        }
        return out;
    }

private:
    double L_, a1_, a2_;
    std::shared_ptr<Pchip> u_, ux_;
};

/// Neural-field problem data shared by all trajectories.
struct SdeProblem {
    WaveSolution wave;
    Gain F;
    Kernel kernel;
    NoiseModel noise;
    double m = 1;             ///< phase relaxation rate
    double noise_width = 0;   ///< bump width of the noise modes, 0 for frozen lab-frame modes
    double noise_L = 0;       ///< half-width of the interval tiled by the bumps
};

/// Deviation v(t, y) from the reference wave in the coordinate y = x - c t - C(t).
struct PhaseState {
    double t = 0;
    double C = 0;
    Vec v;
    double norm = 0; ///< ||v||_{m_t}
};

inline double weighted_norm(const Vec& v, const Vec& weight, double h)
{
    return std::sqrt(h * v.cwiseProduct(v).dot(weight));
}

/// m = F'(u_hat) on the interior nodes.
inline Vec wave_weight(const SdeProblem& p)
{
    Vec mm(p.wave.u.size());
    for (Eigen::Index i = 0; i < mm.size(); ++i) mm[i] = p.F.d1(p.wave.u[i]);
    return mm;
}

/// Lab-frame deviation u - u_hat(. - c t - C) with the reference shifted by interpolation.
inline Vec deviation_from_lab(const Vec& u, double t, double C, const SdeProblem& p, const ShiftedWave& ref)
{
    return u - ref.u(p.wave.x, p.wave.c * t + C);
}

/// Lab-frame profile u_hat(. - s) + v(. - s) on the fixed grid.
inline Vec lab_profile(const PhaseState& st, const SdeProblem& p, const ShiftedWave& ref)
{
    const double s = p.wave.c * st.t + st.C;
    std::vector<double> xs(p.wave.grid.N), vs(p.wave.grid.N, 0.0);
    Vec xf = p.wave.grid.nodes();
    for (int i = 0; i < p.wave.grid.N; ++i) xs[i] = xf[i];
    for (Eigen::Index i = 0; i < st.v.size(); ++i) vs[i + 1] = st.v[i];
    Pchip vi(std::move(xs), std::move(vs));
    Vec u = ref.u(p.wave.x, s);
    for (Eigen::Index i = 0; i < u.size(); ++i) {
        double y = p.wave.x[i] - s;
        if (std::abs(y) < p.wave.grid.L) u[i] += vi(y);
    }
    return u;
}

/// sigma sum_k lambda_k phi_k(y + s) dW_k on the interior nodes.
///
/// For Gaussian bumps on a uniform grid the shift factorizes,
/// phi_k(y + s) = phi_k(y) e^{-y s / w^2} e^{x_k s / w^2} e^{-s^2 / (2 w^2)}.
inline Vec noise_profile(const SdeProblem& p, double s, const Vec& dW)
{
    Vec coef = p.noise.lambda.cwiseProduct(dW);
    if (p.noise_width <= 0 || s == 0) return p.noise.sigma * (p.noise.modes * coef);
    const double w2 = p.noise_width * p.noise_width;
    const Eigen::Index n = p.wave.x.size();
    const int K = p.noise.rank();
    if (std::abs(s) * (p.noise_L + p.wave.grid.L) / w2 < 200) {
        for (int k = 0; k < K; ++k) {
            double xc = -p.noise_L + (k + 0.5) * p.noise_width;
            coef[k] *= std::exp(xc * s / w2);
        }
        Vec out = p.noise.modes * coef;
        const double common = std::exp(-0.5 * s * s / w2);
        for (Eigen::Index i = 0; i < n; ++i) out[i] *= p.noise.sigma * common * std::exp(-p.wave.x[i] * s / w2);
        return out;
    }
    Vec out = Vec::Zero(n);
    for (int k = 0; k < K; ++k) {
        double xc = -p.noise_L + (k + 0.5) * p.noise_width;
        for (Eigen::Index i = 0; i < n; ++i) {
            double z = (p.wave.x[i] + s - xc) / p.noise_width;
            out[i] += coef[k] * std::exp(-0.5 * z * z);
        }
    }
    return p.noise.sigma * out;
}

/// R = w * (F(u_hat + v) - F(u_hat) - F'(u_hat) v) on interior nodes.
inline Vec rest_term(const ConvolutionOperator& conv, const Vec& v, const Vec& uref,
                     const std::function<double(double)>& F, const std::function<double(double)>& dF)
{
    const Eigen::Index n = v.size();
    Vec g = Vec::Zero(n + 2);
    for (Eigen::Index i = 0; i < n; ++i) g[i + 1] = F(uref[i] + v[i]) - F(uref[i]) - dF(uref[i]) * v[i];
    return conv.apply(g, 0, 0).segment(1, n);
}

/// Semi-implicit Euler-Maruyama step of the lab-frame field u, then the explicit phase update.
///
/// Returns the new (u, C); the deviation is measured against the interpolated reference.
template <class Rng>
Vec step_lab(const Vec& u, double& t, double& C, const SdeProblem& p, const ShiftedWave& ref,
             const ConvolutionOperator& conv, double dt, Rng& rng)
{
    const Eigen::Index n = u.size();
    const double h = p.wave.grid.h();
    const double s = p.wave.c * t + C;
    const Vec v = deviation_from_lab(u, t, C, p, ref);
    const Vec ux = ref.ux(p.wave.x, s);
    Vec uref = ref.u(p.wave.x, s), weight(n);
    for (Eigen::Index i = 0; i < n; ++i) weight[i] = p.F.d1(uref[i]);
    const double Fa1 = p.F(p.wave.a1), Fa2 = p.F(p.wave.a2);
    Vec g(n + 2);
    g[0] = Fa1;
    g[n + 1] = Fa2;
    for (Eigen::Index i = 0; i < n; ++i) g[i + 1] = p.F(u[i]);
    Vec drive = u + dt * conv.apply_recursive(g, Fa1, Fa2).segment(1, n);
    if (p.noise.sigma > 0) {
        std::normal_distribution<double> normal(0.0, std::sqrt(dt));
        Vec dW(p.noise.rank());
        for (int k = 0; k < p.noise.rank(); ++k) dW[k] = normal(rng);
        drive += p.noise.apply(v, dW);
    }
    C += -dt * p.m * h * v.cwiseProduct(ux).dot(weight);
    t += dt;
    Vec un = drive / (1 + dt);
    const double bound = 10 * (p.wave.a2 - p.wave.a1 + 1);
    if (!(un.cwiseAbs().maxCoeff() <= bound)) throw BlowupError("stochastic trajectory left the bounded region");
    return un;
}

/// The same step written for the deviation in the co-moving coordinate.
///
/// dv = [-v + w * (F(u_hat + v) - F(u_hat)) + c v_y + C'(u_hat_y + v_y)] dt + Sigma(v) dW,
/// C' = -m <v, u_hat_y>_m. The reference is never interpolated, so v = 0 is an exact rest state.
template <class Rng>
void step(PhaseState& st, const SdeProblem& p, const Vec& weight, const Stencil& D,
          const ConvolutionOperator& conv, double dt, Rng& rng)
{
    const Eigen::Index n = st.v.size();
    const double h = p.wave.grid.h();
    const Vec& uh = p.wave.u;
    Vec g = Vec::Zero(n + 2);
    for (Eigen::Index i = 0; i < n; ++i) g[i + 1] = p.F.increment(uh[i], st.v[i]);
    const double Cdot = -p.m * h * st.v.cwiseProduct(p.wave.ux).dot(weight);
    Vec vy = D.apply(st.v, 0, 0);
    Vec drive = st.v + dt * (conv.apply_recursive(g, 0, 0).segment(1, n) + p.wave.c * vy +
                             Cdot * (p.wave.ux + vy));
    if (p.noise.sigma > 0) {
        std::normal_distribution<double> normal(0.0, std::sqrt(dt));
        Vec dW(p.noise.rank());
        for (int k = 0; k < p.noise.rank(); ++k) dW[k] = normal(rng);
        drive += st.v.cwiseProduct(noise_profile(p, p.wave.c * st.t + st.C, dW));
    }
    st.v = drive / (1 + dt);
    st.C += dt * Cdot;
    st.t += dt;
    const double bound = 10 * (p.wave.a2 - p.wave.a1 + 1);
    if (!(st.v.cwiseAbs().maxCoeff() <= bound)) throw BlowupError("stochastic trajectory left the bounded region");
    st.norm = weighted_norm(st.v, weight, h);
}

/// Constants entering the escape bound.
struct SdeConstants {
    double kappa = 0, Z = 0, m = 0, sigma = 0;
    double M_R = 0, b_star = 0, kappa_tilde = 0;
    double m_sup = 0, m_inf = 0, mx_over_m = 0, ux_norm = 0;
    double advection_term = 0, noise_term = 0;
    bool kappa_tilde_positive = false, m_above_Z = false, in_hypothesis = false;
};

inline SdeConstants sde_constants(const SdeProblem& p, double kappa, double Z)
{
    SdeConstants k;
    k.kappa = kappa;
    k.Z = Z;
    k.m = p.m;
    k.sigma = p.noise.sigma;
    const WaveSolution& w = p.wave;
    const double h = w.grid.h();
    Vec mm(w.u.size()), mx(w.u.size());
    for (Eigen::Index i = 0; i < w.u.size(); ++i) {
        mm[i] = p.F.d1(w.u[i]);
        mx[i] = p.F.d2(w.u[i]) * w.ux[i] / mm[i];
    }
    // Far-field values belong to the weight as well.
    k.m_sup = std::max({mm.maxCoeff(), p.F.d1(w.a1), p.F.d1(w.a2)});
    k.m_inf = std::min({mm.minCoeff(), p.F.d1(w.a1), p.F.d1(w.a2)});
    k.mx_over_m = mx.cwiseAbs().maxCoeff();
    k.ux_norm = weighted_norm(w.ux, mm, h);
    k.M_R = std::sqrt(0.25 * p.kernel.sup() * std::pow(p.F.sup_d2(), 2) * k.m_sup / (k.m_inf * k.m_inf));
    k.b_star = kappa / (2 * k.M_R + p.m * k.ux_norm * k.mx_over_m);
    k.advection_term = std::abs(w.c) * k.mx_over_m;
    k.noise_term = k.sigma * k.sigma * k.m_sup / k.m_inf;
    k.kappa_tilde = kappa - k.advection_term - k.noise_term;
    k.kappa_tilde_positive = k.kappa_tilde > 0;
    k.m_above_Z = p.m > Z;
    k.in_hypothesis = k.kappa_tilde_positive && k.m_above_Z;
    return k;
}

/// Gaussian bump with the u_x component removed in the m-weighted product, scaled to `norm`.
inline Vec initial_deviation(const WaveSolution& w, const Gain& F, double norm, double center = 0.5,
                             double width = 1.0)
{
    const double h = w.grid.h();
    Vec mm(w.u.size());
    for (Eigen::Index i = 0; i < w.u.size(); ++i) mm[i] = F.d1(w.u[i]);
    Vec v(w.x.size());
    for (Eigen::Index i = 0; i < w.x.size(); ++i) {
        double z = (w.x[i] - center) / width;
        v[i] = std::exp(-0.5 * z * z);
    }
    v -= (h * v.cwiseProduct(w.ux).dot(mm)) / (h * w.ux.cwiseProduct(w.ux).dot(mm)) * w.ux;
    double nv = weighted_norm(v, mm, h);
    if (!(nv > 0)) throw DegenerateError("initial deviation vanishes after projection");
    return v * (norm / nv);
}

struct SdeOptions {
    int n_traj = 500;
    double T_max = 0; ///< 0 selects 50 / kappa_tilde
    double dt = 0;    ///< 0 selects min(0.01, 0.1 / kappa_tilde)
    double init_fraction = 0.25;
    int checkpoints = 50;
    std::uint64_t seed = 1;
    int threads = 1;
    bool keep_paths = false;
};

struct TrajectoryRecord {
    bool escaped = false;
    double tau = std::numeric_limits<double>::infinity();
    std::vector<double> t, norm, C; ///< values at checkpoints (only with keep_paths)
    std::vector<double> weighted;   ///< e^{kappa_tilde (t ^ tau)} ||v(t ^ tau)||^2 at checkpoints
};

struct WilsonInterval {
    double lo = 0, hi = 0, standard_error = 0;
};

/// Score interval at level z, and its z = 1 half-width as the standard error.
inline WilsonInterval wilson(int successes, int n, double z = 1.96)
{
    WilsonInterval w;
    if (n <= 0) return w;
    const double p = static_cast<double>(successes) / n, nn = n;
    auto half = [&](double zz) {
        return zz * std::sqrt(p * (1 - p) / nn + zz * zz / (4 * nn * nn)) / (1 + zz * zz / nn);
    };
    const double center = (p + z * z / (2 * nn)) / (1 + z * z / nn);
    w.lo = std::max(0.0, center - half(z));
    w.hi = std::min(1.0, center + half(z));
    w.standard_error = half(1.0);
    return w;
}

struct SupermartingaleCurve {
    std::vector<double> t, mean, standard_error;
    double reference = 0; ///< ||v(0)||^2
    bool within_band = true;
    int worst_index = 0;
    double worst_excess = -std::numeric_limits<double>::infinity(); ///< max of mean / (ref (1 + 3 se)) - 1
};

struct SdeRunStats {
    SdeConstants constants;
    SdeOptions options;
    double dt = 0, T_max = 0;
    double v0_norm = 0;
    int escapes = 0;
    double frequency = 0;
    WilsonInterval ci;
    double bound = 0; ///< ||v(0)||^2 / b*^2
    bool bound_respected = false; ///< frequency <= bound + 3 standard errors
    std::vector<TrajectoryRecord> trajectories;
    std::vector<double> checkpoint_times;
    SupermartingaleCurve curve;
};

/// Ensemble average of e^{kappa_tilde (t ^ tau)} ||v(t ^ tau)||^2 against ||v(0)||^2 (1 + 3 se).
inline SupermartingaleCurve supermartingale_diagnostic(const SdeRunStats& stats)
{
    SupermartingaleCurve c;
    c.reference = stats.v0_norm * stats.v0_norm;
    const std::size_t K = stats.checkpoint_times.size();
    const double n = static_cast<double>(stats.trajectories.size());
    for (std::size_t j = 0; j < K; ++j) {
        double s = 0, s2 = 0;
        for (const auto& tr : stats.trajectories) {
            s += tr.weighted[j];
            s2 += tr.weighted[j] * tr.weighted[j];
        }
        double mean = s / n;
        double var = n > 1 ? std::max(0.0, (s2 - n * mean * mean) / (n - 1)) : 0.0;
        double se = c.reference > 0 ? std::sqrt(var / n) / c.reference : 0.0;
        c.t.push_back(stats.checkpoint_times[j]);
        c.mean.push_back(mean);
        c.standard_error.push_back(se);
        double limit = c.reference * (1 + 3 * se);
        double excess = limit > 0 ? mean / limit - 1 : (mean > 0 ? 1.0 : 0.0);
        if (excess > c.worst_excess) {
            c.worst_excess = excess;
            c.worst_index = static_cast<int>(j);
        }
        if (mean > limit * (1 + 1e-12) + 1e-300) c.within_band = false;
    }
    return c;
}

/// Independent trajectories from u_hat + v(0), stopped at the first crossing of b* or at T_max.
inline SdeRunStats run_ensemble(const SdeProblem& p, double kappa, double Z, const SdeOptions& opt)
{
    SdeRunStats st;
    st.options = opt;
    st.constants = sde_constants(p, kappa, Z);
    const SdeConstants& k = st.constants;
    const double rate = k.kappa_tilde > 0 ? k.kappa_tilde : kappa;
    st.T_max = opt.T_max > 0 ? opt.T_max : 50 / rate;
    st.dt = opt.dt > 0 ? opt.dt : std::min(0.01, 0.1 / rate);
    const long steps = static_cast<long>(std::ceil(st.T_max / st.dt - 1e-9));
    st.dt = st.T_max / steps;
    st.v0_norm = opt.init_fraction * k.b_star;
    st.bound = opt.init_fraction * opt.init_fraction;

    std::vector<long> check_steps;
    for (int j = 0; j <= opt.checkpoints; ++j) {
        check_steps.push_back(static_cast<long>(std::llround(static_cast<double>(steps) * j / opt.checkpoints)));
        st.checkpoint_times.push_back(check_steps.back() * st.dt);
    }

    const ConvolutionOperator conv(p.wave.grid, p.kernel);
    const Vec weight = wave_weight(p);
    const Stencil D = p.wave.D();
    const Vec v0 = st.v0_norm > 0 ? initial_deviation(p.wave, p.F, st.v0_norm) : Vec::Zero(p.wave.u.size());
    st.trajectories.resize(opt.n_traj);
    parallel_for(opt.n_traj, opt.threads, [&](int i) {
        auto rng = stream_rng(opt.seed, static_cast<std::uint64_t>(i));
        TrajectoryRecord rec;
        PhaseState s;
        s.v = v0;
        s.norm = weighted_norm(v0, weight, p.wave.grid.h());
        double frozen = s.norm * s.norm;
        std::size_t next = 0;
        auto record = [&](long n) {
            while (next < check_steps.size() && check_steps[next] == n) {
                double tt = n * st.dt;
                if (!rec.escaped) frozen = std::exp(rate * tt) * s.norm * s.norm;
                rec.weighted.push_back(frozen);
                if (opt.keep_paths) {
                    rec.t.push_back(tt);
                    rec.norm.push_back(s.norm);
                    rec.C.push_back(s.C);
                }
                ++next;
            }
        };
        record(0);
        for (long n = 1; n <= steps; ++n) {
            if (!rec.escaped) {
                step(s, p, weight, D, conv, st.dt, rng);
                if (s.norm >= k.b_star) {
                    rec.escaped = true;
                    rec.tau = s.t;
                    frozen = std::exp(rate * s.t) * s.norm * s.norm;
                }
            }
            if (rec.escaped && next >= check_steps.size()) break;
            record(n);
            if (rec.escaped && !opt.keep_paths) {
                while (next < check_steps.size()) {
                    rec.weighted.push_back(frozen);
                    ++next;
                }
                break;
            }
        }
        st.trajectories[i] = std::move(rec);
    });
    for (const auto& tr : st.trajectories) st.escapes += tr.escaped ? 1 : 0;
    st.frequency = opt.n_traj > 0 ? static_cast<double>(st.escapes) / opt.n_traj : 0.0;
    st.ci = wilson(st.escapes, opt.n_traj);
    st.bound_respected = st.frequency <= st.bound + 3 * st.ci.standard_error;
    st.curve = supermartingale_diagnostic(st);
    return st;
}

} // namespace wavegap
