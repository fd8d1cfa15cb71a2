#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wavegap/config.hpp"
#include "wavegap/gap.hpp"
#include "wavegap/report.hpp"
#include "wavegap/smallc.hpp"
#include "wavegap/spectral.hpp"
#include "wavegap/stochastic.hpp"
#include "wavegap/util.hpp"
#include "wavegap/wave.hpp"

#ifndef WAVEGAP_VERSION
#define WAVEGAP_VERSION "0.0.0"
#endif

namespace wavegap {

enum ExitCode { exit_ok = 0, exit_error = 1, exit_hypothesis = 2 };

struct StageResult {
    Json json;
    int status = exit_ok;
};

/// Lazily evaluated model -> wave -> spectral -> gap -> small-c -> sde chain for one config.
class Pipeline {
public:
    explicit Pipeline(PipelineConfig cfg, int threads = thread_count())
        : cfg_(std::move(cfg)), threads_(threads), sys_(cfg_.system()), grid_(cfg_.grid.L, cfg_.grid.N)
    {
    }

    const PipelineConfig& config() const { return cfg_; }
    const BistableSystem& system() const { return sys_; }
    const Grid& grid() const { return grid_; }

    const WaveSolution& wave()
    {
        if (!wave_) {
            WaveOptions opt;
            opt.tol = cfg_.solver.tol;
            opt.max_iter = cfg_.solver.max_iter;
            wave_ = solve_wave(sys_, grid_, {}, opt);
        }
        return *wave_;
    }

    const ConvolutionOperator& conv()
    {
        if (!conv_) conv_ = std::make_unique<ConvolutionOperator>(grid_, sys_.kernel);
        return *conv_;
    }

    const CoefficientFields& coefficients()
    {
        if (!coeffs_) coeffs_ = coefficient_fields(sys_, conv(), wave().u, wave().a1, wave().a2);
        return *coeffs_;
    }

    const FrozenOperator& op()
    {
        if (!op_) op_ = assemble(coefficients(), wave().c, sys_.d, conv(), wave().scheme);
        return *op_;
    }

    const SpectralData& spectral()
    {
        if (!spec_) {
            Vec psi = adjoint_eigenfunction(op(), wave().ux);
            spec_ = build_densities(op(), wave().x, wave().ux, psi, coefficients(), cfg_.gap.trusted_threshold,
                                    cfg_.gap.boundary_strip);
        }
        return *spec_;
    }

    const GapCertificate& gap()
    {
        if (!gap_) {
            GapOptions go;
            go.n_samples = cfg_.gap.n_samples;
            go.seed = cfg_.gap.seed;
            go.threads = threads_;
            gap_ = certify_gap(op(), spectral(), wave(), coefficients(), sys_.kernel, go);
        }
        return *gap_;
    }

    const SmallCCertificate& small_c()
    {
        if (!smallc_) smallc_ = certify_small_c(op(), spectral(), wave(), coefficients(), sys_, gap().M);
        return *smallc_;
    }

    Json header(const std::string& kind) const
    {
        Json j;
        j["schema_version"] = report_schema_version;
        j["kind"] = kind;
        j["version"] = WAVEGAP_VERSION;
        j["config_hash"] = cfg_.hash;
        Json m;
        m["type"] = cfg_.model.type;
        m["kernel"] = cfg_.model.kernel;
        if (cfg_.model.kernel != "tabulated") m["kernel_scale"] = cfg_.model.kernel_scale;
        if (sys_.gain) {
            m["beta"] = sys_.gain->beta;
            m["theta"] = sys_.gain->theta;
        } else {
            m["lambda"] = cfg_.model.lambda;
            m["k"] = cfg_.model.k;
            m["a"] = cfg_.model.a;
        }
        m["d"] = cfg_.model.d;
        j["model"] = m;
        j["grid"] = Json{{"L", grid_.L}, {"N", grid_.N}, {"h", grid_.h()}};
        return j;
    }

    StageResult wave_solve()
    {
        const WaveSolution& w = wave();
        StageResult r;
        r.json = header("wave");
        Json& j = r.json;
        j["c"] = w.c;
        j["a1"] = w.a1;
        j["a"] = w.a;
        j["a2"] = w.a2;
        j["residual"] = w.residual;
        j["iterations"] = w.iterations;
        j["min_ux"] = w.ux.minCoeff();
        j["max_ux"] = w.ux.maxCoeff();
        if (sys_.gain) {
            j["c_formula"] = wave_speed_formula(w, *sys_.gain);
            StandingWave sw = standing_wave_family(w, *sys_.gain, sys_.kernel);
            j["standing_wave_residual"] = sw.residual;
            j["standing_wave_shift_mismatch"] = (sw.u0 - sw.u0_shift).cwiseAbs().maxCoeff();
        }
        csv_.push_back({"wave.csv", {"x", "u", "ux", "uxx"}, {w.x, w.u, w.ux, w.uxx}});
        return r;
    }

    StageResult wave_spectrum()
    {
        const SpectralData& s = spectral();
        StageResult r;
        r.json = header("spectrum");
        Json& j = r.json;
        j["c"] = wave().c;
        j["goldstone_residual"] = (op().L * s.ux).cwiseAbs().maxCoeff();
        j["adjoint_residual"] = (op().Ladj * s.psi).cwiseAbs().maxCoeff();
        j["Z_mu"] = s.Z_mu;
        j["Z_mu_alt"] = s.Z_mu_alt;
        j["normalization_residuals"] = Json{{"ux_psi", std::abs(s.h * s.ux.dot(s.psi) - 1)},
                                            {"mu", std::abs(s.integral(s.mu) - 1)},
                                            {"mu_star", std::abs(s.integral(s.mu_star) - 1)}};
        j["trusted_threshold"] = s.trusted_threshold;
        j["trusted_window"] = Json::array({s.x[s.lo], s.x[s.hi]});
        j["rho_tail_rates"] = Json::array({s.rho_left.slope, s.rho_right.slope});
        j["psi_min_over_max"] = s.psi.minCoeff() / s.psi.maxCoeff();
        const int n = cfg_.gap.energy_samples;
        std::vector<double> res(n, 0.0);
        const double R = 0.5 * grid_.L;
        for (int i = 0; i < n; ++i) {
            auto rng = stream_rng(cfg_.gap.seed ^ 0x9e3779b97f4a7c15ULL, static_cast<std::uint64_t>(i));
            Vec hv = random_test_function(s.x, R, rng);
            res[i] = energy_identity(s, op(), hv, wave().scheme).residual;
        }
        j["energy_identity_samples"] = n;
        j["energy_identity_max_residual"] = *std::max_element(res.begin(), res.end());
        csv_.push_back({"spectrum.csv",
                        {"x", "ux", "psi", "rho", "mu", "mu_star", "nu", "m"},
                        {s.x, s.ux, s.psi, s.rho, s.mu, s.mu_star, s.nu, s.m}});
        return r;
    }

    StageResult gap_certify()
    {
        const GapCertificate& g = gap();
        StageResult r;
        r.json = header("gap");
        Json& j = r.json;
        j["c"] = wave().c;
        j["M"] = g.M;
        j["M_saturated"] = g.M_saturated;
        j["B1"] = g.B.B1;
        j["B2"] = g.B.B2;
        j["kappa0_direct"] = g.kappa0_direct;
        j["kappa0_bracket"] = Json::array({g.bracket_lo, g.bracket_hi});
        j["delta1"] = g.delta.delta1;
        j["delta2"] = g.delta.delta2;
        j["delta1_star"] = g.delta.delta1_star;
        j["delta2_star"] = g.delta.delta2_star;
        j["K_rho"] = g.K_rho.K;
        j["decay"] = Json{{"alpha", g.decay.alpha},           {"k", g.decay.k},
                          {"beta", g.decay.beta},             {"l", g.decay.l},
                          {"uxxx_over_ux", g.decay.uxxx_over_ux}, {"uxx_over_ux", g.decay.uxx_over_ux},
                          {"psixx_over_psi", g.decay.psixx_over_psi}, {"psix_over_psi", g.decay.psix_over_psi}};
        j["gamma"] = g.gamma;
        j["kappa"] = g.kappa;
        j["kappa_conservative"] = g.kappa_conservative;
        j["lambda_gap"] = g.lambda_gap;
        j["tolerance"] = g.tolerance;
        j["norm_L"] = g.norm_L;
        j["lemma_samples"] = g.lemma.evaluated;
        j["lemma_worst_ratio"] = g.lemma.worst;
        j["lemma_violations"] = g.lemma.violations;
        j["hypotheses"] = Json{{"psi_positive", g.psi_positive},   {"delta_positive", g.delta_positive},
                               {"M_finite", g.M_finite},           {"K_rho_finite", g.K_rho_finite},
                               {"decay", g.decay_ok},              {"bracket", g.bracket_ok},
                               {"gamma_in_unit_interval", g.gamma_ok}, {"kappa_positive", g.kappa_positive},
                               {"lemma", g.lemma_ok}};
        j["hypotheses_ok"] = g.hypotheses_ok;
        j["gap_ok"] = g.gap_ok;
        j["certified"] = g.certified;
        r.status = g.certified ? exit_ok : exit_hypothesis;
        return r;
    }

    StageResult gap_small_c()
    {
        const SmallCCertificate& s = small_c();
        StageResult r;
        r.json = header("small_c");
        Json& j = r.json;
        j["kappa0"] = s.aux.kappa0;
        j["kappa0_poincare"] = s.aux.kappa0_poincare;
        j["gamma0"] = s.aux.gamma0;
        j["Z0"] = s.aux.Z0;
        j["A"] = s.kappa.A;
        j["B"] = s.kappa.B;
        j["kappa_of_c"] = s.kappa_of_c_solver;
        j["c_star"] = s.c_star;
        j["kappa_at_c_star"] = s.kappa_at_c_star;
        j["c_solver"] = s.c_solver;
        j["Z"] = s.Z;
        j["Z_route"] = "small-c";
        j["identity_residual"] = s.aux.identity_residual;
        j["adjoint_identity_residual"] = s.aux.adjoint_identity_residual;
        if (s.is_nfe) {
            j["kernel_M"] = s.kernel_M;
            j["nfe_condition_margin"] = s.nfe_domain_ok ? Json(s.nfe.margin) : Json(nullptr);
            j["holds"] = s.nfe_domain_ok && s.nfe.holds;
            j["uxx_ratio"] = s.uxx_ratio;
            j["uxx_ratio_bound"] = s.uxx_ratio_bound;
        } else {
            j["holds"] = s.kappa_of_c_solver > 0;
        }
        j["lambda_m"] = s.lambda_m;
        j["tolerance"] = s.tolerance;
        j["gap_ok"] = s.gap_ok;
        j["certified"] = s.certified;
        r.status = s.certified ? exit_ok : exit_hypothesis;
        return r;
    }

    StageResult speed()
    {
        if (!sys_.gain) throw PreconditionError("speed bounds need the neural_field model");
        const WaveSolution& w = wave();
        StageResult r;
        r.json = header("speed");
        Json& j = r.json;
        SpeedBounds b = speed_bounds(*sys_.gain, sys_.kernel);
        j["lower"] = b.lower;
        j["upper"] = b.upper;
        j["degenerate"] = b.degenerate;
        j["reflected"] = b.reflected;
        j["c_solver"] = w.c;
        j["c_formula"] = wave_speed_formula(w, *sys_.gain);
        const double tol = 1e-8;
        bool inside = b.lower - tol <= w.c && w.c <= b.upper + tol;
        j["tolerance"] = tol;
        if (cfg_.solver.evolution_T > 0) {
            Grid eg(grid_.L, cfg_.solver.evolution_N > 0 ? cfg_.solver.evolution_N : grid_.N);
            EvolutionResult ev = measure_speed_by_evolution(sys_, eg, cfg_.solver.evolution_T, w.scheme);
            j["c_emp"] = ev.c_emp;
            j["evolution_T"] = cfg_.solver.evolution_T;
        }
        j["inside"] = inside;
        r.status = inside ? exit_ok : exit_hypothesis;
        return r;
    }

    /// The problem handed to the ensemble, with sigma and m resolved from the config.
    SdeProblem sde_problem(double& kappa, double& Z)
    {
        if (!sys_.gain) throw PreconditionError("the stochastic simulation needs the neural_field model");
        const SmallCCertificate& s = small_c();
        kappa = s.kappa_of_c_solver;
        Z = s.Z;
        SdeProblem p;
        p.wave = wave();
        p.F = *sys_.gain;
        p.kernel = sys_.kernel;
        p.m = cfg_.sde.m ? *cfg_.sde.m : cfg_.sde.m_over_Z * Z;
        p.noise_L = grid_.L;
        p.noise_width = 2 * grid_.L / cfg_.sde.K;
        double sigma = 0;
        if (cfg_.sde.sigma) {
            sigma = *cfg_.sde.sigma;
        } else {
            SdeProblem probe = p;
            probe.noise = bump_noise(p.wave.x, grid_.L, cfg_.sde.K, 0);
            SdeConstants k0 = sde_constants(probe, kappa, Z);
            double budget = kappa - k0.advection_term;
            sigma = budget > 0 ? std::sqrt(cfg_.sde.sigma_fraction * budget * k0.m_inf / k0.m_sup) : 0.0;
        }
        p.noise = bump_noise(p.wave.x, grid_.L, cfg_.sde.K, sigma);
        return p;
    }

    StageResult sde_run(std::optional<std::uint64_t> seed_override = {})
    {
        double kappa = 0, Z = 0;
        SdeProblem p = sde_problem(kappa, Z);
        SdeOptions o;
        o.n_traj = cfg_.sde.n_traj;
        o.T_max = cfg_.sde.T_max;
        o.dt = cfg_.sde.dt;
        o.init_fraction = cfg_.sde.init_fraction;
        o.checkpoints = cfg_.sde.checkpoints;
        o.seed = seed_override.value_or(cfg_.sde.seed);
        o.threads = threads_;
        o.keep_paths = cfg_.sde.paths;
        SdeRunStats st = run_ensemble(p, kappa, Z, o);
        const SdeConstants& k = st.constants;
        StageResult r;
        r.json = header("sde");
        Json& j = r.json;
        j["seed"] = o.seed;
        j["n_traj"] = o.n_traj;
        j["escapes"] = st.escapes;
        j["frequency"] = st.frequency;
        j["wilson_ci"] = Json::array({st.ci.lo, st.ci.hi});
        j["wilson_standard_error"] = st.ci.standard_error;
        j["bound"] = st.bound;
        j["bound_respected"] = st.bound_respected;
        j["b_star"] = k.b_star;
        j["M_R"] = k.M_R;
        j["kappa"] = k.kappa;
        j["kappa_tilde"] = k.kappa_tilde;
        j["Z"] = k.Z;
        j["Z_route"] = "small-c";
        j["m"] = k.m;
        j["sigma"] = k.sigma;
        j["K"] = p.noise.rank();
        j["noise_normalization"] = p.noise.normalization();
        j["dt"] = st.dt;
        j["T_max"] = st.T_max;
        j["v0_norm"] = st.v0_norm;
        j["in_hypothesis"] = k.in_hypothesis;
        j["hypotheses"] = Json{{"kappa_tilde_positive", k.kappa_tilde_positive}, {"m_above_Z", k.m_above_Z}};
        j["supermartingale"] = Json{{"within_band", st.curve.within_band},
                                    {"worst_excess", st.curve.worst_excess},
                                    {"worst_time", st.curve.t.empty() ? 0.0 : st.curve.t[st.curve.worst_index]}};
        const std::size_t nc = st.curve.t.size();
        Vec ct(nc), cm(nc), cse(nc), cref(nc);
        for (std::size_t i = 0; i < nc; ++i) {
            ct[i] = st.curve.t[i];
            cm[i] = st.curve.mean[i];
            cse[i] = st.curve.standard_error[i];
            cref[i] = st.curve.reference;
        }
        csv_.push_back({"sde_curve.csv", {"t", "mean", "standard_error", "reference"}, {ct, cm, cse, cref}});
        if (o.keep_paths) {
            std::vector<double> id, t, nv, C;
            for (std::size_t i = 0; i < st.trajectories.size(); ++i) {
                const auto& tr = st.trajectories[i];
                for (std::size_t k2 = 0; k2 < tr.t.size(); ++k2) {
                    id.push_back(static_cast<double>(i));
                    t.push_back(tr.t[k2]);
                    nv.push_back(tr.norm[k2]);
                    C.push_back(tr.C[k2]);
                }
            }
            auto vec = [](const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), v.size()).eval(); };
            csv_.push_back({"sde_paths.csv", {"trajectory", "t", "norm", "C"}, {vec(id), vec(t), vec(nv), vec(C)}});
        }
        bool ok = k.in_hypothesis && st.bound_respected && st.curve.within_band;
        r.status = ok ? exit_ok : exit_hypothesis;
        return r;
    }

    struct CsvOut {
        std::string name;
        std::vector<std::string> header;
        std::vector<Vec> columns;
    };

    /// CSV tables produced by the stages run so far.
    std::vector<CsvOut>& csv() { return csv_; }

private:
    PipelineConfig cfg_;
    int threads_;
    BistableSystem sys_;
    Grid grid_;
    std::optional<WaveSolution> wave_;
    std::unique_ptr<ConvolutionOperator> conv_;
    std::optional<CoefficientFields> coeffs_;
    std::optional<FrozenOperator> op_;
    std::optional<SpectralData> spec_;
    std::optional<GapCertificate> gap_;
    std::optional<SmallCCertificate> smallc_;
    std::vector<CsvOut> csv_;
};

} // namespace wavegap
