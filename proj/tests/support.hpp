#pragma once

#include <map>
#include <memory>
#include <string>

#include "wavegap/gap.hpp"
#include "wavegap/model.hpp"
#include "wavegap/smallc.hpp"
#include "wavegap/spectral.hpp"
#include "wavegap/wave.hpp"

namespace testing {

using namespace wavegap;

/// A solved preset with its frozen operator and densities, built once per test binary.
struct Preset {
    BistableSystem sys;
    Grid grid;
    WaveSolution wave;
    std::unique_ptr<ConvolutionOperator> conv;
    CoefficientFields k;
    FrozenOperator op;
    SpectralData s;

    Preset(BistableSystem system, Grid g) : sys(std::move(system)), grid(g)
    {
        wave = solve_wave(sys, grid);
        conv = std::make_unique<ConvolutionOperator>(grid, sys.kernel);
        k = coefficient_fields(sys, *conv, wave.u, wave.a1, wave.a2);
        op = assemble(k, wave.c, sys.d, *conv, wave.scheme);
        Vec psi = adjoint_eigenfunction(op, wave.ux);
        s = build_densities(op, wave.x, wave.ux, psi, k);
    }
};

inline BistableSystem nfe(double beta, double theta, double sigma = 1.0)
{
    return neural_field(Kernel::exponential(sigma), Gain(beta, theta));
}

inline const Preset& preset(const std::string& name, int N = 1024)
{
    static std::map<std::pair<std::string, int>, std::unique_ptr<Preset>> cache;
    auto key = std::make_pair(name, N);
    auto it = cache.find(key);
    if (it != cache.end()) return *it->second;
    Grid g(20, N);
    BistableSystem sys;
    if (name == "asym") sys = nfe(20, 0.4);
    else if (name == "sym") sys = nfe(20, 0.5);
    else if (name == "sym8") sys = nfe(8, 0.5);
    else if (name == "slow") sys = nfe(20, 0.48);
    else if (name == "mid") sys = nfe(8, 0.45);
    else if (name == "conv") sys = phase_transition(Kernel::exponential(1), 1, 2, 0.5);
    else throw std::invalid_argument("unknown preset " + name);
    auto p = std::make_unique<Preset>(std::move(sys), g);
    const Preset& ref = *p;
    cache.emplace(key, std::move(p));
    return ref;
}

} // namespace testing
