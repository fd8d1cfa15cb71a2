#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <openssl/evp.h>

#include "wavegap/errors.hpp"
#include "wavegap/kernel.hpp"
#include "wavegap/model.hpp"

namespace wavegap {

struct ModelConfig {
    std::string type = "neural_field"; ///< neural_field | phase_transition
    std::string kernel = "exponential"; ///< exponential | gaussian | bump | tabulated
    double kernel_scale = 1;
    std::string kernel_file;
    double beta = 20, theta = 0.4;
    double lambda = 1, k = 2, a = 0.5;
    double d = 0;
};

struct GridConfig {
    double L = 20;
    int N = 1024;
};

struct SolverConfig {
    double tol = 1e-10;
    int max_iter = 50;
    double evolution_T = 0; ///< 0 skips the evolution speed oracle
    int evolution_N = 0;    ///< 0 reuses the grid size
};

struct GapConfig {
    int n_samples = 1000;
    double trusted_threshold = 1e-8;
    double boundary_strip = 1.0;
    int energy_samples = 100;
    std::uint64_t seed = 1;
};

struct SdeConfig {
    std::optional<double> sigma;
    double sigma_fraction = 0.5; ///< share of the in-hypothesis noise budget when sigma is unset
    std::optional<double> m;
    double m_over_Z = 2;
    int K = 32;
    int n_traj = 500;
    double T_max = 0;
    double dt = 0;
    double init_fraction = 0.25;
    int checkpoints = 50;
    std::uint64_t seed = 1;
    bool paths = false;
    bool present = false; ///< the file has an [sde] section
};

struct PipelineConfig {
    ModelConfig model;
    GridConfig grid;
    SolverConfig solver;
    GapConfig gap;
    SdeConfig sde;
    std::string output_dir = ".";
    std::string source;       ///< file contents
    std::string path;
    std::string hash;         ///< sha256 of the file contents

    BistableSystem system() const;
    Kernel make_kernel() const;
};

inline std::string sha256_hex(const std::string& data)
{
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, data.data(), data.size()) != 1 || EVP_DigestFinal_ex(ctx, md, &len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw Error("sha256 failed");
    }
    EVP_MD_CTX_free(ctx);
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return os.str();
}

namespace detail {

/// 1-based line of `key` inside `[section]`, or 0.
inline int find_line(const std::string& text, const std::string& section, const std::string& key)
{
    std::istringstream is(text);
    std::string line, current;
    int n = 0;
    while (std::getline(is, line)) {
        ++n;
        auto b = line.find_first_not_of(" \t");
        if (b == std::string::npos) continue;
        line = line.substr(b);
        if (line[0] == '[') {
            current = line.substr(1, line.find(']') - 1);
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string k = line.substr(0, eq);
        k.erase(k.find_last_not_of(" \t") + 1);
        if (current == section && k == key) return n;
    }
    return 0;
}

class Reader {
public:
    Reader(const boost::property_tree::ptree& tree, const std::string& text) : tree_(tree), text_(text) {}

    [[noreturn]] void fail(const std::string& section, const std::string& key, const std::string& what) const
    {
        int line = find_line(text_, section, key);
        std::string where = line > 0 ? "line " + std::to_string(line) + ": " : "";
        throw ConfigError(where + section + "." + key + ": " + what);
    }

    std::optional<std::string> raw(const std::string& section, const std::string& key)
    {
        seen_.insert(section + "." + key);
        auto sec = tree_.get_child_optional(section);
        if (!sec) return std::nullopt;
        auto v = sec->get_optional<std::string>(key);
        if (!v) return std::nullopt;
        return *v;
    }

    std::optional<double> number(const std::string& section, const std::string& key)
    {
        auto s = raw(section, key);
        if (!s) return std::nullopt;
        try {
            std::size_t pos = 0;
            double v = std::stod(*s, &pos);
            if (s->find_first_not_of(" \t", pos) != std::string::npos) throw std::invalid_argument("trailing");
            if (!std::isfinite(v)) fail(section, key, "must be finite");
            return v;
        } catch (const std::logic_error&) {
            fail(section, key, "expected a number, got '" + *s + "'");
        }
    }

    void positive(const std::string& section, const std::string& key, double& out)
    {
        if (auto v = number(section, key)) {
            if (!(*v > 0)) fail(section, key, "must be positive");
            out = *v;
        }
    }

    void non_negative(const std::string& section, const std::string& key, double& out)
    {
        if (auto v = number(section, key)) {
            if (!(*v >= 0)) fail(section, key, "must be non-negative");
            out = *v;
        }
    }

    void count(const std::string& section, const std::string& key, int& out, int min_value)
    {
        if (auto v = number(section, key)) {
            if (*v != std::floor(*v) || *v < min_value || *v > 1e9)
                fail(section, key, "must be an integer >= " + std::to_string(min_value));
            out = static_cast<int>(*v);
        }
    }

    void seed(const std::string& section, const std::string& key, std::uint64_t& out)
    {
        if (auto s = raw(section, key)) {
            try {
                std::size_t pos = 0;
                unsigned long long v = std::stoull(*s, &pos);
                if (s->find_first_not_of(" \t", pos) != std::string::npos || s->find('-') != std::string::npos)
                    throw std::invalid_argument("bad");
                out = v;
            } catch (const std::logic_error&) {
                fail(section, key, "expected a non-negative integer seed");
            }
        }
    }

    void flag(const std::string& section, const std::string& key, bool& out)
    {
        if (auto s = raw(section, key)) {
            if (*s == "true" || *s == "1" || *s == "yes") out = true;
            else if (*s == "false" || *s == "0" || *s == "no") out = false;
            else fail(section, key, "expected true or false");
        }
    }

    void choice(const std::string& section, const std::string& key, std::string& out,
                const std::vector<std::string>& allowed)
    {
        if (auto s = raw(section, key)) {
            for (const auto& a : allowed)
                if (*s == a) {
                    out = *s;
                    return;
                }
            std::string list;
            for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
            fail(section, key, "expected one of " + list + ", got '" + *s + "'");
        }
    }

    /// Every key present in the file must have been read.
    void reject_unknown() const
    {
        for (const auto& [section, sub] : tree_) {
            if (sub.empty() && !sub.data().empty())
                throw ConfigError("key '" + section + "' must be inside a section");
            for (const auto& [key, value] : sub)
                if (!seen_.count(section + "." + key)) fail(section, key, "unknown key");
        }
    }

    bool has_section(const std::string& s) const { return static_cast<bool>(tree_.get_child_optional(s)); }

private:
    const boost::property_tree::ptree& tree_;
    const std::string& text_;
    std::set<std::string> seen_;
};

} // namespace detail

/// Parses and validates an INI configuration.
inline PipelineConfig parse_config_text(const std::string& text, const std::string& path = "<string>")
{
    boost::property_tree::ptree tree;
    std::istringstream is(text);
    try {
        boost::property_tree::ini_parser::read_ini(is, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError("line " + std::to_string(e.line()) + ": " + e.message());
    }
    for (const auto& [section, sub] : tree) {
        static const std::set<std::string> known{"model", "grid", "solver", "gap", "sde", "output"};
        if (!known.count(section)) throw ConfigError("unknown section [" + section + "]");
    }
    PipelineConfig c;
    c.source = text;
    c.path = path;
    c.hash = sha256_hex(text);
    detail::Reader r(tree, text);

    auto& m = c.model;
    r.choice("model", "type", m.type, {"neural_field", "phase_transition"});
    r.choice("model", "kernel", m.kernel, {"exponential", "gaussian", "bump", "tabulated"});
    if (m.kernel == "tabulated") {
        auto f = r.raw("model", "kernel_file");
        if (!f || f->empty()) r.fail("model", "kernel_file", "required for a tabulated kernel");
        m.kernel_file = *f;
        if (r.raw("model", "kernel_scale")) r.fail("model", "kernel_scale", "not used by a tabulated kernel");
    } else {
        if (r.raw("model", "kernel_file")) r.fail("model", "kernel_file", "only used by a tabulated kernel");
        if (!r.number("model", "kernel_scale")) r.fail("model", "kernel_scale", "missing (kernel scale is required)");
        r.positive("model", "kernel_scale", m.kernel_scale);
    }
    r.non_negative("model", "d", m.d);
    if (m.type == "neural_field") {
        r.positive("model", "beta", m.beta);
        if (auto t = r.number("model", "theta")) m.theta = *t;
        for (const char* k : {"lambda", "k", "a"})
            if (r.raw("model", k)) r.fail("model", k, "only used by the phase_transition model");
    } else {
        r.positive("model", "lambda", m.lambda);
        r.non_negative("model", "k", m.k);
        if (auto a = r.number("model", "a")) {
            if (!(*a > 0 && *a < 1)) r.fail("model", "a", "must lie in (0, 1)");
            m.a = *a;
        }
        for (const char* k : {"beta", "theta"})
            if (r.raw("model", k)) r.fail("model", k, "only used by the neural_field model");
    }

    r.positive("grid", "L", c.grid.L);
    r.count("grid", "N", c.grid.N, 16);

    r.positive("solver", "tol", c.solver.tol);
    r.count("solver", "max_iter", c.solver.max_iter, 1);
    r.non_negative("solver", "evolution_T", c.solver.evolution_T);
    r.count("solver", "evolution_N", c.solver.evolution_N, 0);
    if (c.solver.evolution_N != 0 && c.solver.evolution_N < 16)
        r.fail("solver", "evolution_N", "must be 0 or at least 16");

    r.count("gap", "n_samples", c.gap.n_samples, 1);
    r.positive("gap", "trusted_threshold", c.gap.trusted_threshold);
    if (!(c.gap.trusted_threshold < 1)) r.fail("gap", "trusted_threshold", "must be below 1");
    r.non_negative("gap", "boundary_strip", c.gap.boundary_strip);
    if (!(c.gap.boundary_strip < c.grid.L / 2)) r.fail("gap", "boundary_strip", "must be below L / 2");
    r.count("gap", "energy_samples", c.gap.energy_samples, 1);
    r.seed("gap", "seed", c.gap.seed);

    auto& s = c.sde;
    s.present = r.has_section("sde");
    if (auto v = r.number("sde", "sigma")) {
        if (!(*v >= 0)) r.fail("sde", "sigma", "must be non-negative");
        s.sigma = *v;
    }
    r.non_negative("sde", "sigma_fraction", s.sigma_fraction);
    if (auto v = r.number("sde", "m")) {
        if (!(*v > 0)) r.fail("sde", "m", "must be positive");
        s.m = *v;
    }
    r.positive("sde", "m_over_Z", s.m_over_Z);
    r.count("sde", "K", s.K, 1);
    r.count("sde", "n_traj", s.n_traj, 1);
    r.non_negative("sde", "T_max", s.T_max);
    r.non_negative("sde", "dt", s.dt);
    r.positive("sde", "init_fraction", s.init_fraction);
    r.count("sde", "checkpoints", s.checkpoints, 1);
    r.seed("sde", "seed", s.seed);
    r.flag("sde", "paths", s.paths);

    if (auto d = r.raw("output", "dir")) {
        if (d->empty()) r.fail("output", "dir", "must not be empty");
        c.output_dir = *d;
    }
    r.reject_unknown();
    return c;
}

inline PipelineConfig load_config(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path);
}

inline Kernel PipelineConfig::make_kernel() const
{
    if (model.kernel == "exponential") return Kernel::exponential(model.kernel_scale);
    if (model.kernel == "gaussian") return Kernel::gaussian(model.kernel_scale);
    if (model.kernel == "bump") return Kernel::bump(model.kernel_scale);
    std::string file = model.kernel_file;
    if (!file.empty() && file[0] != '/') {
        auto slash = path.find_last_of('/');
        if (slash != std::string::npos) file = path.substr(0, slash + 1) + file;
    }
    return Kernel::from_csv(file);
}

inline BistableSystem PipelineConfig::system() const
{
    Kernel k = make_kernel();
    if (model.type == "neural_field") return neural_field(k, Gain(model.beta, model.theta), model.d);
    return phase_transition(k, model.lambda, model.k, model.a, model.d);
}

} // namespace wavegap
