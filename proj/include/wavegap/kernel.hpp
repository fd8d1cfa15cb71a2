#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "wavegap/errors.hpp"

namespace wavegap {

enum class KernelFamily { Exponential, Gaussian, Bump, Tabulated };

/// Even or tabulated synaptic kernel w with unit mass.
///
/// Exposes w, w_x, the log-derivative w_x/w on the support, the squared
/// log-derivative weight w_x^2/w, and one-sided tail masses.
class Kernel {
public:
    static Kernel exponential(double sigma)
    {
        if (!(sigma > 0)) throw KernelError("exponential kernel scale must be positive");
        Kernel k;
        k.family_ = KernelFamily::Exponential;
        k.scale_ = sigma;
        return k;
    }

    static Kernel gaussian(double s)
    {
        if (!(s > 0)) throw KernelError("gaussian kernel scale must be positive");
        Kernel k;
        k.family_ = KernelFamily::Gaussian;
        k.scale_ = s;
        return k;
    }

    static Kernel bump(double b)
    {
        if (!(b > 0)) throw KernelError("bump half-width must be positive");
        Kernel k;
        k.family_ = KernelFamily::Bump;
        k.scale_ = b;
        return k;
    }

    /// Piecewise-linear kernel through (xs, ws), renormalized to unit mass.
    static Kernel tabulated(std::vector<double> xs, std::vector<double> ws)
    {
        if (xs.size() != ws.size() || xs.size() < 3)
            throw KernelError("kernel table needs at least three (x, w) rows");
        for (std::size_t i = 1; i < xs.size(); ++i)
            if (!(xs[i] > xs[i - 1])) throw KernelError("kernel table abscissae must increase");
        for (double w : ws)
            if (!(w >= 0)) throw KernelError("kernel table values must be nonnegative");
        double mass = 0;
        for (std::size_t i = 1; i < xs.size(); ++i) mass += 0.5 * (ws[i] + ws[i - 1]) * (xs[i] - xs[i - 1]);
        if (!(mass > 0)) throw KernelError("kernel table has zero mass");
        for (double& w : ws) w /= mass;
        Kernel k;
        k.family_ = KernelFamily::Tabulated;
        k.xs_ = std::move(xs);
        k.ws_ = std::move(ws);
        k.cum_.assign(k.xs_.size(), 0.0);
        for (std::size_t i = 1; i < k.xs_.size(); ++i)
            k.cum_[i] = k.cum_[i - 1] + 0.5 * (k.ws_[i] + k.ws_[i - 1]) * (k.xs_[i] - k.xs_[i - 1]);
        double m2 = 0;
        for (std::size_t i = 1; i < k.xs_.size(); ++i) {
            double x0 = k.xs_[i - 1], x1 = k.xs_[i], w0 = k.ws_[i - 1], w1 = k.ws_[i];
            // exact second moment of the linear segment
            m2 += (x1 - x0) * (w0 * (3 * x0 * x0 + 2 * x0 * x1 + x1 * x1) + w1 * (x0 * x0 + 2 * x0 * x1 + 3 * x1 * x1)) / 12;
        }
        k.scale_ = std::sqrt(m2 / 2); // matches sigma for a two-sided exponential
        return k;
    }

    /// Two-column CSV (x, w). Lines starting with '#' and a non-numeric header are skipped.
    static Kernel from_csv(const std::string& path)
    {
        std::ifstream in(path);
        if (!in) throw KernelError("cannot open kernel table " + path);
        std::vector<double> xs, ws;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            std::replace(line.begin(), line.end(), ',', ' ');
            std::istringstream ss(line);
            double x, w;
            if (!(ss >> x >> w)) {
                if (xs.empty()) continue;
                throw KernelError("malformed kernel table row: " + line);
            }
            xs.push_back(x);
            ws.push_back(w);
        }
        return tabulated(std::move(xs), std::move(ws));
    }

    KernelFamily family() const { return family_; }
    double scale() const { return scale_; }

    std::string name() const
    {
        switch (family_) {
        case KernelFamily::Exponential: return "exponential";
        case KernelFamily::Gaussian: return "gaussian";
        case KernelFamily::Bump: return "bump";
        case KernelFamily::Tabulated: return "table";
        }
        return "?";
    }

    double operator()(double x) const
    {
        switch (family_) {
        case KernelFamily::Exponential: return std::exp(-std::abs(x) / scale_) / (2 * scale_);
        case KernelFamily::Gaussian:
            return std::exp(-x * x / (2 * scale_ * scale_)) / (scale_ * std::sqrt(2 * std::numbers::pi));
        case KernelFamily::Bump:
            return std::abs(x) < scale_ ? (1 + std::cos(std::numbers::pi * x / scale_)) / (2 * scale_) : 0.0;
        case KernelFamily::Tabulated: return table_value(x);
        }
        return 0;
    }

    /// w_x, with w_x(0) := 0 at the exponential kink.
    double dx(double x) const
    {
        switch (family_) {
        case KernelFamily::Exponential: return x == 0 ? 0.0 : -sgn(x) / scale_ * (*this)(x);
        case KernelFamily::Gaussian: return -x / (scale_ * scale_) * (*this)(x);
        case KernelFamily::Bump:
            return std::abs(x) < scale_
                       ? -std::numbers::pi * std::sin(std::numbers::pi * x / scale_) / (2 * scale_ * scale_)
                       : 0.0;
        case KernelFamily::Tabulated: {
            if (x <= xs_.front() || x >= xs_.back()) return 0.0;
            auto i = segment(x);
            return (ws_[i + 1] - ws_[i]) / (xs_[i + 1] - xs_[i]);
        }
        }
        return 0;
    }

    /// w_x / w on the support, 0 outside it.
    double log_derivative(double x) const
    {
        switch (family_) {
        case KernelFamily::Exponential: return x == 0 ? 0.0 : -sgn(x) / scale_;
        case KernelFamily::Gaussian: return -x / (scale_ * scale_);
        default: {
            double w = (*this)(x);
            return w > 0 ? dx(x) / w : 0.0;
        }
        }
    }

    /// w_x^2 / w, the weight that turns p0 into the Assumption-1 integrand.
    double dx2_over_w(double x) const
    {
        switch (family_) {
        case KernelFamily::Exponential: return (*this)(x) / (scale_ * scale_);
        case KernelFamily::Gaussian: return x * x / std::pow(scale_, 4) * (*this)(x);
        case KernelFamily::Bump:
            return std::abs(x) < scale_
                       ? std::numbers::pi * std::numbers::pi * (1 - std::cos(std::numbers::pi * x / scale_))
                             / (2 * std::pow(scale_, 3))
                       : 0.0;
        case KernelFamily::Tabulated: {
            double w = (*this)(x);
            double d = dx(x);
            return w > 0 ? d * d / w : 0.0;
        }
        }
        return 0;
    }

    /// Mass on [r, inf).
    double upper_mass(double r) const
    {
        switch (family_) {
        case KernelFamily::Exponential:
            return r >= 0 ? 0.5 * std::exp(-r / scale_) : 1 - 0.5 * std::exp(r / scale_);
        case KernelFamily::Gaussian: return 0.5 * std::erfc(r / (scale_ * std::sqrt(2.0)));
        case KernelFamily::Bump: {
            if (r >= scale_) return 0.0;
            if (r <= -scale_) return 1.0;
            return (scale_ - r) / (2 * scale_) - std::sin(std::numbers::pi * r / scale_) / (2 * std::numbers::pi);
        }
        case KernelFamily::Tabulated: return 1.0 - table_cdf(r);
        }
        return 0;
    }

    /// Mass on (-inf, -r].
    double lower_mass(double r) const
    {
        if (family_ == KernelFamily::Tabulated) return table_cdf(-r);
        return upper_mass(r);
    }

    /// Points where w or w_x may be nonsmooth.
    std::vector<double> breakpoints() const
    {
        switch (family_) {
        case KernelFamily::Exponential: return {0.0};
        case KernelFamily::Gaussian: return {};
        case KernelFamily::Bump: return {-scale_, scale_};
        case KernelFamily::Tabulated: return xs_;
        }
        return {};
    }

    /// Radius outside which w vanishes (or is below 1e-17 of its peak).
    double effective_radius() const
    {
        switch (family_) {
        case KernelFamily::Exponential: return 40 * scale_;
        case KernelFamily::Gaussian: return 9 * scale_;
        case KernelFamily::Bump: return scale_;
        case KernelFamily::Tabulated: return std::max(xs_.back(), -xs_.front());
        }
        return 0;
    }

    double sup() const
    {
        switch (family_) {
        case KernelFamily::Exponential: return 1 / (2 * scale_);
        case KernelFamily::Gaussian: return 1 / (scale_ * std::sqrt(2 * std::numbers::pi));
        case KernelFamily::Bump: return 1 / scale_;
        case KernelFamily::Tabulated: return *std::max_element(ws_.begin(), ws_.end());
        }
        return 0;
    }

    /// ||w_x / w||_inf on the support; infinite for gaussian and bump.
    double sup_log_derivative() const
    {
        switch (family_) {
        case KernelFamily::Exponential: return 1 / scale_;
        case KernelFamily::Tabulated: {
            double m = 0;
            for (std::size_t i = 0; i + 1 < xs_.size(); ++i) {
                double s = std::abs((ws_[i + 1] - ws_[i]) / (xs_[i + 1] - xs_[i]));
                double lo = std::min(ws_[i], ws_[i + 1]);
                if (s == 0) continue;
                if (!(lo > 0)) return std::numeric_limits<double>::infinity();
                m = std::max(m, s / lo);
            }
            return m;
        }
        default: return std::numeric_limits<double>::infinity();
        }
    }

private:
    static double sgn(double x) { return (x > 0) - (x < 0); }

    std::size_t segment(double x) const
    {
        auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
        return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(it - xs_.begin() - 1, 0, xs_.size() - 2));
    }

    double table_value(double x) const
    {
        if (x < xs_.front() || x > xs_.back()) return 0.0;
        auto i = segment(x);
        double t = (x - xs_[i]) / (xs_[i + 1] - xs_[i]);
        return ws_[i] + t * (ws_[i + 1] - ws_[i]);
    }

    double table_cdf(double x) const
    {
        if (x <= xs_.front()) return 0.0;
        if (x >= xs_.back()) return 1.0;
        auto i = segment(x);
        double dx = x - xs_[i];
        double slope = (ws_[i + 1] - ws_[i]) / (xs_[i + 1] - xs_[i]);
        return cum_[i] + ws_[i] * dx + 0.5 * slope * dx * dx;
    }

    KernelFamily family_ = KernelFamily::Exponential;
    double scale_ = 1;
    std::vector<double> xs_, ws_, cum_;
};

} // namespace wavegap
