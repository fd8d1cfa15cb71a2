#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <boost/math/quadrature/gauss.hpp>
#include <fftw3.h>

#include "wavegap/errors.hpp"
#include "wavegap/kernel.hpp"

namespace wavegap {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Uniform grid on [-L, L] with N nodes.
struct Grid {
    double L = 20;
    int N = 2048;

    Grid() = default;
    Grid(double half_width, int nodes) : L(half_width), N(nodes)
    {
        if (!(L > 0)) throw ShapeError("grid half-width must be positive");
        if (N < 16) throw ShapeError("grid needs at least 16 nodes");
    }

    double h() const { return 2 * L / (N - 1); }
    double x(int i) const { return i == N - 1 ? L : -L + i * h(); }
    int interior() const { return N - 2; }

    Vec nodes() const
    {
        Vec v(N);
        for (int i = 0; i < N; ++i) v[i] = x(i);
        return v;
    }

    /// Coordinates of nodes 1..N-2.
    Vec interior_nodes() const { return nodes().segment(1, N - 2); }
};

/// Which function of the kernel is integrated against the grid interpolant.
enum class ConvolutionWeight { Kernel, LogDerivativeSquared };

/// Product-integration convolution on a truncated grid.
///
/// The kernel is integrated exactly (16-point Gauss-Legendre per smooth piece)
/// against the piecewise-linear interpolant of the grid samples; values beyond
/// [-L, L] are constant and closed with the analytic kernel tail mass.
class ConvolutionOperator {
public:
    static constexpr int fft_threshold = 4096;

    ConvolutionOperator(const Grid& grid, const Kernel& kernel,
                        ConvolutionWeight weight = ConvolutionWeight::Kernel)
        : grid_(grid), kernel_(kernel), weight_(weight)
    {
        const int N = grid.N;
        const double h = grid.h();
        lag_.assign(2 * N - 1, 0.0);
        auto f = [&](double z) {
            return weight_ == ConvolutionWeight::Kernel ? kernel_(z) : kernel_.dx2_over_w(z);
        };
        const auto& gx = boost::math::quadrature::gauss<double, 16>::abscissa();
        const auto& gw = boost::math::quadrature::gauss<double, 16>::weights();
        auto integrate = [&](int k, double s0, double s1) {
            double mid = 0.5 * (s0 + s1), half = 0.5 * (s1 - s0), acc = 0;
            auto term = [&](double s) { return f(k * h - s) * (1 - s / h); };
            for (std::size_t q = 0; q < gx.size(); ++q) {
                if (gx[q] == 0) {
                    acc += gw[q] * term(mid);
                } else {
                    acc += gw[q] * (term(mid - half * gx[q]) + term(mid + half * gx[q]));
                }
            }
            return acc * half;
        };
        const double reach = kernel_.effective_radius() + 2 * h;
        const auto bps = kernel_.breakpoints();
        for (int k = -(N - 1); k <= N - 1; ++k) {
            if (std::abs(k) * h > reach) continue;
            std::vector<double> cuts{0.0};
            for (double b : bps) {
                double s = k * h - b;
                if (s > 1e-14 * h && s < h * (1 - 1e-14)) cuts.push_back(s);
            }
            cuts.push_back(h);
            std::sort(cuts.begin(), cuts.end());
            double a = 0;
            for (std::size_t c = 0; c + 1 < cuts.size(); ++c) a += integrate(k, cuts[c], cuts[c + 1]);
            lag_[k + N - 1] = a;
        }
        tail_left_.resize(N);
        tail_right_.resize(N);
        for (int i = 0; i < N; ++i) {
            double xi = grid.x(i);
            if (weight_ == ConvolutionWeight::Kernel) {
                tail_left_[i] = kernel_.upper_mass(xi + grid.L);
                tail_right_[i] = kernel_.lower_mass(grid.L - xi);
            } else {
                tail_left_[i] = tail_right_[i] = 0;
            }
        }
        prepare_fft();
    }

    ConvolutionOperator(const ConvolutionOperator&) = default;
    ConvolutionOperator& operator=(const ConvolutionOperator&) = default;

    const Grid& grid() const { return grid_; }
    const Kernel& kernel() const { return kernel_; }

    /// A(k) = int_0^h w(kh - s)(1 - s/h) ds.
    double lag_weight(int k) const { return lag_[k + grid_.N - 1]; }

    double entry(int i, int j) const
    {
        const int N = grid_.N;
        if (j == 0) return lag_weight(i);
        if (j == N - 1) return lag_weight(N - 1 - i);
        return lag_weight(i - j) + lag_weight(j - i);
    }

    /// Dense N x N quadrature matrix.
    Mat matrix() const
    {
        const int N = grid_.N;
        Mat W(N, N);
        for (int j = 0; j < N; ++j)
            for (int i = 0; i < N; ++i) W(i, j) = entry(i, j);
        return W;
    }

    /// Rows and columns 1..N-2 of the quadrature matrix.
    Mat interior_matrix() const
    {
        const int n = grid_.N - 2;
        Mat W(n, n);
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) W(i, j) = lag_weight(i - j) + lag_weight(j - i);
        return W;
    }

    const Vec& tail_left() const { return tail_left_; }
    const Vec& tail_right() const { return tail_right_; }

    Vec apply(const Vec& v, double tl, double tr) const
    {
        if (v.size() != grid_.N) throw ShapeError("convolve: vector length does not match grid");
        return grid_.N <= fft_threshold ? apply_dense(v, tl, tr) : apply_fft(v, tl, tr);
    }

    Vec apply_dense(const Vec& v, double tl, double tr) const
    {
        if (v.size() != grid_.N) throw ShapeError("convolve: vector length does not match grid");
        const int N = grid_.N;
        Vec y(N);
        for (int i = 0; i < N; ++i) {
            double acc = 0;
            for (int j = 0; j < N; ++j) acc += entry(i, j) * v[j];
            y[i] = acc + tl * tail_left_[i] + tr * tail_right_[i];
        }
        return y;
    }

    Vec apply_fft(const Vec& v, double tl, double tr) const
    {
        if (v.size() != grid_.N) throw ShapeError("convolve: vector length does not match grid");
        const int N = grid_.N, P = 2 * N;
        std::vector<double> buf(P, 0.0);
        for (int i = 0; i < N; ++i) buf[i] = v[i];
        std::vector<std::complex<double>> spec(P / 2 + 1);
        {
            std::lock_guard<std::mutex> lock(fftw_mutex());
            fftw_plan p = fftw_plan_dft_r2c_1d(P, buf.data(), reinterpret_cast<fftw_complex*>(spec.data()),
                                               FFTW_ESTIMATE);
            fftw_execute(p);
            fftw_destroy_plan(p);
        }
        for (std::size_t k = 0; k < spec.size(); ++k) spec[k] *= kernel_hat_[k];
        {
            std::lock_guard<std::mutex> lock(fftw_mutex());
            fftw_plan p = fftw_plan_dft_c2r_1d(P, reinterpret_cast<fftw_complex*>(spec.data()), buf.data(),
                                               FFTW_ESTIMATE);
            fftw_execute(p);
            fftw_destroy_plan(p);
        }
        Vec y(N);
        for (int i = 0; i < N; ++i) {
            double corr = lag_weight(-i) * v[0] + lag_weight(i - (N - 1)) * v[N - 1];
            y[i] = buf[i] / P - corr + tl * tail_left_[i] + tr * tail_right_[i];
        }
        return y;
    }

    /// O(N) two-sweep evaluation, exact for the exponential family.
    Vec apply_recursive(const Vec& v, double tl, double tr) const
    {
        if (kernel_.family() != KernelFamily::Exponential || weight_ != ConvolutionWeight::Kernel)
            return apply(v, tl, tr);
        if (v.size() != grid_.N) throw ShapeError("convolve: vector length does not match grid");
        const int N = grid_.N;
        const double rho = std::exp(-grid_.h() / kernel_.scale());
        const double A0 = lag_weight(0), A1 = lag_weight(1), B = A1 + rho * A0;
        Vec y(N);
        double s = 0, b = 0;
        for (int i = 0; i < N; ++i) {
            double inner = (i >= 1 && i <= N - 2) ? v[i] : 0.0;
            double left = i == 0 ? A0 * v[0] : b;
            y[i] = B * s + 2 * A0 * inner + left;
            s = rho * s + inner;
            b = i == 0 ? A1 * v[0] : rho * b;
        }
        s = 0;
        b = 0;
        for (int i = N - 1; i >= 0; --i) {
            double inner = (i >= 1 && i <= N - 2) ? v[i] : 0.0;
            double right = i == N - 1 ? A0 * v[N - 1] : b;
            y[i] += B * s + right + tl * tail_left_[i] + tr * tail_right_[i];
            s = rho * s + inner;
            b = i == N - 1 ? A1 * v[N - 1] : rho * b;
        }
        return y;
    }

private:
    static std::mutex& fftw_mutex()
    {
        static std::mutex m;
        return m;
    }

    void prepare_fft()
    {
        const int N = grid_.N, P = 2 * N;
        std::vector<double> c(P, 0.0);
        for (int m = 0; m < N; ++m) {
            double a = lag_weight(m) + lag_weight(-m);
            c[m] = a;
            if (m > 0) c[P - m] = a;
        }
        kernel_hat_.assign(P / 2 + 1, {});
        std::lock_guard<std::mutex> lock(fftw_mutex());
        fftw_plan p = fftw_plan_dft_r2c_1d(P, c.data(), reinterpret_cast<fftw_complex*>(kernel_hat_.data()),
                                           FFTW_ESTIMATE);
        fftw_execute(p);
        fftw_destroy_plan(p);
    }

    Grid grid_;
    Kernel kernel_;
    ConvolutionWeight weight_;
    std::vector<double> lag_;
    Vec tail_left_, tail_right_;
    std::vector<std::complex<double>> kernel_hat_;
};

/// w * v on the grid with constant extensions tl (x < -L) and tr (x > L).
inline Vec convolve(const ConvolutionOperator& op, const Vec& v, double tail_left, double tail_right)
{
    return op.apply(v, tail_left, tail_right);
}

/// Second-order centered first and second differences, one-sided second order at the ends.
inline std::pair<Eigen::SparseMatrix<double>, Eigen::SparseMatrix<double>> diff_matrices(const Grid& grid)
{
    const int N = grid.N;
    const double h = grid.h();
    std::vector<Eigen::Triplet<double>> t1, t2;
    t1.emplace_back(0, 0, -1.5 / h);
    t1.emplace_back(0, 1, 2.0 / h);
    t1.emplace_back(0, 2, -0.5 / h);
    t1.emplace_back(N - 1, N - 1, 1.5 / h);
    t1.emplace_back(N - 1, N - 2, -2.0 / h);
    t1.emplace_back(N - 1, N - 3, 0.5 / h);
    const double h2 = h * h;
    t2.emplace_back(0, 0, 2 / h2);
    t2.emplace_back(0, 1, -5 / h2);
    t2.emplace_back(0, 2, 4 / h2);
    t2.emplace_back(0, 3, -1 / h2);
    t2.emplace_back(N - 1, N - 1, 2 / h2);
    t2.emplace_back(N - 1, N - 2, -5 / h2);
    t2.emplace_back(N - 1, N - 3, 4 / h2);
    t2.emplace_back(N - 1, N - 4, -1 / h2);
    for (int i = 1; i < N - 1; ++i) {
        t1.emplace_back(i, i - 1, -0.5 / h);
        t1.emplace_back(i, i + 1, 0.5 / h);
        t2.emplace_back(i, i - 1, 1 / h2);
        t2.emplace_back(i, i, -2 / h2);
        t2.emplace_back(i, i + 1, 1 / h2);
    }
    Eigen::SparseMatrix<double> D1(N, N), D2(N, N);
    D1.setFromTriplets(t1.begin(), t1.end());
    D2.setFromTriplets(t2.begin(), t2.end());
    return {std::move(D1), std::move(D2)};
}

/// Translation-invariant difference stencil acting on interior vectors.
///
/// Values outside the interior are the constants passed to apply(); this is
/// how the far-field states a1, a2 (or zero for perturbations) enter.
class Stencil {
public:
    /// order in {2, 4, 6, 8}: centered; upwind_sign != 0 adds the 5th-order
    /// upwind-biased correction sign * Delta^6 / (60 h) to the 6th-order stencil.
    static Stencil first_derivative(int order, double h, int upwind_sign = 0)
    {
        static const std::vector<std::vector<double>> central{
            {}, {}, {0.5}, {}, {2.0 / 3, -1.0 / 12}, {}, {0.75, -0.15, 1.0 / 60}, {},
            {0.8, -0.2, 4.0 / 105, -1.0 / 280}};
        if (upwind_sign != 0) order = 6;
        if (order < 2 || order > 8 || order % 2) throw ShapeError("unsupported difference order");
        Stencil s;
        const auto& c = central[order];
        for (std::size_t k = 0; k < c.size(); ++k) {
            int off = static_cast<int>(k) + 1;
            s.add(off, c[k] / h);
            s.add(-off, -c[k] / h);
        }
        if (upwind_sign != 0) {
            static const double d6[7] = {1, -6, 15, -20, 15, -6, 1};
            for (int k = -3; k <= 3; ++k) s.add(k, upwind_sign * d6[k + 3] / (60 * h));
        }
        return s;
    }

    static Stencil second_derivative(int order, double h)
    {
        static const std::vector<std::vector<double>> central{
            {}, {}, {-2, 1}, {}, {-2.5, 4.0 / 3, -1.0 / 12}, {}, {-49.0 / 18, 1.5, -0.15, 1.0 / 90}, {},
            {-205.0 / 72, 1.6, -0.2, 8.0 / 315, -1.0 / 560}};
        if (order < 2 || order > 8 || order % 2) throw ShapeError("unsupported difference order");
        Stencil s;
        const auto& c = central[order];
        s.add(0, c[0] / (h * h));
        for (std::size_t k = 1; k < c.size(); ++k) {
            s.add(static_cast<int>(k), c[k] / (h * h));
            s.add(-static_cast<int>(k), c[k] / (h * h));
        }
        return s;
    }

    const std::vector<std::pair<int, double>>& taps() const { return taps_; }

    Vec apply(const Vec& u, double left, double right) const
    {
        const Eigen::Index n = u.size();
        Vec y(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            double acc = 0;
            for (const auto& [off, c] : taps_) {
                Eigen::Index j = i + off;
                double v = j < 0 ? left : (j >= n ? right : u[j]);
                acc += c * v;
            }
            y[i] = acc;
        }
        return y;
    }

    /// Like apply, but ghost values continue the geometric approach of u to the far-field constants.
    Vec apply_extrapolated(const Vec& u, double left, double right) const
    {
        const Eigen::Index n = u.size();
        auto ratio = [](double near, double next) {
            if (near == 0 || next == 0 || (near > 0) != (next > 0)) return 0.0;
            double r = near / next;
            return r < 1 ? r : 0.0;
        };
        const double el = u[0] - left, rl = ratio(el, u[1] - left);
        const double er = u[n - 1] - right, rr = ratio(er, u[n - 2] - right);
        Vec y(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            double acc = 0;
            for (const auto& [off, c] : taps_) {
                Eigen::Index j = i + off;
                double v = j < 0 ? left + el * std::pow(rl, static_cast<double>(-j))
                                 : (j >= n ? right + er * std::pow(rr, static_cast<double>(j - n + 1)) : u[j]);
                acc += c * v;
            }
            y[i] = acc;
        }
        return y;
    }

    /// Matrix of the stencil with zero far-field values.
    Mat matrix(Eigen::Index n) const
    {
        Mat D = Mat::Zero(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (const auto& [off, c] : taps_) {
                Eigen::Index j = i + off;
                if (j >= 0 && j < n) D(i, j) += c;
            }
        return D;
    }

private:
    void add(int off, double c)
    {
        for (auto& t : taps_)
            if (t.first == off) {
                t.second += c;
                return;
            }
        taps_.emplace_back(off, c);
        std::sort(taps_.begin(), taps_.end());
    }

    std::vector<std::pair<int, double>> taps_;
};

/// Extends an interior vector by its two boundary values.
inline Vec with_boundary(const Vec& interior, double left, double right)
{
    Vec v(interior.size() + 2);
    v[0] = left;
    v.segment(1, interior.size()) = interior;
    v[v.size() - 1] = right;
    return v;
}

} // namespace wavegap
