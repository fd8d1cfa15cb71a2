"""Reference values frozen into the C++ tests, computed without the library.

Run: python3 tests/oracles/compute_oracles.py
"""
import numpy as np
from scipy.optimize import brentq
from scipy.integrate import quad
from scipy.signal import fftconvolve


def logistic(beta, theta):
    return lambda u: 1.0 / (1.0 + np.exp(-beta * (u - theta)))


def fixed_points(F):
    g = lambda x: x - F(x)
    xs = np.linspace(-1, 2, 30001)
    v = g(xs)
    roots = [brentq(g, xs[i], xs[i + 1], xtol=1e-15) for i in range(len(xs) - 1) if v[i] * v[i + 1] < 0]
    return roots


def speed_bounds(beta, theta, sigma):
    F = logistic(beta, theta)
    a1, a, a2 = fixed_points(F)
    d = lambda x: x - F(x)
    num = quad(d, a1, a2, epsabs=1e-14, epsrel=1e-14)[0]
    low = quad(d, a1, a, epsabs=1e-14, epsrel=1e-14)[0]
    up = -quad(d, a, a2, epsabs=1e-14, epsrel=1e-14)[0]
    if num > 0:
        return (sigma / (np.sqrt(2) * (a2 - a1)) * num / np.sqrt(low), sigma / 4 * num / up)
    n = abs(num)
    return (-sigma / 4 * n / low, -sigma / (np.sqrt(2) * (a2 - a1)) * n / np.sqrt(up))


def evolution_speed(beta, theta, sigma=1.0, L=60.0, h=0.01, dt=0.02, T=60.0):
    """Front tracking for u_t = -u + w * F(u) on a wide interval padded with the far-field states."""
    F = logistic(beta, theta)
    a1, a, a2 = fixed_points(F)
    x = np.arange(-L, L + h / 2, h)
    R = 30 * sigma
    z = np.arange(-R, R + h / 2, h)
    w = np.exp(-np.abs(z) / sigma) / (2 * sigma)
    wt = w * h
    wt[0] *= 0.5
    wt[-1] *= 0.5
    wt /= wt.sum()
    m = len(z) // 2
    u = np.where(x < 0, a1, a2).astype(float)

    def rhs(u):
        g = F(u)
        gp = np.concatenate([np.full(m, F(a1)), g, np.full(m, F(a2))])
        return -u + fftconvolve(gp, wt, mode="valid")

    ts, ps = [], []
    steps = int(round(T / dt))
    for s in range(1, steps + 1):
        k1 = rhs(u)
        k2 = rhs(u + 0.5 * dt * k1)
        k3 = rhs(u + 0.5 * dt * k2)
        k4 = rhs(u + dt * k3)
        u = u + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        i = np.nonzero((u[:-1] < a) & (u[1:] >= a))[0][0]
        ts.append(s * dt)
        ps.append(x[i] + (a - u[i]) / (u[i + 1] - u[i]) * h)
    ts, ps = np.array(ts), np.array(ps)
    sel = ts >= T / 2
    return np.polyfit(ts[sel], ps[sel], 1)[0]


def wilson(k, n, z):
    p = k / n
    half = lambda zz: zz * np.sqrt(p * (1 - p) / n + zz * zz / (4 * n * n)) / (1 + zz * zz / n)
    c = (p + z * z / (2 * n)) / (1 + z * z / n)
    return max(0.0, c - half(z)), min(1.0, c + half(z)), half(1.0)


def laplace_poincare(alpha, L):
    """Neumann gap of -(mu v')' / mu on [-L, L] for mu = e^{-alpha |x|}, by shooting."""
    # v'' - alpha sign(x) v' + lam v = 0, v odd, v'(L) = 0.
    from scipy.integrate import solve_ivp

    def end(lam):
        sol = solve_ivp(lambda t, y: [y[1], alpha * y[1] - lam * y[0]], [0, L], [0.0, 1.0], rtol=1e-12, atol=1e-14)
        return sol.y[1, -1]

    lams = np.linspace(alpha * alpha / 4 + 1e-6, alpha * alpha / 4 + 1.0, 400)
    vals = [end(l) for l in lams]
    for i in range(len(lams) - 1):
        if vals[i] * vals[i + 1] < 0:
            return 1 / brentq(end, lams[i], lams[i + 1], xtol=1e-14)


if __name__ == "__main__":
    np.set_printoptions(precision=17)
    for beta, theta in [(20, 0.4), (8, 0.5), (8, 0.45), (20, 0.48)]:
        print("fixed points", beta, theta, ["%.17g" % r for r in fixed_points(logistic(beta, theta))])
    for sigma in (0.5, 1.0, 2.0):
        print("speed bounds 20 0.4 sigma", sigma, ["%.17g" % b for b in speed_bounds(20, 0.4, sigma)])
    print("speed bounds 8 0.45 sigma 1", ["%.17g" % b for b in speed_bounds(8, 0.45, 1.0)])
    print("evolution speed 20 0.4", "%.10g" % evolution_speed(20, 0.4))
    for k, n in [(0, 500), (12, 500), (250, 500)]:
        print("wilson", k, n, ["%.17g" % v for v in wilson(k, n, 1.96)])
    print("laplace poincare alpha=1 L=20", "%.12g" % laplace_poincare(1.0, 20.0))
