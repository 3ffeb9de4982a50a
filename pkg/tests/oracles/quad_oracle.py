"""Independent oracle for frame-level expectations.

Integrates the max-form integrands directly, e.g. E[max(t, Z_D^2)], with
nested adaptive quadrature over the delay density and the normal score,
split at the kink ``Z^2 = t``.  Shares no code with the package.  Run once;
the printed values are frozen into tests/test_analytic.py.

    python tests/oracles/quad_oracle.py
"""
import math

from scipy import integrate, stats

PHI = stats.norm.pdf
U_MAX = 14.0


def inner(d, t, f):
    """E[f(Z^2)] for Z ~ N(0, d), integrating over the score u >= 0 in two
    pieces either side of u0 = sqrt(t / d)."""
    if d == 0:
        return f(0.0)
    u0 = min(math.sqrt(t / d), U_MAX)
    total = 0.0
    for lo, hi in ((0.0, u0), (u0, U_MAX)):
        if hi > lo:
            v, _ = integrate.quad(lambda u: 2 * PHI(u) * f(d * u * u), lo, hi, limit=200, epsabs=1e-14, epsrel=1e-12)
            total += v
    return total


def outer(model, t, f):
    kind, p = model
    if kind == "det":
        return inner(p[0], t, f)
    if kind == "uniform":
        a, b = p
        v, _ = integrate.quad(lambda d: inner(d, t, f) / (b - a), a, b, limit=200, epsabs=1e-13, epsrel=1e-11)
        return v
    mu, sig = p
    v, _ = integrate.quad(lambda z: PHI(z) * inner(math.exp(mu + sig * z), t, f), -9, 2 * sig + 9,
                          limit=200, epsabs=1e-11, epsrel=1e-11)
    return v


MODELS = {"det1": ("det", (1.0,)), "uniform01": ("uniform", (0.0, 1.0)), "lognormal": ("lognormal", (0.8, 1.2))}
POINTS = {"det1": (0.5, 1.0, 2.0), "uniform01": (0.25, 1.0), "lognormal": (3.0, 13.8)}

if __name__ == "__main__":
    for name, model in MODELS.items():
        for t in POINTS[name]:
            g = t / 3
            l = outer(model, t, lambda x: max(t, x))
            q = outer(model, t, lambda x: max(t, x) ** 2 / 6)
            pw = outer(model, t, lambda x: 1.0 if x <= t else 0.0)
            gb = outer(model, t, lambda x: max(t, x) ** 2 / 6 - g * max(t, x))
            print(f"{name} tau2={t}: l={l:.13g} q={q:.13g} pw={pw:.12g} gbar0={gb:.13g}", flush=True)
