"""Fujita heat problem u_t - Lap u = |u|^p: semigroup super-solution and lifespan lower bound.

With ``S(t) = ||e^{t Lap} f_eps||_inf`` the function
``U = h(t)^{-1/(p-1)} e^{t Lap} f_eps`` where ``h(t) = 1 - (p-1) int_0^t S^{p-1}``
is a super-solution, so the lifespan is at least ``t_eps = sup{t : h(t) > 0}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from numba import njit
from numpy.polynomial import legendre as L
from scipy.optimize import minimize_scalar
from scipy.special import ive

from .quadrature import gauss_legendre
from .wave_solver import DomainTooSmallError, LifespanRecord, SolveConfig, _laplacian


class SamplingError(ValueError):
    pass


@lru_cache(maxsize=None)
def _hermite(n):
    x, w = np.polynomial.hermite.hermgauss(n)
    return x, w / math.sqrt(math.pi)


@dataclass(frozen=True)
class HeatData:
    """Nonnegative data profile for the heat semigroup.

    ``f`` is evaluated on the full line when ``N = 1`` and as a radial
    profile when ``N >= 2``.  ``scale`` is the smallest feature length and
    ``support`` bounds the region where ``f`` is above roundoff.
    """

    f: object
    N: int = 1
    scale: float = 1.0
    support: float = 10.0

    def l1(self):
        if self.N == 1:
            z = np.linspace(-self.support, self.support, int(2 * self.support / (self.scale / 40)) + 1)
            return float(np.trapezoid(self.f(z), z))
        r, w = _radial_nodes(self.support, self.scale / 40)
        area = 2.0 * math.pi ** (self.N / 2.0) / math.gamma(self.N / 2.0)
        return area * float(np.dot(w, self.f(r) * r ** (self.N - 1)))

    def sup(self):
        lo = -self.support if self.N == 1 else 0.0
        return _refined_max(lambda z: self.f(np.asarray(z, dtype=float)), lo, self.support, 4001)


def gaussian_data(N=1, width=1.0):
    return HeatData(lambda x: np.exp(-((np.asarray(x, dtype=float) / width) ** 2)), N, width, 7.0 * width)


def _radial_nodes(support, drho, n=16):
    """Composite n-point Gauss-Legendre nodes on [0, support], panels of width ~ 8 drho."""
    x, w = gauss_legendre(n)
    m = max(1, int(math.ceil(support / (8.0 * drho))))
    edges = np.linspace(0.0, support, m + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    return (mid[:, None] + half[:, None] * x).ravel(), (half[:, None] * w).ravel()


def heat_semigroup(data, eps, t, x):
    """(e^{t Lap} eps f)(x) by Gaussian-kernel quadrature."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if t == 0:
        return eps * data.f(x)
    sq = math.sqrt(t)
    if data.N == 1:
        if 2.0 * sq <= 0.5 * data.scale:
            # z = x + 2 sqrt(t) xi against the weight e^{-xi^2}
            xi, w = _hermite(80)
            vals = data.f(x[:, None] + 2.0 * sq * xi[None, :])
            return eps * (vals @ w)
        dz = data.scale / 20.0
        z = np.arange(-data.support, data.support + 0.5 * dz, dz)
        fz = data.f(z)
        wz = np.full(z.size, dz)
        wz[0] = wz[-1] = 0.5 * dz
        out = np.empty_like(x)
        for i, xi_ in enumerate(x):
            ker = np.exp(-((xi_ - z) ** 2) / (4.0 * t)) / math.sqrt(4.0 * math.pi * t)
            out[i] = np.dot(ker * fz, wz)
        return eps * out
    # radial kernel: (2t)^{-1} rho (rho/r)^{N/2-1} e^{-(r-rho)^2/4t} ive(N/2-1, r rho/2t)
    N = data.N
    nu = 0.5 * N - 1.0
    # Gauss panels: the r^{N-1} weight has a nonzero end slope at 0 for even N,
    # which caps a trapezoid rule at second order
    rho, wr = _radial_nodes(data.support, min(data.scale / 20.0, sq / 4.0))
    fr = data.f(rho)
    out = np.empty_like(x)
    for i, r in enumerate(np.abs(x)):
        if r * data.support / (2.0 * t) < 1e-8:
            ker = (4.0 * math.pi * t) ** (-N / 2.0) * (2.0 * math.pi ** (N / 2.0) / math.gamma(N / 2.0))
            ker = ker * rho ** (N - 1) * np.exp(-rho * rho / (4.0 * t))
        else:
            z = r * rho / (2.0 * t)
            ker = rho * (rho / r) ** nu * np.exp(-((r - rho) ** 2) / (4.0 * t)) * ive(nu, z)
            ker /= 2.0 * t
        out[i] = np.dot(ker * fr, wr)
    return eps * out


def _refined_max(fn, lo, hi, points):
    """Grid maximum of a vectorized ``fn`` refined by bounded 1-D maximization."""
    xs = np.linspace(lo, hi, points)
    vals = fn(xs)
    i = int(np.argmax(vals))
    a = xs[max(i - 1, 0)]
    b = xs[min(i + 1, points - 1)]
    best = float(vals[i])
    if b > a:
        res = minimize_scalar(lambda z: -float(fn([z])[0]), bounds=(a, b), method="bounded",
                              options={"xatol": 1e-10})
        best = max(best, -float(res.fun))
    return best


def heat_semigroup_sup(data, eps, t, points=401):
    """||e^{t Lap} eps f||_inf: grid search refined by bounded 1-D maximization."""
    if t == 0:
        return eps * data.sup()
    lo = -data.support if data.N == 1 else 0.0
    return _refined_max(lambda z: heat_semigroup(data, eps, t, z), lo, data.support, points)


def heat_min_bound(data, eps, t):
    """min{eps ||f||_inf, C_N t^{-N/2} eps ||f||_1} with C_N = (4 pi)^{-N/2}."""
    if t == 0:
        return eps * data.sup()
    C = (4.0 * math.pi) ** (-data.N / 2.0)
    return min(eps * data.sup(), C * t ** (-data.N / 2.0) * eps * data.l1())


# ---------------------------------------------------------------------------
# h(t) and t_eps


@dataclass
class HeatLowerBound:
    """h(t) and t_eps.  ``log_t_eps`` stays finite when t_eps overflows."""

    p: float
    eps: float
    data: HeatData
    edges: list
    cum: list
    coefs: list
    t_asym: float
    A: float
    t_eps: float = math.inf
    log_t_eps: float = math.inf

    @property
    def a(self):
        return 0.5 * self.data.N * (self.p - 1.0)

    def integral(self, t):
        """int_0^t S^{p-1}."""
        if t <= 0:
            return 0.0
        u = math.log1p(t)
        if u <= self.edges[-1]:
            k = max(0, min(int(np.searchsorted(self.edges, u, side="right")) - 1, len(self.coefs) - 1))
            lo, hi = self.edges[k], self.edges[k + 1]
            z = 2.0 * (u - lo) / (hi - lo) - 1.0
            return self.cum[k] + float(L.legval(z, self.coefs[k]))
        return self.cum[-1] + self._tail(self.t_asym, t)

    def _tail(self, T, t):
        a = self.a
        if a == 1.0:
            return self.A * (math.log(t) - math.log(T))
        return self.A * (t ** (1.0 - a) - T ** (1.0 - a)) / (1.0 - a)

    def h(self, t):
        return 1.0 - (self.p - 1.0) * self.integral(t)


def compute_h_and_teps(data, eps, p, du=0.25, n=8, t_asym=None):
    """Tabulate h on Gauss panels in log(1+t) and locate t_eps.

    Beyond ``t_asym`` (default 1e8 scale^2) the sup is replaced by its
    large-time form (4 pi t)^{-N/2} eps ||f||_1 and integrated in closed form.
    """
    if not p > 1:
        raise ValueError("p must exceed 1")
    t_asym = t_asym or 1e8 * data.scale**2
    A = ((4.0 * math.pi) ** (-data.N / 2.0) * eps * data.l1()) ** (p - 1.0)
    res = HeatLowerBound(p, eps, data, [0.0], [0.0], [], t_asym, A)
    target = 1.0 / (p - 1.0)
    x, w = gauss_legendre(n)
    V = L.legvander(x, n - 1)
    norm = (2.0 * np.arange(n) + 1.0) / 2.0
    u_asym = math.log1p(t_asym)
    while res.cum[-1] < target and res.edges[-1] < u_asym:
        lo = res.edges[-1]
        hi = min(lo + du, u_asym)
        uu = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x
        tt = np.expm1(uu)
        g = np.array([heat_semigroup_sup(data, eps, float(t)) ** (p - 1.0) for t in tt]) * (1.0 + tt)
        coef = L.legint(norm * (V.T @ (w * g)), lbnd=-1.0) * 0.5 * (hi - lo)
        res.coefs.append(coef)
        res.cum.append(res.cum[-1] + 0.5 * (hi - lo) * float(np.dot(w, g)))
        res.edges.append(hi)
    if res.cum[-1] >= target:
        k = len(res.coefs) - 1
        lo, hi = res.edges[k], res.edges[k + 1]
        a_, b_ = -1.0, 1.0
        for _ in range(60):
            m = 0.5 * (a_ + b_)
            if res.cum[k] + L.legval(m, res.coefs[k]) < target:
                a_ = m
            else:
                b_ = m
        u_eps = lo + 0.5 * (0.5 * (a_ + b_) + 1.0) * (hi - lo)
        res.log_t_eps = math.log(math.expm1(u_eps))
        res.t_eps = math.expm1(u_eps)
        return res
    # closed-form tail beyond t_asym
    need = target - res.cum[-1]
    a = res.a
    T = t_asym
    if a == 1.0:
        log_t = math.log(T) + need / A
    elif a < 1.0:
        log_t = math.log(T ** (1.0 - a) + (1.0 - a) * need / A) / (1.0 - a)
    else:
        total_tail = A * T ** (1.0 - a) / (a - 1.0)
        if total_tail <= need:
            return res
        log_t = math.log(T ** (1.0 - a) - (a - 1.0) * need / A) / (1.0 - a)
    res.log_t_eps = log_t
    res.t_eps = math.exp(log_t) if log_t < 709.0 else math.inf
    return res


def supersolution_residual(data, eps, p, samples, bound=None):
    """min over (x, t) samples of (d_t - Lap) U - U^p for U = h^{-1/(p-1)} e^{t Lap} f_eps.

    Uses (d_t - Lap) e^{t Lap} f = 0 and h' = -(p-1) S^{p-1} analytically.
    """
    bound = bound or compute_h_and_teps(data, eps, p)
    xs, ts = np.asarray(samples[0], dtype=float), np.asarray(samples[1], dtype=float)
    if np.any(ts >= bound.t_eps):
        raise SamplingError("sample times must lie below t_eps")
    out = math.inf
    for t in np.unique(ts):
        sel = ts == t
        E = heat_semigroup(data, eps, float(t), xs[sel])
        S = heat_semigroup_sup(data, eps, float(t))
        hv = bound.h(float(t))
        r = hv ** (-p / (p - 1.0)) * (S ** (p - 1.0) * E - E**p)
        out = min(out, float(r.min()))
    return out


# ---------------------------------------------------------------------------
# heat solver


@njit(cache=True)
def _heat_rk4(u, N, h, p, dt, nsteps, u_stop):
    m = u.shape[0]
    k1 = np.empty(m)
    k2 = np.empty(m)
    k3 = np.empty(m)
    k4 = np.empty(m)
    tmp = np.empty(m)
    lap = np.empty(m)
    peak = 0.0
    for n in range(nsteps):
        _laplacian(u, N, h, lap)
        for j in range(m):
            k1[j] = lap[j] + abs(u[j]) ** p
            tmp[j] = u[j] + 0.5 * dt * k1[j]
        tmp[m - 1] = 0.0
        _laplacian(tmp, N, h, lap)
        for j in range(m):
            k2[j] = lap[j] + abs(tmp[j]) ** p
            tmp[j] = u[j] + 0.5 * dt * k2[j]
        tmp[m - 1] = 0.0
        _laplacian(tmp, N, h, lap)
        for j in range(m):
            k3[j] = lap[j] + abs(tmp[j]) ** p
            tmp[j] = u[j] + dt * k3[j]
        tmp[m - 1] = 0.0
        _laplacian(tmp, N, h, lap)
        new_peak = 0.0
        for j in range(m - 1):
            k4[j] = lap[j] + abs(tmp[j]) ** p
            val = u[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
            tmp[j] = val
            a = abs(val)
            if not (a <= 1e308):
                return n, 2, peak
            if a > new_peak:
                new_peak = a
        tmp[m - 1] = 0.0
        if new_peak >= u_stop:
            return n, 1, new_peak
        for j in range(m):
            u[j] = tmp[j]
        peak = new_peak
    return nsteps, 0, peak


def heat_solve_until_blowup(config, kappa=0.02):
    """Explicit RK4 for u_t = Lap u + |u|^p with dt <= 0.2 h^2; same threshold contract as the wave solver."""
    h = config.h
    L = config.L or (config.support + 12.0 * math.sqrt(config.T_max + 1.0) + 4 * h)
    M = int(math.ceil(L / h))
    r = np.arange(M + 1) * h
    u = config.eps * config.f_profile(r)
    u[-1] = 0.0
    dt0 = 0.2 * h * h
    t = 0.0
    steps = 0
    peak = float(np.max(np.abs(u)))
    p = config.p

    def dt_for(peak):
        dt = dt0
        if peak > 0:
            dt = min(dt, kappa / (p * peak ** (p - 1.0)))
        return dt

    u_switch = (kappa / (p * dt0)) ** (1.0 / (p - 1.0))
    reason = None
    T = None
    while True:
        if peak < u_switch:
            n = int(min(20000, (config.T_max - t) / dt0))
            if n > 0:
                done, status, pk = _heat_rk4(u, config.N, h, p, dt0, n, u_switch)
                t += done * dt0
                steps += done
                if done:
                    peak = pk
                if abs(u[-3]) > 1e-12:
                    raise DomainTooSmallError(t, L)
                if done:
                    continue
        dt = dt_for(peak)
        if t + dt >= config.T_max:
            dt = config.T_max - t
        if dt <= 0:
            reason, T = "horizon", config.T_max
            break
        if dt < config.dt_min:
            reason, T = "step_collapse", t
            break
        trial = u.copy()
        done, status, pk = _heat_rk4(trial, config.N, h, p, dt, 1, math.inf)
        if status == 2:
            reason, T = "step_collapse", t
            break
        if pk >= config.U_max:
            half = u.copy()
            _, s2, pk2 = _heat_rk4(half, config.N, h, p, 0.5 * dt, 1, math.inf)
            if s2 == 0 and pk2 >= config.U_max:
                T, peak = t + 0.5 * dt, pk2
            else:
                T, peak = t + dt, pk
            reason = "threshold"
            break
        u = trial
        t += dt
        steps += 1
        peak = pk
        if t >= config.T_max * (1 - 1e-15):
            reason, T = "horizon", config.T_max
            break
    return LifespanRecord(
        eps=config.eps,
        p=p,
        N=config.N,
        label="heat",
        params="",
        T_num=float(T),
        B_of_T=float(T),
        reason=reason,
        peak_norm=float(peak),
        steps=steps,
    )
