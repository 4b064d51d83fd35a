"""Rescaled test functions psi_R, their derivative bounds, and the blowup functional.

The cut-off is ``psi_R(x, t) = eta(s_R)^(2p')`` with
``s_R = (1 + |x|^2 + int_0^t Phi) / R`` and ``eta`` the quintic smoothstep
falling from 1 at s = 1/2 to 0 at s = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.polynomial import legendre as L

from .damping import OVERFLOW_GUARD, DampingError
from .quadrature import gauss_legendre


class CutoffError(ValueError):
    pass


class UnboundedRatioError(ArithmeticError):
    pass


class CoverageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# profile


def eta(s):
    """Quintic smoothstep cut-off and its first two derivatives in s."""
    s = np.asarray(s, dtype=float)
    tau = np.clip(2.0 * s - 1.0, 0.0, 1.0)
    inside = (s > 0.5) & (s < 1.0)
    val = 1.0 - tau**3 * (10.0 - 15.0 * tau + 6.0 * tau * tau)
    d1 = np.where(inside, -2.0 * 30.0 * tau**2 * (1.0 - tau) ** 2, 0.0)
    d2 = np.where(inside, -4.0 * (60.0 * tau - 180.0 * tau**2 + 120.0 * tau**3), 0.0)
    return val, d1, d2


def eta_star(s):
    s = np.asarray(s, dtype=float)
    return np.where(s >= 0.5, eta(s)[0], 0.0)


# ---------------------------------------------------------------------------
# tabulated int_0^t Phi


class PhiTable:
    """Piecewise Legendre representation of Phi on panels in ``u = log(1+t)``.

    Panels of width ``du`` carry ``n`` Gauss nodes; Phi and the integrand
    ``Phi(t) (1+t)`` are stored as Legendre series so both interpolation and
    partial panel integrals are exact polynomial operations.  The table grows
    on demand up to ``t = OVERFLOW_GUARD``.
    """

    def __init__(self, calc, du=0.25, n=12, max_du=2.0):
        self.calc = calc
        self.du = du
        self.max_du = max_du
        self.n = n
        self.edges = [0.0]
        self.cum = [0.0]
        self.phi_coef = []
        self.int_coef = []
        self.u_guard = math.log1p(OVERFLOW_GUARD)

    def _add_panel(self):
        lo = self.edges[-1]
        width = min(self.max_du, self.du * max(1.0, lo))
        hi = min(lo + width, self.u_guard)
        x, w = gauss_legendre(self.n)
        u = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x
        t = np.expm1(u)
        phi = np.array([self.calc.eval_Phi(float(ti))[0] for ti in t])
        g = phi * (1.0 + t)
        # exact Legendre coefficients from Gauss nodes
        V = L.legvander(x, self.n - 1)
        norm = (2.0 * np.arange(self.n) + 1.0) / 2.0
        self.phi_coef.append(norm * (V.T @ (w * phi)))
        gc = norm * (V.T @ (w * g))
        self.int_coef.append(L.legint(gc, lbnd=-1.0) * 0.5 * (hi - lo))
        self.cum.append(self.cum[-1] + 0.5 * (hi - lo) * float(np.dot(w, g)))
        self.edges.append(hi)

    def _ensure_u(self, u):
        while len(self.edges) < 2 or self.edges[-1] < u and self.edges[-1] < self.u_guard:
            self._add_panel()

    def _ensure_value(self, target):
        while len(self.edges) < 2 or self.cum[-1] < target and self.edges[-1] < self.u_guard:
            self._add_panel()

    def _locate(self, u):
        k = min(int(np.searchsorted(self.edges, u, side="right")) - 1, len(self.edges) - 2)
        k = max(k, 0)
        lo, hi = self.edges[k], self.edges[k + 1]
        return k, 2.0 * (u - lo) / (hi - lo) - 1.0

    def integral(self, t):
        """int_0^t Phi for scalar or array ``t`` (clamped at the guard)."""
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        u = np.minimum(np.log1p(t_arr), self.u_guard)
        self._ensure_u(float(u.max()))
        out = np.empty_like(u)
        for i, ui in enumerate(u):
            k, z = self._locate(ui)
            out[i] = self.cum[k] + L.legval(z, self.int_coef[k])
        return out if np.ndim(t) else float(out[0])

    def phi(self, t):
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        u = np.minimum(np.log1p(t_arr), self.u_guard)
        self._ensure_u(float(u.max()))
        out = np.empty_like(u)
        for i, ui in enumerate(u):
            k, z = self._locate(ui)
            out[i] = L.legval(z, self.phi_coef[k])
        return out if np.ndim(t) else float(out[0])

    def inverse(self, value):
        """Smallest t with int_0^t Phi = value; ``inf`` past the guard.

        Accepts arrays; the bisection on the partial panel integral runs
        vectorized over all entries.
        """
        vals = np.atleast_1d(np.asarray(value, dtype=float))
        self._ensure_value(float(vals.max()))
        cum = np.asarray(self.cum)
        edges = np.asarray(self.edges)
        out = np.full(vals.shape, math.inf)
        out[vals <= 0] = 0.0
        live = (vals > 0) & (vals <= cum[-1])
        idx = np.nonzero(live)[0]
        if idx.size:
            k = np.clip(np.searchsorted(cum, vals[idx]) - 1, 0, len(cum) - 2)
            coef = np.array(self.int_coef)[k]
            target = vals[idx] - cum[k]
            a = np.full(idx.size, -1.0)
            b = np.ones(idx.size)
            for _ in range(55):
                m = 0.5 * (a + b)
                below = _legval_rows(m, coef) < target
                a = np.where(below, m, a)
                b = np.where(below, b, m)
            z = 0.5 * (a + b)
            lo, hi = edges[k], edges[k + 1]
            out[idx] = np.expm1(lo + 0.5 * (z + 1.0) * (hi - lo))
        return out if np.ndim(value) else float(out[0])


def _legval_rows(x, coef):
    """Evaluate row-wise Legendre series ``coef[i]`` at ``x[i]`` (Clenshaw)."""
    n = coef.shape[1]
    b1 = np.zeros_like(x)
    b2 = np.zeros_like(x)
    for j in range(n - 1, 0, -1):
        alpha = (2.0 * j + 1.0) / (j + 1.0)
        beta = -(j + 1.0) / (j + 2.0)
        b1, b2 = coef[:, j] + alpha * x * b1 + beta * b2, b1
    return coef[:, 0] + x * b1 - 0.5 * b2


# ---------------------------------------------------------------------------
# family


class CutoffValues(NamedTuple):
    psi: np.ndarray
    psi_star: np.ndarray
    dt_psi: np.ndarray
    lap_psi: np.ndarray
    dtt_psi: np.ndarray


@dataclass
class CutoffFamily:
    R: float
    p: float
    calc: object
    N: int = 1
    table: PhiTable = field(default=None, repr=False)

    def __post_init__(self):
        if not self.R > 0:
            raise CutoffError("R must be positive")
        if not self.p > 1:
            raise CutoffError("p must exceed 1")
        if self.table is None:
            self.table = PhiTable(self.calc)

    @property
    def p_conj(self):
        return self.p / (self.p - 1.0)

    @property
    def q(self):
        return 2.0 * self.p_conj

    def with_R(self, R):
        return CutoffFamily(R, self.p, self.calc, self.N, self.table)

    def IPhi(self, t):
        return self.table.integral(t)

    def s_R(self, x_norm, t):
        return (1.0 + np.asarray(x_norm, dtype=float) ** 2 + self.IPhi(t)) / self.R


def _derivatives(q, s, grad2, lap_s, ds_dt, d2s_dt2):
    """Chain rule for eta(s)^q given the derivatives of s."""
    e, e1, e2 = eta(s)
    e = np.maximum(e, 0.0)
    pow_q1 = e ** (q - 1.0)
    pow_q2 = e ** (q - 2.0)
    second = (q - 1.0) * pow_q2 * e1 * e1 + pow_q1 * e2
    psi = e**q
    dt = q * pow_q1 * e1 * ds_dt
    dtt = q * (second * ds_dt**2 + pow_q1 * e1 * d2s_dt2)
    lap = q * (second * grad2 + pow_q1 * e1 * lap_s)
    return psi, dt, lap, dtt


def eval_cutoff(fam, x_norm, t):
    """Return psi, psi*, d_t psi, Laplacian psi and d_t^2 psi at (|x|, t)."""
    if np.any(np.asarray(t) < 0):
        raise CutoffError("t must be nonnegative")
    x = np.asarray(x_norm, dtype=float)
    R = fam.R
    phi = fam.table.phi(t)
    dphi = fam.calc.b_array(t) * phi - 1.0 if np.ndim(t) else fam.calc.b(t) * phi - 1.0
    s = fam.s_R(x, t)
    psi, dt, lap, dtt = _derivatives(
        fam.q, s, grad2=4.0 * x * x / R**2, lap_s=2.0 * fam.N / R, ds_dt=phi / R, d2s_dt2=dphi / R
    )
    psi_star = np.where(s >= 0.5, psi, 0.0)
    return CutoffValues(psi, psi_star, dt, lap, dtt)


def eval_tR(fam):
    """t_R solving 1 + int_0^{t_R} Phi = R."""
    if not fam.R > 1:
        raise CutoffError(f"t_R needs R > 1, got {fam.R}")
    t = fam.table.inverse(fam.R - 1.0)
    if math.isinf(t):
        raise DampingError(f"t_R for R={fam.R} lies beyond the overflow guard")
    return t


# ---------------------------------------------------------------------------
# derivative bounds


class CutoffConstants(NamedTuple):
    C1: float
    C2: float
    C3: float


def cutoff_ratios(fam, rho, sigma):
    """Pointwise ratios for the three derivative bounds on P(R).

    ``rho = |x|^2`` and ``sigma = int_0^t Phi`` parametrize P(R).  Points
    where psi* vanishes are excluded (returned as 0).
    """
    R, q, N = fam.R, fam.q, fam.N
    rho = np.asarray(rho, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    s = (1.0 + rho + sigma) / R
    # sigma -> t; points past the overflow guard are evaluated at the guard
    t = np.minimum(fam.table.inverse(sigma), OVERFLOW_GUARD)
    phi = fam.table.phi(t)
    b = fam.calc.b_array(t)
    dphi = b * phi - 1.0
    e, e1, e2 = eta(s)
    e = np.maximum(e, 0.0)
    support = (s >= 0.5) & (s < 1.0) & (e > 0)
    ee = np.where(support, e, 1.0)
    # |d psi| / [psi*]^{1/p}: the common factor eta^{q-2} cancels exactly
    second = (q - 1.0) * e1 * e1 + ee * e2
    r1 = q * np.abs(ee * e1)
    r2 = q * np.abs(second * 4.0 * rho / R + 2.0 * N * ee * e1)
    r3 = q * np.abs(second * phi**2 / R + ee * e1 * dphi)
    zero = np.zeros_like(r1)
    return np.where(support, r1, zero), np.where(support, r2, zero), np.where(support, r3, zero)


def verify_cutoff_bounds(fam, points=400, interior=10_000, seed=0, limit=1e6):
    """Smallest C1, C2, C3 making the derivative bounds hold on a sample of P(R)."""
    if not fam.calc.family.not_overdamping:
        raise CutoffError("the second-derivative bound needs 1/b not integrable")
    R = fam.R
    axis = np.linspace(0.0, R - 1.0, points)
    rho, sigma = np.meshgrid(axis, axis, indexing="ij")
    keep = rho + sigma <= R - 1.0
    rng = np.random.default_rng(seed)
    # quasi-uniform extra points inside P(R), concentrated in the s in [1/2, 1) shell
    u = rng.random((interior, 2))
    shell = 0.5 * R + u[:, 0] * (0.5 * R) - 1.0
    extra_rho = shell * u[:, 1]
    extra_sigma = shell - extra_rho
    rho_all = np.concatenate([rho[keep], extra_rho[shell >= 0]])
    sigma_all = np.concatenate([sigma[keep], extra_sigma[shell >= 0]])
    r1, r2, r3 = cutoff_ratios(fam, rho_all, sigma_all)
    consts = CutoffConstants(float(r1.max()), float(r2.max()), float(r3.max()))
    for name, c in zip(consts._fields, consts):
        if not np.isfinite(c) or c > limit:
            raise UnboundedRatioError(f"{name} = {c} exceeds {limit}")
    return consts


# ---------------------------------------------------------------------------
# key lemma


def key_upper_bound(delta, C0, R1, theta, p):
    """Closed-form bound on R~(T) from the integral criterion."""
    if not (delta > 0 and C0 > 0 and R1 > 0 and theta >= 0 and p > 1):
        raise CutoffError("need delta, C0, R1 > 0, theta >= 0, p > 1")
    log2 = math.log(2.0)
    if theta > 0:
        a = (p - 1.0) * theta
        try:
            return (R1**a + log2 * C0**p * theta * delta ** (-(p - 1.0))) ** (1.0 / a)
        except OverflowError:
            return math.inf
    try:
        return math.exp(math.log(R1) + log2 / (p - 1.0) * C0**p * delta ** (-(p - 1.0)))
    except OverflowError:
        return math.inf


class KeyLemmaCheck(NamedTuple):
    bound: float
    blowup_radius: float
    ok: bool


class IntegrationFailure(RuntimeError):
    pass


def key_lemma_blowup_radius(delta, C0, R1, theta, p, y_max=1e8, rtol=1e-10):
    """Blowup radius of the extremal comparison ODE by adaptive RK4.

    The ODE Y' = C0^{-p} R^{theta(p-1)-1} (delta + Y / log 2)^p, Y(R1) = 0,
    is integrated for u = log R as a function of w = log(delta + Y / log 2),
    which stays smooth up to the singularity (Y as a function of u does
    not for p >= 3).  Beyond ``y_max`` the tail is added with u frozen.
    """
    log2 = math.log(2.0)
    a = theta * (p - 1.0)
    c = log2 * C0**p

    def rhs(w, u):
        # du/dw = (dY/dw) / (dY/du)
        return c * math.exp(-a * u + (1.0 - p) * w)

    def rk4(w, u, h):
        k1 = rhs(w, u)
        k2 = rhs(w + 0.5 * h, u + 0.5 * h * k1)
        k3 = rhs(w + 0.5 * h, u + 0.5 * h * k2)
        k4 = rhs(w + h, u + h * k3)
        return u + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0

    w, u = math.log(delta), math.log(R1)
    w_end = math.log(delta + y_max / log2)
    h = 1e-3
    steps = 0
    while w < w_end:
        h = min(h, w_end - w)
        try:
            full = rk4(w, u, h)
            half = rk4(w + 0.5 * h, rk4(w, u, 0.5 * h), 0.5 * h)
        except OverflowError:
            h *= 0.25
            continue
        err = abs(half - full) / 15.0
        scale = rtol * max(abs(half), 1.0)
        if err <= scale and math.isfinite(half):
            w += h
            u = half + (half - full) / 15.0
            h *= min(2.0, 0.9 * (scale / max(err, 1e-300)) ** 0.2)
        else:
            h *= max(0.1, 0.9 * (scale / max(err, 1e-300)) ** 0.25) if math.isfinite(err) else 0.25
        steps += 1
        if h < 1e-15 * max(1.0, abs(w)) or steps > 1_000_000:
            raise IntegrationFailure(f"step collapsed at u={u}, Y={(math.exp(w) - delta) * log2}")
    # remaining distance to the singularity with u frozen in the rate
    u += rhs(w_end, u) / (p - 1.0)
    try:
        return math.exp(u)
    except OverflowError:
        return math.inf


def check_key_lemma_ode(delta, C0, R1, theta, p, rel=0.01):
    bound = key_upper_bound(delta, C0, R1, theta, p)
    radius = key_lemma_blowup_radius(delta, C0, R1, theta, p)
    return KeyLemmaCheck(bound, radius, radius <= (1.0 + rel) * bound)


# ---------------------------------------------------------------------------
# blowup functional


class FunctionalValue(NamedTuple):
    lhs: float
    rhs: float
    c0: float
    jR: float
    C4: float
    tR: float


def sphere_area(N):
    """|S^{N-1}|, with |S^0| = 2."""
    return 2.0 * math.pi ** (N / 2.0) / math.gamma(N / 2.0)


def radial_integral(values, r, N):
    """int_{R^N} g(|x|) dx for samples of g on a radial grid (trapezoid)."""
    return sphere_area(N) * float(np.trapezoid(values * r ** (N - 1), r))


def evaluate_blowup_functional(series, fam, constants=None, Phi_prime_sup=None):
    """Both sides of the integrated test-function inequality on [0, t_R].

    ``series`` is a :class:`~blowup_lab.wave_solver.SnapshotSeries`.
    """
    cfg = series.config
    p, N, eps = cfg.p, cfg.N, cfg.eps
    if fam.p != p or fam.N != N:
        raise CutoffError("cut-off family and run disagree on p or N")
    times = np.array([s.t for s in series.snapshots])
    if np.all(series.snapshots[0].u == 0) and eps == 0:
        return FunctionalValue(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    tR = eval_tR(fam)
    if times[-1] < tR:
        raise CoverageError(f"snapshots end at t={times[-1]:.6g} before t_R={tR:.6g}")
    calc = fam.calc
    if constants is None:
        constants = verify_cutoff_bounds(fam)
    C1, C2, C3 = constants
    t_probe = np.linspace(0.0, tR, 257)
    phi_probe = fam.table.phi(t_probe)
    bphi = calc.b_array(t_probe) * phi_probe
    if Phi_prime_sup is None:
        Phi_prime_sup = float(np.max(np.abs(bphi - 1.0)))
    B2 = float(bphi.max())
    C4 = 2.0 * C1 * Phi_prime_sup + C3 + C2 + B2 * C1

    r = series.snapshots[0].r
    f = cfg.f_profile(r)
    g = cfg.g_profile(r)
    c0 = 0.5 * radial_integral(f + calc.B0 * g, r, N)
    cv0 = eval_cutoff(fam, r, 0.0)
    jR = radial_integral((f + calc.B0 * g) * cv0.psi, r, N) - calc.B0 * radial_integral(f * cv0.dt_psi, r, N)

    keep = times <= tR
    ts = list(times[keep])
    w_psi, w_star = [], []
    for snap in (s for s, k in zip(series.snapshots, keep) if k):
        cv = eval_cutoff(fam, r, snap.t)
        phi = fam.table.phi(snap.t)
        up = np.abs(snap.u) ** p * phi
        w_psi.append(radial_integral(up * cv.psi, r, N))
        w_star.append(radial_integral(up * cv.psi_star, r, N))
    # integrand vanishes at t_R (s_R >= 1 there)
    if ts[-1] < tR:
        ts.append(tR)
        w_psi.append(0.0)
        w_star.append(0.0)
    I_psi = float(np.trapezoid(w_psi, ts))
    I_star = float(np.trapezoid(w_star, ts))
    R = fam.R
    C5 = C4 * sphere_area(N) ** (1.0 / fam.p_conj)
    power = (-1.0 + 0.5 * N * (p - 1.0)) / p
    lhs = c0 * eps + I_psi
    rhs = C5 * R**power * I_star ** (1.0 / p)
    return FunctionalValue(lhs, rhs, c0, jR, C4, tR)
