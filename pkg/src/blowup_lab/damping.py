"""Damping-coefficient calculus.

A damping family supplies closed forms for ``b``, ``b'``, ``B(t) = int_0^t 1/b``
and the increment ``int_t^{t+r} b``.  :class:`DampingCalculus` builds the
derived quantities on top of that: ``B^{-1}``, ``B0``, ``Phi`` and ``Phi'``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from .quadrature import QuadratureWarning, adaptive_simpson, gauss_legendre

OVERFLOW_GUARD = 1e300


class DampingError(ValueError):
    pass


class AssumptionError(DampingError):
    pass


class BracketOverflowError(ArithmeticError):
    """Raised when inverting B would need t beyond the overflow guard."""

    def __init__(self, s, guard=OVERFLOW_GUARD):
        super().__init__(f"B^-1({s!r}) exceeds the overflow guard t <= {guard:g}")
        self.s = s
        self.guard = guard


# ---------------------------------------------------------------------------
# families


@dataclass(frozen=True)
class Constant:
    c: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise DampingError(f"Constant damping needs c > 0, got {self.c}")

    name = "constant"

    def coefficient(self, t):
        return self.c, 0.0

    def B(self, t):
        return t / self.c

    def B_inverse(self, s):
        return self.c * s

    def increment(self, t, r):
        return self.c * r

    def b_vec(self, t):
        return np.full(np.shape(t), self.c)

    # analytic verdicts
    b0 = 0.0
    not_overdamping = True
    gamma = None

    @property
    def params(self):
        return {"c": self.c}


@dataclass(frozen=True)
class PowerLaw:
    """b(t) = (1+t)^(-beta)."""

    beta: float = 0.0
    name = "power"

    def coefficient(self, t):
        x = 1.0 + t
        b = x ** (-self.beta)
        return b, -self.beta * b / x

    def b_vec(self, t):
        return (1.0 + np.asarray(t, dtype=float)) ** (-self.beta)

    def B(self, t):
        a = 1.0 + self.beta
        if a == 0.0:
            return math.log1p(t)
        return math.expm1(a * math.log1p(t)) / a

    def B_inverse(self, s):
        a = 1.0 + self.beta
        try:
            if a == 0.0:
                t = math.expm1(s)
            elif a > 0.0:
                t = math.expm1(math.log1p(a * s) / a)
            else:
                # overdamping: B is bounded by -1/a
                if a * s <= -1.0:
                    raise DampingError(f"s={s} exceeds sup B = {-1.0 / a}")
                t = math.expm1(math.log1p(a * s) / a)
        except OverflowError:
            raise BracketOverflowError(s) from None
        if not t <= OVERFLOW_GUARD:
            raise BracketOverflowError(s)
        return t

    def increment(self, t, r):
        x = 1.0 + t
        a = 1.0 - self.beta
        z = math.log1p(r / x)
        if a == 0.0:
            return z
        return x**a * math.expm1(a * z) / a

    @property
    def b0(self):
        if self.beta < 1.0:
            return 0.0
        return 1.0 if self.beta == 1.0 else math.inf

    @property
    def not_overdamping(self):
        return self.beta >= -1.0

    @property
    def gamma(self):
        if self.beta == 0.0 or self.beta >= 1.0:
            return None
        return 1.0 - self.beta

    @property
    def params(self):
        return {"beta": self.beta}


@dataclass(frozen=True)
class ScaleInvariant:
    """b(t) = mu / (1+t)."""

    mu: float = 2.0
    name = "scale_invariant"

    def __post_init__(self):
        if not self.mu > 0:
            raise DampingError(f"ScaleInvariant damping needs mu > 0, got {self.mu}")

    def coefficient(self, t):
        x = 1.0 + t
        return self.mu / x, -self.mu / (x * x)

    def b_vec(self, t):
        return self.mu / (1.0 + np.asarray(t, dtype=float))

    def B(self, t):
        return (t + 0.5 * t * t) / self.mu

    def B_inverse(self, s):
        # root of t^2/2 + t - mu s = 0, in a cancellation-free form
        x = 2.0 * self.mu * s
        return x / (1.0 + math.sqrt(1.0 + x))

    def increment(self, t, r):
        return self.mu * math.log1p(r / (1.0 + t))

    @property
    def b0(self):
        return 1.0 / self.mu

    not_overdamping = True
    gamma = None

    @property
    def params(self):
        return {"mu": self.mu}


@dataclass(frozen=True)
class LogTower:
    """b(t) = prod_{k=1}^n l_k(t), l_1 = 1+t, l_{k+1} = 1 + log l_k."""

    n: int = 1
    name = "log_tower"

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DampingError(f"LogTower depth must be a positive integer, got {self.n}")

    def ells(self, t):
        """Return (l_k, l_k') for k = 1..n."""
        ell, dell = 1.0 + t, 1.0
        out = [(ell, dell)]
        for _ in range(self.n - 1):
            ell, dell = 1.0 + math.log(ell), dell / ell
            out.append((ell, dell))
        return out

    def coefficient(self, t):
        b, logder = 1.0, 0.0
        for ell, dell in self.ells(t):
            b *= ell
            logder += dell / ell
        return b, b * logder

    def b_vec(self, t):
        ell = 1.0 + np.asarray(t, dtype=float)
        b = ell.copy()
        for _ in range(self.n - 1):
            ell = 1.0 + np.log(ell)
            b = b * ell
        return b

    def B(self, t):
        # B = l_{n+1} - 1; carry m_k = l_k - 1 to keep precision near t = 0
        m = t
        for _ in range(self.n):
            m = math.log1p(m)
        return m

    def B_inverse(self, s):
        m = s
        try:
            for _ in range(self.n):
                m = math.expm1(m)
        except OverflowError:
            raise BracketOverflowError(s) from None
        if not m <= OVERFLOW_GUARD:
            raise BracketOverflowError(s)
        return m

    def increment(self, t, r):
        x0 = 1.0 + t
        if self.n == 1:
            return r * (x0 + 0.5 * r)
        if self.n == 2:
            x1 = x0 + r
            return 0.25 * (r * (2.0 * x0 + r) * (1.0 + 2.0 * math.log(x1))
                           + 2.0 * x0 * x0 * math.log1p(r / x0))
        return self._increment_quad(x0, r)

    def _increment_quad(self, x0, r):
        # int b dsigma = int b(x) x du with x = e^u, on a fixed composite
        # Gauss rule so the result is smooth in r
        u0 = math.log(x0)
        du = math.log1p(r / x0)
        nodes, weights = _unit_composite_rule()
        x = np.exp(u0 + du * nodes)
        ell, prod = x.copy(), x * x
        for _ in range(self.n - 1):
            ell = 1.0 + np.log(ell)
            prod *= ell
        return du * float(np.dot(weights, prod))

    b0 = 0.0
    not_overdamping = True
    gamma = 2.0

    @property
    def params(self):
        return {"n": self.n}


def _unit_composite_rule(panels=4, n=16):
    x, w = gauss_legendre(n)
    edges = np.linspace(0.0, 1.0, panels + 1)
    half = 0.5 * (edges[1] - edges[0])
    nodes = np.concatenate([0.5 * (lo + hi) + half * x for lo, hi in zip(edges[:-1], edges[1:])])
    return nodes, np.tile(half * w, panels)


FAMILIES = {
    "constant": (Constant, "c", float),
    "power": (PowerLaw, "beta", float),
    "scale_invariant": (ScaleInvariant, "mu", float),
    "log_tower": (LogTower, "n", int),
}


@dataclass(frozen=True)
class DampingSpec:
    family: object
    label: str = ""

    def __post_init__(self):
        if not self.label:
            p = ",".join(f"{k}={v:g}" for k, v in self.family.params.items())
            object.__setattr__(self, "label", f"{self.family.name}({p})")

    @property
    def params_text(self):
        return ";".join(f"{k}={v:g}" for k, v in self.family.params.items())


def make_spec(name, params=None, label=""):
    """Build a :class:`DampingSpec` from a family name and a ``k=v,...`` string or dict."""
    if name not in FAMILIES:
        raise DampingError(f"unknown damping family {name!r}; choose from {sorted(FAMILIES)}")
    cls, key, conv = FAMILIES[name]
    if isinstance(params, str):
        items = [kv for kv in params.replace(";", ",").split(",") if kv.strip()]
        params = dict(kv.split("=", 1) for kv in items)
    params = {k.strip(): conv(v) for k, v in (params or {}).items()}
    unknown = set(params) - {key}
    if unknown:
        raise DampingError(f"family {name!r} takes only {key!r}, got {sorted(unknown)}")
    return DampingSpec(cls(**params), label)


# Built-in families used across the test and acceptance suites.
BUILTIN = {
    "constant": DampingSpec(Constant(1.0), "constant"),
    "power_half": DampingSpec(PowerLaw(0.5), "power_half"),
    "power_neg_half": DampingSpec(PowerLaw(-0.5), "power_neg_half"),
    "scale_invariant": DampingSpec(ScaleInvariant(2.0), "scale_invariant"),
    "log_tower": DampingSpec(LogTower(1), "log_tower"),
}


# ---------------------------------------------------------------------------
# calculus


@dataclass(frozen=True)
class DampingCalculus:
    spec: DampingSpec
    quad_tol: float = 1e-10
    trunc_exponent: float = 40.0
    B0: float = field(init=False)

    def __post_init__(self):
        fam = self.spec.family
        if not fam.b0 < 1.0:
            raise AssumptionError(
                f"{self.spec.label}: b0 = {fam.b0} violates limsup |b'|/b^2 < 1; B0 is not finite"
            )
        object.__setattr__(self, "B0", self._phi(0.0))

    @property
    def family(self):
        return self.spec.family

    def eval_coefficient(self, t):
        if t < 0:
            raise DampingError(f"t must be nonnegative, got {t}")
        return self.family.coefficient(t)

    def b(self, t):
        return self.family.coefficient(t)[0]

    def b_array(self, ts):
        return self.family.b_vec(np.asarray(ts, dtype=float))

    def eval_B(self, t):
        if t < 0:
            raise DampingError(f"t must be nonnegative, got {t}")
        return self.family.B(t)

    def invert_B(self, s):
        if s < 0:
            raise DampingError(f"s must be nonnegative, got {s}")
        if s == 0:
            return 0.0
        fam = self.family
        if hasattr(fam, "B_inverse"):
            return fam.B_inverse(s)
        return invert_monotone(fam.B, lambda t: 1.0 / fam.coefficient(t)[0], s, self.quad_tol)

    def eval_B0(self):
        return self.B0

    def eval_Phi(self, t):
        """Return ``(Phi(t), Phi'(t))`` with ``Phi' = b Phi - 1`` exactly."""
        if t < 0:
            raise DampingError(f"t must be nonnegative, got {t}")
        phi = self.B0 if t == 0 else self._phi(t)
        return phi, self.b(t) * phi - 1.0

    def _truncation_radius(self, t, scale):
        inc = self.family.increment
        target = self.trunc_exponent
        hi = scale
        while inc(t, hi) < target:
            hi *= 2.0
            if hi > OVERFLOW_GUARD:
                raise AssumptionError(f"{self.spec.label}: int b never reaches {target} after t={t}")
        lo = 0.0 if hi == scale else 0.5 * hi
        return brentq(lambda r: inc(t, r) - target, lo, hi, xtol=1e-300, rtol=1e-15, maxiter=200)

    def _phi(self, t):
        fam = self.family
        bt = fam.coefficient(t)[0]
        scale = 1.0 / bt
        rmax = self._truncation_radius(t, scale)
        edges = [0.0]
        r = min(scale, rmax)
        while r < rmax:
            edges.append(r)
            r *= 2.0
        edges.append(rmax)

        def integrand(r):
            return math.exp(-fam.increment(t, r))

        tol = self.quad_tol * 1e-2 * min(scale, rmax) / len(edges)
        body = math.fsum(adaptive_simpson(integrand, lo, hi, tol) for lo, hi in zip(edges[:-1], edges[1:]))
        # tail beyond the truncation point: Phi(t + rmax) e^{-trunc}, with
        # Phi ~ 1/(b + b'/b) from one integration by parts
        tau = t + rmax
        bb, db = fam.coefficient(tau)
        denom = bb + db / bb
        if not denom > 0:
            warnings.warn(
                f"{self.spec.label}: Phi integrand not decaying at truncation r={rmax:g}",
                QuadratureWarning,
                stacklevel=3,
            )
            return body
        tail = math.exp(-self.trunc_exponent) / denom
        if tail > 1e-6 * body:
            warnings.warn(
                f"{self.spec.label}: truncated tail {tail:.3g} is large relative to {body:.3g}",
                QuadratureWarning,
                stacklevel=3,
            )
        return body + tail


def invert_monotone(F, dF, s, tol=1e-10, guard=OVERFLOW_GUARD):
    """Solve ``F(t) = s`` for increasing ``F`` with ``F(0) = 0``.

    Brackets by doubling from ``t = 1`` and then runs Newton steps, falling
    back to bisection whenever a Newton iterate leaves the bracket.
    """
    lo, hi = 0.0, 1.0
    while F(hi) < s:
        lo, hi = hi, 2.0 * hi
        if hi > guard:
            raise BracketOverflowError(s, guard)
    t = 0.5 * (lo + hi)
    for _ in range(200):
        val = F(t) - s
        if abs(val) <= 0.01 * tol * (1.0 + s):
            return t
        if val > 0:
            hi = t
        else:
            lo = t
        step = val / dF(t)
        cand = t - step
        t = cand if lo < cand < hi else 0.5 * (lo + hi)
        if hi - lo <= 4e-16 * hi:
            break
    return t


# ---------------------------------------------------------------------------
# assumption report


@dataclass
class AssumptionReport:
    label: str
    b_positive: bool
    b0_estimate: float
    b0_ok: bool
    not_overdamping: bool
    gamma_estimate: float | None
    B0: float
    limit_2_4: float
    limit_5_3: float
    horizon: float
    notes: list = field(default_factory=list)

    def lines(self):
        def fmt(v):
            if v is None:
                return "absent"
            if isinstance(v, bool):
                return "true" if v else "false"
            if isinstance(v, float):
                return repr(v)
            return str(v)

        keys = ["label", "horizon", "b_positive", "b0_estimate", "b0_ok", "not_overdamping",
                "gamma_estimate", "B0", "limit_2_4", "limit_5_3"]
        width = max(map(len, keys))
        out = [f"{k:<{width}} : {fmt(getattr(self, k))}" for k in keys]
        out += [f"{'note':<{width}} : {n}" for n in self.notes]
        return out


def check_assumptions(spec, horizon=1e4, samples=64):
    """Sampled evidence plus analytic verdicts for the damping hypotheses."""
    if not horizon > 0:
        raise DampingError("horizon must be positive")
    fam = spec.family
    ts = np.geomspace(0.5 * horizon, horizon, samples)
    ratios = []
    positive = True
    for t in ts:
        b, db = fam.coefficient(float(t))
        positive &= b > 0
        ratios.append(abs(db) / (b * b))
    b0_estimate = float(max(ratios))

    fit_t = np.geomspace(1.0, horizon, samples)
    fit_r = np.array([abs(fam.coefficient(float(t))[1]) / fam.coefficient(float(t))[0] ** 2 for t in fit_t])
    gamma_estimate = None
    if np.all(fit_r > 1e-14):
        slope = np.polyfit(np.log1p(fit_t), np.log(fit_r), 1)[0]
        if slope < -1e-3:
            gamma_estimate = float(-slope)

    b0_ok = fam.b0 < 1.0
    notes = []
    if isinstance(fam, PowerLaw) and fam.beta < 0:
        notes.append("ratio stored as |beta|(1+t)^(beta-1); the written form omits the absolute value")
    if b0_ok != (b0_estimate < 1.0):
        raise AssumptionError(
            f"{spec.label}: analytic b0={fam.b0} disagrees with sampled b0_estimate={b0_estimate}"
        )
    if (fam.gamma is None) != (gamma_estimate is None):
        raise AssumptionError(
            f"{spec.label}: analytic decay exponent {fam.gamma} disagrees with fit {gamma_estimate}"
        )
    if not positive:
        raise AssumptionError(f"{spec.label}: b not positive on samples")

    B0 = DampingCalculus(spec).B0 if b0_ok else math.inf
    bH = fam.coefficient(float(horizon))[0]
    limit_2_4 = math.exp(-fam.increment(0.0, float(horizon))) / bH
    limit_5_3 = 1.0 / (bH * bH * (fam.B(float(horizon)) + 1.0))
    return AssumptionReport(
        label=spec.label,
        b_positive=bool(positive),
        b0_estimate=b0_estimate,
        b0_ok=b0_ok,
        not_overdamping=bool(fam.not_overdamping),
        gamma_estimate=gamma_estimate,
        B0=B0,
        limit_2_4=limit_2_4,
        limit_5_3=limit_5_3,
        horizon=float(horizon),
        notes=notes,
    )


# ---------------------------------------------------------------------------
# lifespan laws


def fujita_exponent(N):
    return 1.0 + 2.0 / N


def regime(p, N):
    """'subcritical', 'critical' or 'supercritical' relative to 1 + 2/N."""
    pc = fujita_exponent(N)
    if math.isclose(p, pc, rel_tol=1e-12):
        return "critical"
    return "subcritical" if p < pc else "supercritical"


def subcritical_exponent(p, N):
    """(1/(p-1) - N/2)^{-1}, the epsilon exponent of the B-time lifespan."""
    return 1.0 / (1.0 / (p - 1.0) - 0.5 * N)


class LifespanPrediction(NamedTuple):
    t: float
    B: float
    overflow: bool


def predicted_lifespan(spec, p, N, eps, C=1.0):
    """Invert the B-time lifespan law for the given damping."""
    if not p > 1:
        raise DampingError(f"nonlinearity exponent must exceed 1, got {p}")
    if not C > 0 or not eps > 0:
        raise DampingError("C and eps must be positive")
    kind = regime(p, N)
    if kind == "supercritical":
        return LifespanPrediction(math.inf, math.inf, False)
    if kind == "subcritical":
        Bt = C * eps ** (-subcritical_exponent(p, N))
    else:
        try:
            Bt = math.exp(C * eps ** (-(p - 1.0)))
        except OverflowError:
            return LifespanPrediction(math.inf, math.inf, True)
    fam = spec.family
    try:
        if hasattr(fam, "B_inverse"):
            t = fam.B_inverse(Bt)
        else:
            t = invert_monotone(fam.B, lambda x: 1.0 / fam.coefficient(x)[0], Bt)
    except BracketOverflowError:
        return LifespanPrediction(math.inf, Bt, True)
    return LifespanPrediction(t, Bt, False)
