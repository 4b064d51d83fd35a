"""Radial leapfrog solver for u_tt - Lap u + b(t) u_t = |u|^p with blowup detection.

The grid is r_j = j h on [0, L] with a ghost reflection at r = 0 and a
homogeneous Dirichlet condition at r = L.  For N = 1 the radial form is the
full line restricted to even data.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from numba import njit

from .damping import DampingCalculus, DampingError, DampingSpec

REASONS = ("threshold", "step_collapse", "horizon")

RECORD_COLUMNS = ["label", "N", "p", "beta_or_params", "eps", "T_num", "B_of_T", "reason", "peak_norm", "steps"]


class DomainTooSmallError(RuntimeError):
    def __init__(self, t, L):
        super().__init__(f"solution reached r = L - 2h (L={L:g}) at t={t:.6g}")
        self.t = t
        self.L = L


class SignConditionError(ValueError):
    pass


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True)
def _laplacian(u, N, h, out):
    m = u.shape[0]
    inv_h2 = 1.0 / (h * h)
    out[0] = 2.0 * N * (u[1] - u[0]) * inv_h2
    for j in range(1, m - 1):
        lap = (u[j + 1] - 2.0 * u[j] + u[j - 1]) * inv_h2
        if N != 1:
            lap += (N - 1) / (j * h) * (u[j + 1] - u[j - 1]) * (0.5 / h)
        out[j] = lap
    out[m - 1] = 0.0


@njit(cache=True)
def _ipow(x, p, ip):
    if ip == 2:
        return x * x
    if ip == 3:
        return x * x * x
    if ip == 4:
        y = x * x
        return y * y
    return x**p


@njit(cache=True)
def _march(u_prev, u, work, N, h, p, bvals, dt, dt_prev, nsteps, force, u_stop):
    """Advance up to ``nsteps`` leapfrog steps in place.

    ``u_prev``/``u`` hold the two most recent levels; ``work`` receives the
    new level.  Returns ``(done, status, peak)`` with status 0 = all steps
    done, 1 = a step would reach ``u_stop``, 2 = a step produced a non-finite
    value.  On status 1 or 2 the offending step is not committed and the
    fields are left at the last good level.
    """
    m = u.shape[0]
    ip = int(p) if p == int(p) and 2 <= p <= 4 else 0
    inv_h2 = 1.0 / (h * h)
    # centered first-derivative weight (N-1)/r / (2h), zero at r = 0
    drift = np.zeros(m)
    for j in range(1, m):
        drift[j] = (N - 1) / (j * h) * (0.5 / h)
    k_minus = dt_prev
    peak = 0.0
    for n in range(nsteps):
        k = dt
        S = k + k_minus
        theta = 0.5 * bvals[n] * k
        ratio = k / k_minus
        c_f = 0.5 * S * k / (1.0 + theta)
        c_u = (1.0 + ratio) / (1.0 + theta)
        c_p = (theta - ratio) / (1.0 + theta)
        new_peak = 0.0
        bad = False
        a0 = abs(u[0])
        F = 2.0 * N * (u[1] - u[0]) * inv_h2 + _ipow(a0, p, ip) + force[0]
        val = c_f * F + c_u * u[0] + c_p * u_prev[0]
        work[0] = val
        new_peak = abs(val)
        for j in range(1, m - 1):
            uj = u[j]
            F = (u[j + 1] - 2.0 * uj + u[j - 1]) * inv_h2 + drift[j] * (u[j + 1] - u[j - 1])
            F += _ipow(abs(uj), p, ip) + force[j]
            val = c_f * F + c_u * uj + c_p * u_prev[j]
            work[j] = val
            a = abs(val)
            if a > new_peak:
                new_peak = a
        work[m - 1] = 0.0
        if not (new_peak <= 1e308):
            return n, 2, peak
        if new_peak >= u_stop:
            return n, 1, new_peak
        for j in range(m):
            u_prev[j] = u[j]
            u[j] = work[j]
        peak = new_peak
        k_minus = k
    return nsteps, 0, peak


def radial_laplacian(field_, N, h):
    """Discrete radial Laplacian (Dirichlet row at the outer end is zero)."""
    if N < 1:
        raise ValueError("N must be at least 1")
    arr = np.ascontiguousarray(field_, dtype=float)
    out = np.empty_like(arr)
    _laplacian(arr, int(N), float(h), out)
    return out


# ---------------------------------------------------------------------------
# configuration and state


def gaussian_profile(width=1.0, amplitude=1.0):
    def f(r):
        return amplitude * np.exp(-((np.asarray(r, dtype=float) / width) ** 2))

    return f


def zero_profile(r):
    return np.zeros_like(np.asarray(r, dtype=float))


@dataclass
class SolveConfig:
    p: float
    eps: float
    damping: DampingSpec
    N: int = 1
    L: float | None = None
    h: float = 0.05
    cfl: float = 0.5
    U_max: float = 1e6
    dt_min: float = 1e-12
    T_max: float = 100.0
    snapshot_cadence: float | None = None
    width: float = 1.0
    f_profile: Callable = None
    g_profile: Callable = None
    support: float | None = None
    kappa: float = 0.02
    forcing: Callable | None = None

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError(f"p must exceed 1, got {self.p}")
        if not 0 < self.cfl <= 0.9:
            raise ValueError(f"cfl must lie in (0, 0.9], got {self.cfl}")
        if self.N < 1:
            raise ValueError("N must be at least 1")
        if self.f_profile is None:
            self.f_profile = gaussian_profile(self.width)
            if self.support is None:
                # radius beyond which exp(-r^2/w^2) < 1e-16
                self.support = self.width * math.sqrt(16.0 * math.log(10.0))
        if self.g_profile is None:
            self.g_profile = zero_profile
        if self.support is None:
            self.support = 10.0 * self.width


def auto_domain(config, calc=None):
    """Causally inert radius for the run.

    Covers the data support, the damped wave front until it has decayed by
    e^{-32}, and thirteen diffusive lengths sqrt(B(T_max) + 1).
    """
    calc = calc or DampingCalculus(config.damping)
    fam = calc.family
    T = config.T_max
    t_front = T
    if fam.increment(0.0, T) > 64.0:
        lo, hi = 0.0, T
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if fam.increment(0.0, mid) > 64.0:
                hi = mid
            else:
                lo = mid
        t_front = hi
    return config.support + t_front + 13.0 * math.sqrt(calc.eval_B(T) + 1.0) + 4.0 * config.h


@dataclass
class WaveState:
    r: np.ndarray
    u: np.ndarray
    v: np.ndarray
    u_prev: np.ndarray
    t: float
    N: int
    h: float
    dt_prev: float


@dataclass
class Snapshot:
    t: float
    r: np.ndarray
    u: np.ndarray
    v: np.ndarray
    N: int
    h: float


@dataclass
class SnapshotSeries:
    config: SolveConfig
    snapshots: list = field(default_factory=list)


@dataclass
class LifespanRecord:
    eps: float
    p: float
    N: int
    label: str
    params: str
    T_num: float
    B_of_T: float
    reason: str
    peak_norm: float
    steps: int

    @property
    def blew_up(self):
        return self.reason == "threshold"

    def row(self):
        return {
            "label": self.label,
            "N": self.N,
            "p": f"{self.p:.17g}",
            "beta_or_params": self.params,
            "eps": f"{self.eps:.17g}",
            "T_num": f"{self.T_num:.17g}",
            "B_of_T": f"{self.B_of_T:.17g}",
            "reason": self.reason,
            "peak_norm": f"{self.peak_norm:.17g}",
            "steps": self.steps,
        }

    @classmethod
    def from_row(cls, row):
        return cls(
            eps=float(row["eps"]),
            p=float(row["p"]),
            N=int(row["N"]),
            label=row["label"],
            params=row["beta_or_params"],
            T_num=float(row["T_num"]),
            B_of_T=float(row["B_of_T"]),
            reason=row["reason"],
            peak_norm=float(row["peak_norm"]),
            steps=int(row["steps"]),
        )


def write_records(path, records, append=False):
    exists = append and os.path.exists(path) and os.path.getsize(path) > 0
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RECORD_COLUMNS, lineterminator="\n")
        if not exists:
            w.writeheader()
        for rec in records:
            w.writerow(rec.row())


def read_records(path):
    with open(path, newline="") as fh:
        return [LifespanRecord.from_row(row) for row in csv.DictReader(fh)]


def write_snapshot(path, snap):
    header = f"t={snap.t:.17g} h={snap.h:.17g} N={snap.N}\nr u v"
    np.savetxt(path, np.column_stack([snap.r, snap.u, snap.v]), header=header, fmt="%.17g")


def read_snapshot(path):
    with open(path) as fh:
        meta = dict(kv.split("=") for kv in fh.readline().lstrip("# ").split())
    data = np.loadtxt(path)
    return Snapshot(float(meta["t"]), data[:, 0], data[:, 1], data[:, 2], int(meta["N"]), float(meta["h"]))


# ---------------------------------------------------------------------------
# stepping


def initial_state(config, calc=None, L=None):
    """Grid, data and the Taylor-started first level (``u_prev`` = data)."""
    calc = calc or DampingCalculus(config.damping)
    L = L or config.L or auto_domain(config, calc)
    M = int(math.ceil(L / config.h))
    r = np.arange(M + 1) * config.h
    u0 = config.eps * config.f_profile(r)
    v0 = config.eps * config.g_profile(r)
    u0[-1] = 0.0
    v0[-1] = 0.0
    return WaveState(r, u0, v0, u0.copy(), 0.0, config.N, config.h, 0.0)


def _taylor_start(state, config, b0, dt, force0):
    u0, v0 = state.u, state.v
    acc = radial_laplacian(u0, state.N, state.h) + np.abs(u0) ** config.p - b0 * v0 + force0
    u1 = u0 + dt * v0 + 0.5 * dt * dt * acc
    u1[-1] = 0.0
    return u1


def _forcing(config, r, t):
    if config.forcing is None:
        return np.zeros_like(r)
    f = np.asarray(config.forcing(r, t), dtype=float)
    f = f.copy()
    f[-1] = 0.0
    return f


def step(state, config, dt, calc=None):
    """One leapfrog step (Taylor start on the first call).  Returns a new state."""
    calc = calc or DampingCalculus(config.damping)
    if dt > config.cfl * state.h * (1 + 1e-12):
        raise ValueError(f"dt={dt} exceeds cfl*h={config.cfl * state.h}")
    force = _forcing(config, state.r, state.t)
    b = calc.b(state.t)
    if state.dt_prev == 0.0:
        u1 = _taylor_start(state, config, b, dt, force)
        v1 = (u1 - state.u) / dt
        return WaveState(state.r, u1, v1, state.u.copy(), state.t + dt, state.N, state.h, dt)
    u_prev, u = state.u_prev.copy(), state.u.copy()
    work = np.empty_like(u)
    done, status, _ = _march(
        u_prev, u, work, state.N, state.h, config.p, np.array([b]), dt, state.dt_prev, 1, force, math.inf
    )
    if status == 2:
        raise FloatingPointError("non-finite value in leapfrog update")
    v = (u - u_prev) / dt
    return WaveState(state.r, u, v, u_prev, state.t + dt, state.N, state.h, dt)


class _Marcher:
    """Mutable two-level leapfrog state shared by the public drivers."""

    def __init__(self, config, calc, state):
        self.cfg = config
        self.calc = calc
        self.r = state.r
        self.N = state.N
        self.h = state.h
        self.u_prev = state.u.copy()
        self.t = 0.0
        self.steps = 0
        self.work = np.empty_like(state.u)
        self.zero = np.zeros_like(state.u)
        self.dt_base = config.cfl * config.h
        # Taylor start with a step that keeps the nonlinearity resolved
        self.dt_prev = self._dt_for(np.max(np.abs(state.u)))
        self.u = _taylor_start(state, config, calc.b(0.0), self.dt_prev, _forcing(config, state.r, 0.0))
        self.t = self.dt_prev
        self.steps = 1
        self.peak = float(np.max(np.abs(self.u)))

    def _dt_for(self, peak):
        dt = self.dt_base
        if peak > 0:
            dt = min(dt, self.cfg.kappa * peak ** (-(self.cfg.p - 1.0) / 2.0))
        return dt

    def u_switch(self):
        # amplitude above which the nonlinear time scale undercuts cfl*h
        return (self.cfg.kappa / self.dt_base) ** (2.0 / (self.cfg.p - 1.0))

    def bulk(self, t_end, u_stop):
        """Fixed-step march toward ``t_end``; stops early near ``u_stop``."""
        dt = self.dt_base
        n = int((t_end - self.t) / dt * (1 - 1e-12))
        if n <= 0 or self.cfg.forcing is not None:
            return 0
        ts = self.t + dt * np.arange(n)
        bvals = np.ascontiguousarray(self.calc.b_array(ts), dtype=float)
        done, status, peak = _march(
            self.u_prev, self.u, self.work, self.N, self.h, self.cfg.p, bvals, dt, self.dt_prev, n, self.zero, u_stop
        )
        if done:
            self.t += done * dt
            self.dt_prev = dt
            self.steps += done
            self.peak = peak
        return done

    def trial(self, dt):
        """Attempt one step without committing.  Returns (status, peak, new, new_prev)."""
        u_prev, u = self.u_prev.copy(), self.u.copy()
        force = _forcing(self.cfg, self.r, self.t)
        bval = np.array([self.calc.b(self.t)])
        done, status, peak = _march(
            u_prev, u, self.work, self.N, self.h, self.cfg.p, bval, dt, self.dt_prev, 1, force, math.inf
        )
        if status == 2 or not math.isfinite(peak):
            return 2, math.inf, None, None
        return 0, peak, u, u_prev

    def commit(self, dt, u, u_prev, peak):
        self.u, self.u_prev = u, u_prev
        self.t += dt
        self.dt_prev = dt
        self.steps += 1
        self.peak = peak

    def velocity(self, dt_next, u_next):
        """Second-order v at the current level from the levels on both sides."""
        km, kp = self.dt_prev, dt_next
        S = km + kp
        return km / (kp * S) * (u_next - self.u) + kp / (km * S) * (self.u - self.u_prev)

    def edge_active(self):
        return abs(self.u[-3]) > 1e-12


def solve_until_blowup(config, calc=None, snapshot_times=None):
    """March until the threshold, a step collapse, or the horizon.

    Returns ``(LifespanRecord, SnapshotSeries)``.  Snapshots are taken at the
    cadence ``config.snapshot_cadence`` or at the explicit ``snapshot_times``.
    """
    calc = calc or DampingCalculus(config.damping)
    r_state = initial_state(config, calc)
    _check_sign(config, calc, r_state.r)
    L = r_state.r[-1]
    series = SnapshotSeries(config)
    if snapshot_times is None and config.snapshot_cadence:
        snapshot_times = np.arange(0.0, config.T_max + 0.5 * config.snapshot_cadence, config.snapshot_cadence)
    targets = sorted(float(t) for t in (snapshot_times if snapshot_times is not None else []))
    if targets and targets[0] == 0.0:
        series.snapshots.append(Snapshot(0.0, r_state.r, r_state.u.copy(), r_state.v.copy(), config.N, config.h))
        targets = targets[1:]
    targets = [t for t in targets if t <= config.T_max]
    m = _Marcher(config, calc, r_state)
    pending = None  # snapshot awaiting its velocity
    U_max = config.U_max
    u_switch = min(m.u_switch(), U_max)
    reason = None
    T_num = None
    peak_out = m.peak
    chunk = 4096

    def next_target():
        return targets[0] if targets else math.inf

    while True:
        if pending is None and targets and m.t >= targets[0] - 1e-14 * max(1.0, m.t):
            pending = targets.pop(0)
        goal = min(next_target(), config.T_max)
        # bulk fixed-step phase while the solution is far from the threshold
        if pending is None and m.peak < u_switch:
            end = min(goal, m.t + chunk * m.dt_base)
            done = m.bulk(end, u_switch)
            if m.edge_active():
                raise DomainTooSmallError(m.t, L)
            if done:
                continue
        dt_adapt = m._dt_for(m.peak)
        dt = dt_adapt
        if m.t + 1.01 * dt >= goal:
            dt = goal - m.t
        if dt <= 0:
            # exactly on the horizon
            reason, T_num = "horizon", config.T_max
            break
        status, peak, u_new, u_prev_new = m.trial(dt)
        while status == 2 and dt >= config.dt_min:
            dt *= 0.5
            status, peak, u_new, u_prev_new = m.trial(dt)
        if status == 2:
            reason, T_num, peak_out = "step_collapse", m.t, m.peak
            break
        if peak >= U_max:
            # one bisection level in dt for the crossing time
            s2, peak2, u2, up2 = m.trial(0.5 * dt)
            if s2 == 0 and peak2 >= U_max:
                T_num, peak_out = m.t + 0.5 * dt, peak2
            else:
                T_num, peak_out = m.t + dt, peak
            reason = "threshold"
            break
        if pending is not None:
            v = m.velocity(dt, u_new)
            series.snapshots.append(Snapshot(m.t, m.r, m.u.copy(), v, config.N, config.h))
            pending = None
        m.commit(dt, u_new, u_prev_new, peak)
        if m.edge_active():
            raise DomainTooSmallError(m.t, L)
        if m.t >= config.T_max * (1 - 1e-15):
            reason, T_num = "horizon", config.T_max
            peak_out = m.peak
            break
        if dt_adapt < config.dt_min:
            reason, T_num, peak_out = "step_collapse", m.t, m.peak
            break
    if reason == "horizon" and targets and abs(targets[0] - config.T_max) < 1e-9 * max(1.0, config.T_max):
        v = (m.u - m.u_prev) / m.dt_prev
        series.snapshots.append(Snapshot(m.t, m.r, m.u.copy(), v, config.N, config.h))
    rec = LifespanRecord(
        eps=config.eps,
        p=config.p,
        N=config.N,
        label=config.damping.label,
        params=config.damping.params_text,
        T_num=float(T_num),
        B_of_T=calc.eval_B(float(T_num)),
        reason=reason,
        peak_norm=float(peak_out),
        steps=m.steps,
    )
    return rec, series


def _check_sign(config, calc, r):
    if config.eps == 0:
        return
    w = r ** (config.N - 1)
    mass = np.trapezoid((config.f_profile(r) + calc.B0 * config.g_profile(r)) * w, r)
    if not mass > 0:
        raise SignConditionError(f"int f + B0 int g = {mass:.3g} is not positive")


def solve_with_growth(config, calc=None, snapshot_times=None, max_doublings=4):
    """Run :func:`solve_until_blowup`, doubling L whenever the domain is too small."""
    calc = calc or DampingCalculus(config.damping)
    cfg = config
    for _ in range(max_doublings + 1):
        try:
            return solve_until_blowup(cfg, calc, snapshot_times)
        except DomainTooSmallError as err:
            cfg = replace(cfg, L=2.0 * err.L)
    raise DomainTooSmallError(math.nan, cfg.L)


# ---------------------------------------------------------------------------
# manufactured solution


def _manufactured(config):
    p, N = config.p, config.N
    b_of = DampingCalculus(config.damping).b

    def exact(r, t):
        return math.exp(-t) * np.exp(-r * r)

    def forcing(r, t):
        u = exact(r, t)
        return u * (1.0 - 4.0 * r * r + 2.0 * N - b_of(t)) - np.abs(u) ** p

    return exact, forcing


def manufactured_error(config, h, T=1.0, L=8.0):
    exact, forcing = _manufactured(config)
    cfg = replace(
        config,
        eps=1.0,
        h=h,
        L=L,
        T_max=T,
        f_profile=lambda r: np.exp(-r * r),
        g_profile=lambda r: -np.exp(-r * r),
        forcing=forcing,
        U_max=math.inf,
        snapshot_cadence=None,
    )
    calc = DampingCalculus(cfg.damping)
    state = initial_state(cfg, calc, L)
    m = _Marcher(cfg, calc, state)
    while m.t < T * (1 - 1e-14):
        dt = min(m.dt_base, T - m.t)
        status, peak, u_new, u_prev_new = m.trial(dt)
        if status:
            raise FloatingPointError("manufactured run diverged")
        m.commit(dt, u_new, u_prev_new, peak)
    err = m.u - exact(m.r, T)
    w = m.r ** (cfg.N - 1)
    return math.sqrt(np.trapezoid(err * err * w, m.r))


def convergence_order(config, hs=(0.1, 0.05, 0.025)):
    """Observed L^2 order from the manufactured solution exp(-t) exp(-r^2)."""
    errs = [manufactured_error(config, h) for h in hs]
    if errs[-1] == 0.0:
        return math.inf
    orders = [math.log(errs[i] / errs[i + 1]) / math.log(hs[i] / hs[i + 1]) for i in range(len(hs) - 1)]
    return min(orders)
