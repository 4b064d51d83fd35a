"""Lifespan sweeps, scaling-law fits and the B-time universality check."""

from __future__ import annotations

import csv
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .damping import (
    AssumptionError,
    BracketOverflowError,
    DampingCalculus,
    PowerLaw,
    ScaleInvariant,
    check_assumptions,
    make_spec,
    predicted_lifespan,
    regime,
    subcritical_exponent,
)
from .scaled_solver import ScaledGrid, solve_scaled_until_blowup
from .wave_solver import LifespanRecord, SolveConfig, auto_domain, solve_with_growth, write_records

FIT_COLUMNS = ["model", "slope", "intercept", "r_squared", "predicted_slope", "relative_error"]


class SweepError(RuntimeError):
    def __init__(self, records, failures):
        lines = "; ".join(f"eps={e:g}: {msg}" for e, msg in failures)
        super().__init__(f"{len(failures)} run(s) failed: {lines}")
        self.records = records
        self.failures = failures


class InsufficientDataError(ValueError):
    pass


def geometric_eps(hi, lo, n):
    return [float(x) for x in np.geomspace(hi, lo, n)]


@dataclass
class SweepPlan:
    family: str
    params: str = ""
    N: int = 1
    p: float = 2.0
    eps_list: list = field(default_factory=lambda: geometric_eps(1.0, 0.05, 7))
    tmax: float = 1e6
    out: str | None = None
    frame: str = "direct"
    h: float | None = None
    cfl: float = 0.8
    workers: int = 1
    U_max: float = 1e6
    label: str = ""
    ds: float = 2e-3
    refine: int = 1

    def __post_init__(self):
        self.eps_list = sorted((float(e) for e in self.eps_list), reverse=True)
        if len(set(self.eps_list)) != len(self.eps_list):
            raise ValueError("eps list must be strictly decreasing")
        if self.refine < 1:
            raise ValueError("refine must be a positive integer")
        if self.frame not in ("direct", "scaled"):
            raise ValueError(f"frame must be 'direct' or 'scaled', got {self.frame!r}")

    @property
    def spec(self):
        return make_spec(self.family, self.params, self.label)


PLAN_KEYS = {
    "family": str,
    "params": str,
    "N": int,
    "p": float,
    "eps_list": str,
    "tmax": float,
    "out": str,
    "frame": str,
    "h": float,
    "cfl": float,
    "workers": int,
    "umax": float,
    "label": str,
    "ds": float,
    "refine": int,
}


def parse_eps_list(text):
    """``0.2,0.1,0.05`` or ``geom:hi:lo:n``."""
    text = text.strip()
    if text.startswith("geom:"):
        _, hi, lo, n = text.split(":")
        return geometric_eps(float(hi), float(lo), int(n))
    return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]


def parse_plan(text):
    """Line-oriented ``key=value`` plan; ``#`` starts a comment."""
    kw = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"plan line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in PLAN_KEYS:
            raise ValueError(f"plan line {lineno}: unknown key {key!r}")
        kw[key] = PLAN_KEYS[key](value)
    if "family" not in kw:
        raise ValueError("plan needs a family")
    if "eps_list" in kw:
        kw["eps_list"] = parse_eps_list(kw["eps_list"])
    if "umax" in kw:
        kw["U_max"] = kw.pop("umax")
    return SweepPlan(**kw)


def read_plan(path):
    with open(path) as fh:
        return parse_plan(fh.read())


# ---------------------------------------------------------------------------
# sweeps


def _run_one(args):
    plan, eps, T_max = args
    spec = plan.spec
    calc = DampingCalculus(spec)
    cfg = SolveConfig(p=plan.p, eps=eps, damping=spec, N=plan.N, cfl=plan.cfl, U_max=plan.U_max, T_max=T_max)
    if plan.frame == "scaled":
        grid = ScaledGrid(16.0, 0.05 / plan.refine, plan.N)
        return solve_scaled_until_blowup(cfg, grid=grid, ds=plan.ds / plan.refine, calc=calc)
    # grid policy: h = min(0.05, L/4000), divided by the refinement factor
    L = auto_domain(cfg, calc)
    h = (plan.h or min(0.05, L / 4000.0)) / plan.refine
    cfg = replace(cfg, h=h, L=auto_domain(replace(cfg, h=h), calc))
    rec, _ = solve_with_growth(cfg, calc)
    return rec


def _calibrate(plan, rec):
    """Lifespan-law constant C from one blowup record."""
    kind = regime(plan.p, plan.N)
    if not rec.blew_up or kind == "supercritical":
        return None
    if kind == "subcritical":
        return rec.B_of_T * rec.eps ** subcritical_exponent(plan.p, plan.N)
    return math.log(max(rec.B_of_T, 1.0 + 1e-12)) * rec.eps ** (plan.p - 1.0)


def _budget(plan, eps, C):
    if C is None:
        return plan.tmax
    pred = predicted_lifespan(plan.spec, plan.p, plan.N, eps, C)
    if plan.frame == "scaled":
        # scaled runs are bounded in s; allow B up to a generous multiple
        return pred.t if math.isfinite(pred.t) else math.inf
    return min(plan.tmax, 3.0 * pred.t + 20.0)


def run_sweep(plan, progress=None):
    """Run every eps in the plan; records come back ordered by eps descending.

    The largest eps is run first as a pilot; its lifespan calibrates the
    horizon of the remaining runs.  A run that hits a calibrated horizon
    below ``plan.tmax`` is retried with four times the horizon.
    """
    if not plan.eps_list:
        return []
    spec = plan.spec
    report = check_assumptions(spec)
    if not (report.b0_ok and report.not_overdamping):
        raise AssumptionError(f"{spec.label}: blowup hypotheses fail (b0_ok={report.b0_ok}, "
                              f"not_overdamping={report.not_overdamping})")
    failures = []
    results = {}

    calc = DampingCalculus(spec)

    def extend(T_max):
        # direct runs quadruple t; scaled runs quadruple B, so slowly growing
        # B (log damping) does not take hundreds of retries
        if plan.frame == "direct":
            return min(plan.tmax, 4.0 * T_max)
        try:
            return min(plan.tmax, calc.invert_B(4.0 * calc.eval_B(T_max) + 1.0))
        except BracketOverflowError:
            return plan.tmax

    def finish(eps, rec, T_max):
        # horizon reached below the plan cap: extend and retry
        while rec.reason == "horizon" and T_max < plan.tmax:
            T_max = extend(T_max)
            rec = _run_one((plan, eps, T_max))
        return rec

    first = plan.eps_list[0]
    # pilot: start from a short horizon; the domain is sized from T_max
    T0 = min(plan.tmax, 50.0) if plan.frame == "direct" else math.inf
    try:
        rec0 = finish(first, _run_one((plan, first, T0)), T0)
        results[first] = rec0
        if progress:
            progress(rec0)
    except Exception as exc:  # noqa: BLE001 - recorded and reported below
        failures.append((first, f"{type(exc).__name__}: {exc}"))
        rec0 = None
    C = _calibrate(plan, rec0) if rec0 else None
    rest = [(plan, e, _budget(plan, e, C)) for e in plan.eps_list[1:]]
    if plan.workers > 1 and len(rest) > 1:
        with ProcessPoolExecutor(plan.workers) as pool:
            futures = [pool.submit(_run_one, a) for a in rest]
            outcomes = []
            for a, fut in zip(rest, futures):
                try:
                    outcomes.append((a, fut.result(), None))
                except Exception as exc:  # noqa: BLE001
                    outcomes.append((a, None, exc))
    else:
        outcomes = []
        for a in rest:
            try:
                outcomes.append((a, _run_one(a), None))
            except Exception as exc:  # noqa: BLE001
                outcomes.append((a, None, exc))
    for (plan_, eps, T_max), rec, exc in outcomes:
        if exc is None:
            try:
                rec = finish(eps, rec, T_max)
            except Exception as exc2:  # noqa: BLE001
                exc = exc2
        if exc is not None:
            failures.append((eps, f"{type(exc).__name__}: {exc}"))
            continue
        results[eps] = rec
        if progress:
            progress(rec)
    records = [results[e] for e in plan.eps_list if e in results]
    if plan.out:
        write_records(plan.out, records)
    if failures:
        raise SweepError(records, failures)
    return records


# ---------------------------------------------------------------------------
# fits


@dataclass
class FitResult:
    model: str
    slope: float
    intercept: float
    r_squared: float
    predicted_slope: float
    relative_error: float
    n: int = 0
    variable: str = "T"

    def row(self):
        return {
            "model": self.model,
            "slope": f"{self.slope:.17g}",
            "intercept": f"{self.intercept:.17g}",
            "r_squared": f"{self.r_squared:.17g}",
            "predicted_slope": f"{self.predicted_slope:.17g}",
            "relative_error": f"{self.relative_error:.17g}",
        }


def write_fits(path, fits):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=FIT_COLUMNS, lineterminator="\n")
        w.writeheader()
        for f in fits:
            w.writerow(f.row())


def linear_fit(x, y):
    """Least-squares line; returns (slope, intercept, r_squared)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), min(max(r2, 0.0), 1.0)


def blowup_records(records):
    return [r for r in records if r.blew_up]


def predicted_power_slope(family, p, N, variable):
    kappa = subcritical_exponent(p, N)
    if variable == "B":
        return -kappa
    if isinstance(family, PowerLaw):
        return -kappa / (1.0 + family.beta)
    if family.name == "constant":
        return -kappa
    if isinstance(family, ScaleInvariant):
        # B = (t + t^2/2)/mu grows like t^2
        return -kappa / 2.0
    raise ValueError(f"no closed-form t-exponent for {family.name}; fit B instead")


def fit_subcritical(records, plan, variable="T", min_points=5):
    """Slope of log T (or log B(T)) against log eps on blowup records."""
    if regime(plan.p, plan.N) != "subcritical":
        raise ValueError("fit_subcritical needs p < 1 + 2/N")
    recs = blowup_records(records)
    if variable == "T":
        recs = [r for r in recs if math.isfinite(r.T_num)]
    if len(recs) < min_points:
        raise InsufficientDataError(f"need {min_points} blowup records, have {len(recs)}")
    x = np.log([r.eps for r in recs])
    y = np.log([r.T_num if variable == "T" else r.B_of_T for r in recs])
    slope, intercept, r2 = linear_fit(x, y)
    pred = predicted_power_slope(plan.spec.family, plan.p, plan.N, variable)
    return FitResult("power", slope, intercept, r2, pred, abs(slope - pred) / abs(pred), len(recs), variable)


def fit_critical(records, plan, min_points=5):
    """log(B(T)+1) against eps^{-(p-1)}; only the sign of the slope and R^2 are meaningful."""
    recs = blowup_records(records)
    if len(recs) < min_points or len({r.eps for r in recs}) < 2:
        raise InsufficientDataError(f"need {min_points} blowup records at distinct eps, have {len(recs)}")
    x = np.array([r.eps ** (-(plan.p - 1.0)) for r in recs])
    y = np.log1p([r.B_of_T for r in recs])
    slope, intercept, r2 = linear_fit(x, y)
    return FitResult("critical", slope, intercept, r2, math.nan, math.nan, len(recs), "B")


@dataclass
class GrowthTest:
    power_sse: float
    exp_sse: float
    local_slopes: list
    steepening: bool

    @property
    def faster_than_power(self):
        return self.steepening and self.exp_sse < self.power_sse


def power_fit_residual_test(records, p):
    """Does B(T) outgrow every fitted power of 1/eps over the window?

    Both two-parameter models are fitted to log(B+1): a power law
    (linear in log eps) and the exponential law (linear in eps^{-(p-1)}).
    Growth is faster than any power when the exponential model fits better
    and the local log-log slopes steepen monotonically toward small eps.
    """
    recs = sorted(blowup_records(records), key=lambda r: -r.eps)
    if len(recs) < 3:
        raise InsufficientDataError("power-fit residual test needs three blowup records")
    eps = np.array([r.eps for r in recs])
    y = np.log1p([r.B_of_T for r in recs])
    sse = []
    for x in (np.log(eps), eps ** (-(p - 1.0))):
        slope, intercept, _ = linear_fit(x, y)
        sse.append(float(np.sum((y - slope * x - intercept) ** 2)))
    local = np.diff(y) / np.diff(np.log(eps))
    steepening = bool(np.all(np.diff(local) < 0))
    return GrowthTest(sse[0], sse[1], [float(v) for v in local], steepening)


def fit_sanity(records, plan, variable="T"):
    """Relative slope change when the largest-eps point is dropped."""
    full = fit_subcritical(records, plan, variable)
    recs = sorted(blowup_records(records), key=lambda r: -r.eps)[1:]
    trimmed = fit_subcritical(recs, plan, variable, min_points=4)
    return abs(trimmed.slope - full.slope) / abs(full.slope)


@dataclass
class UniversalityReport:
    slopes: dict
    predicted: float
    max_pairwise: float
    max_vs_predicted: float
    excluded: dict
    notes: list

    @property
    def ok(self):
        return self.max_pairwise < 0.15 and self.max_vs_predicted < 0.15

    def lines(self):
        out = [f"predicted B-slope : {self.predicted:.6g}"]
        out += [f"{k:<24} : {v:.6g}" for k, v in self.slopes.items()]
        out += [f"{k:<24} : {v:.6g} (excluded)" for k, v in self.excluded.items()]
        out.append(f"max pairwise rel diff : {self.max_pairwise:.4g}")
        out.append(f"max rel diff to pred  : {self.max_vs_predicted:.4g}")
        out += [f"note : {n}" for n in self.notes]
        return out


def universality_check(record_sets, p, N):
    """Fit log B(T) against log eps per family and compare slopes.

    ``record_sets`` maps a family label to ``(plan, records)``.
    Scale-invariant damping is fitted and printed but left out of the
    assertion because only an upper bound is available for it.
    """
    if regime(p, N) != "subcritical":
        raise ValueError("universality is checked in the subcritical range")
    slopes, excluded, notes = {}, {}, []
    for label, (plan, recs) in record_sets.items():
        fit = fit_subcritical(recs, plan, variable="B")
        if isinstance(plan.spec.family, ScaleInvariant):
            excluded[label] = fit.slope
            pred = predicted_lifespan(plan.spec, p, N, min(plan.eps_list))
            notes.append(
                f"{label}: upper bound B(T) <= C eps^-{subcritical_exponent(p, N):g} "
                f"(t <= {pred.t:.4g} at C=1); no lower bound is available, slope not asserted"
            )
        else:
            slopes[label] = fit.slope
    if len(slopes) < 2:
        raise InsufficientDataError("universality needs at least two asserted families")
    pred = -subcritical_exponent(p, N)
    pairs = [abs(a - b) / max(abs(a), abs(b)) for a, b in itertools.combinations(slopes.values(), 2)]
    vs_pred = [abs(s - pred) / abs(pred) for s in slopes.values()]
    return UniversalityReport(slopes, pred, max(pairs), max(vs_pred), excluded, notes)


def record_dicts(records):
    return [asdict(r) for r in records]
