import math
from dataclasses import replace

import numpy as np
import pytest

from blowup_lab.damping import BUILTIN, DampingCalculus, make_spec
from blowup_lab.wave_solver import (
    RECORD_COLUMNS,
    LifespanRecord,
    SignConditionError,
    SolveConfig,
    auto_domain,
    convergence_order,
    initial_state,
    manufactured_error,
    radial_laplacian,
    read_records,
    read_snapshot,
    solve_until_blowup,
    solve_with_growth,
    step,
    write_records,
    write_snapshot,
    zero_profile,
)


def _bump(r):
    """C^3 bump supported in r < 1."""
    r = np.asarray(r, dtype=float)
    return np.where(r < 1.0, (1.0 - np.minimum(r, 1.0) ** 2) ** 4, 0.0)


@pytest.mark.parametrize("N", [1, 2, 3])
def test_laplacian_constant_and_quadratic(N):
    h = 0.1
    r = np.arange(51) * h
    assert np.allclose(radial_laplacian(np.full_like(r, 3.0), N, h)[:-1], 0.0, atol=1e-12)
    lap = radial_laplacian(r**2, N, h)
    assert np.allclose(lap[:-1], 2.0 * N, atol=1e-10)


def test_laplacian_rejects_bad_dimension():
    with pytest.raises(ValueError):
        radial_laplacian(np.zeros(4), 0, 0.1)


def test_laplacian_second_order_on_smooth_field():
    errs = []
    for h in (0.1, 0.05):
        r = np.arange(int(6 / h) + 1) * h
        u = np.exp(-(r**2))
        exact = (4 * r**2 - 6) * u  # N = 3
        errs.append(np.max(np.abs(radial_laplacian(u, 3, h) - exact)[:-1]))
    assert math.log2(errs[0] / errs[1]) > 1.9


def test_zero_data_stays_zero():
    cfg = SolveConfig(p=2.0, eps=0.0, damping=BUILTIN["constant"], T_max=5.0, L=10.0)
    rec, _ = solve_until_blowup(cfg)
    assert rec.reason == "horizon" and rec.peak_norm == 0.0


def test_large_damping_is_stable():
    cfg = SolveConfig(p=2.0, eps=0.1, damping=make_spec("constant", "c=1e6"), L=10.0, cfl=0.9)
    calc = DampingCalculus(cfg.damping)
    st = initial_state(cfg, calc)
    u0 = st.u.copy()
    for _ in range(200):
        st = step(st, cfg, 0.9 * cfg.h, calc)
    assert np.all(np.isfinite(st.u))
    # overdamped motion barely moves the data
    assert np.max(np.abs(st.u - u0)) < 1e-3


def test_step_rejects_cfl_violation():
    cfg = SolveConfig(p=2.0, eps=0.1, damping=BUILTIN["constant"], L=5.0)
    st = initial_state(cfg)
    with pytest.raises(ValueError):
        step(st, cfg, cfg.h)


def _energy(u, v, r, N, h):
    ur = np.diff(u) / h
    rm = 0.5 * (r[1:] + r[:-1])
    return 0.5 * np.trapezoid(v * v * r ** (N - 1), r) + 0.5 * float(np.sum(ur * ur * rm ** (N - 1)) * h)


@pytest.mark.parametrize("N", [1, 3])
def test_linear_energy_nonincreasing(N):
    # eps tiny and p large make the nonlinearity negligible
    cfg = SolveConfig(p=5.0, eps=1e-6, damping=BUILTIN["log_tower"], N=N, L=30.0, h=0.05, cfl=0.5)
    calc = DampingCalculus(cfg.damping)
    st = initial_state(cfg, calc)
    st = step(st, cfg, 0.025, calc)
    energies = []
    for _ in range(400):
        new = step(st, cfg, 0.025, calc)
        v = (new.u - st.u_prev) / (new.t - st.t + st.dt_prev)
        energies.append(_energy(st.u, v, st.r, N, cfg.h))
        st = new
    e = np.array(energies)
    assert np.all(np.diff(e) <= 1e-3 * 0.025**2 * e[0])
    assert e[-1] < e[0]


def test_finite_propagation():
    cfg = SolveConfig(p=2.0, eps=0.5, damping=BUILTIN["constant"], f_profile=_bump, support=1.0,
                      L=20.0, h=0.05, cfl=0.9, snapshot_cadence=2.0, T_max=8.0)
    _, series = solve_until_blowup(cfg)
    for snap in series.snapshots:
        peak = np.max(np.abs(snap.u))
        front = 1.0 + snap.t
        # dispersive precursor of the discrete scheme: small past 2h, roundoff past 20h
        assert np.all(np.abs(snap.u[snap.r > front + 2 * cfg.h]) < 1e-4 * peak)
        assert np.all(np.abs(snap.u[snap.r > front + 20 * cfg.h]) < 1e-12)


def test_sign_condition():
    cfg = SolveConfig(p=2.0, eps=1.0, damping=BUILTIN["constant"], f_profile=lambda r: -np.exp(-(r**2)), L=10.0)
    with pytest.raises(SignConditionError):
        solve_until_blowup(cfg)


def test_subcritical_blowup_and_monotone_in_eps():
    recs = []
    for eps in (0.5, 1.0, 2.0):
        cfg = SolveConfig(p=2.0, eps=eps, damping=BUILTIN["constant"], T_max=50.0, cfl=0.9)
        rec, _ = solve_with_growth(cfg)
        assert rec.reason == "threshold" and rec.peak_norm >= cfg.U_max
        assert rec.B_of_T == pytest.approx(rec.T_num)
        recs.append(rec)
    assert recs[0].T_num > recs[1].T_num > recs[2].T_num
    assert recs[1].T_num == pytest.approx(6.176, abs=5e-3)


def test_supercritical_small_data_reaches_horizon():
    cfg = SolveConfig(p=4.0, eps=0.01, damping=BUILTIN["constant"], T_max=50.0, cfl=0.9)
    rec, _ = solve_with_growth(cfg)
    assert rec.reason == "horizon" and rec.T_num == cfg.T_max
    assert rec.peak_norm < 0.01


def test_threshold_insensitivity():
    base = SolveConfig(p=2.0, eps=0.5, damping=BUILTIN["power_half"], T_max=100.0, cfl=0.9)
    T6 = solve_with_growth(base)[0].T_num
    T8 = solve_with_growth(replace(base, U_max=1e8))[0].T_num
    assert abs(T8 - T6) / T6 < 0.01


def test_manufactured_solution():
    cfg = SolveConfig(p=2.0, eps=1.0, damping=BUILTIN["constant"], cfl=0.5)
    assert convergence_order(cfg) >= 1.9
    cfg = SolveConfig(p=1.5, eps=1.0, damping=BUILTIN["log_tower"], N=3, cfl=0.5)
    assert convergence_order(cfg) >= 1.9


def test_time_refinement_plateaus_at_spatial_error():
    cfg = SolveConfig(p=2.0, eps=1.0, damping=BUILTIN["constant"], cfl=0.5)
    e1 = manufactured_error(cfg, 0.05)
    e2 = manufactured_error(replace(cfg, cfl=0.25), 0.05)
    # the spatial part dominates: halving dt alone gains far less than 4x
    assert e2 > 0.3 * e1


def test_auto_domain_covers_diffusive_scale():
    cfg = SolveConfig(p=2.0, eps=0.1, damping=BUILTIN["constant"], T_max=400.0)
    L = auto_domain(cfg)
    assert L >= cfg.support + 64.0 + 13.0 * math.sqrt(401.0)
    # decaying damping keeps the whole light cone
    cfg = replace(cfg, damping=BUILTIN["power_half"], T_max=100.0)
    assert auto_domain(cfg) >= cfg.support + 100.0


def test_record_and_snapshot_io(tmp_path):
    rec = LifespanRecord(0.1, 2.0, 1, "constant", "c=1", 1 / 3, 1 / 3, "threshold", 1e6 + 0.1, 10)
    path = tmp_path / "r.csv"
    write_records(path, [rec])
    write_records(path, [rec], append=True)
    back = read_records(path)
    assert back == [rec, rec]
    assert open(path).readline().strip().split(",") == RECORD_COLUMNS
    cfg = SolveConfig(p=2.0, eps=1.0, damping=BUILTIN["constant"], T_max=1.0, L=12.0, snapshot_cadence=0.5)
    _, series = solve_until_blowup(cfg)
    snap = series.snapshots[-1]
    write_snapshot(tmp_path / "s.txt", snap)
    back = read_snapshot(tmp_path / "s.txt")
    assert back.t == snap.t and back.N == 1 and back.h == snap.h
    assert np.array_equal(back.u, snap.u) and np.array_equal(back.v, snap.v)


def test_snapshot_velocity_is_second_order():
    # linear regime: compare the snapshot velocity with a fine-step reference
    vals = []
    for h in (0.05, 0.025):
        cfg = SolveConfig(p=5.0, eps=1e-3, damping=BUILTIN["constant"], T_max=2.0, L=12.0, h=h, cfl=0.5)
        _, s = solve_until_blowup(cfg, snapshot_times=[1.0])
        vals.append(s.snapshots[0])
    fine = vals[1]
    coarse = vals[0]
    v_f = np.interp(coarse.r, fine.r, fine.v)
    assert np.max(np.abs(coarse.v - v_f)) < 1e-2 * np.max(np.abs(v_f))


def test_zero_profile():
    assert np.all(zero_profile(np.linspace(0, 1, 5)) == 0.0)
