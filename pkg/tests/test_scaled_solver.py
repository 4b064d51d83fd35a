import math
import warnings

import numpy as np
import pytest

from blowup_lab.damping import BUILTIN, DampingCalculus
from blowup_lab.scaled_solver import (
    BoundaryLeakWarning,
    EnergyReport,
    ResamplingError,
    ScaledGrid,
    ScaledState,
    _cumulative,
    check_alpha_ode,
    compare_frames,
    compute_energies_1d,
    decompose_alpha,
    evolve_scaled,
    frame_coefficients,
    from_scaled,
    initial_scaled,
    phi0,
    psi0,
    solve_scaled_until_blowup,
    to_scaled,
)
from blowup_lab.wave_solver import SolveConfig, WaveState, gaussian_profile, initial_state, solve_with_growth, zero_profile

GRID = ScaledGrid(16.0, 0.05, 1)


def _state(calc, t, N, r, u, ut):
    return WaveState(r, u, ut, u.copy(), t, N, float(r[1] - r[0]), 0.0)


def test_frame_coefficients(calcs):
    co = frame_coefficients(calcs["constant"], 1.0, 4.0, 1)
    assert co.t == pytest.approx(math.e - 1.0)
    assert co.kappa == pytest.approx(math.exp(-1.0))
    assert co.beta == 0.0
    assert co.sigma_factor == pytest.approx(math.exp(0.5 * (3.0 - 4.0)))
    co = frame_coefficients(calcs["log_tower"], 800.0, 2.0, 1)
    assert co.t == math.inf and co.kappa == 0.0 and co.beta == 0.0


def test_to_scaled_identity_at_t0(calcs):
    calc = calcs["power_half"]
    cfg = SolveConfig(p=2.0, eps=0.3, damping=BUILTIN["power_half"], L=20.0, g_profile=gaussian_profile(1.0, 0.5))
    st = initial_state(cfg, calc)
    sc = to_scaled(st, calc, GRID)
    y = np.abs(GRID.y)
    assert sc.s == 0.0
    assert np.allclose(sc.v, 0.3 * np.exp(-(y**2)), atol=1e-6)
    assert np.allclose(sc.w, calc.b(0.0) * 0.15 * np.exp(-(y**2)), atol=1e-6)


@pytest.mark.parametrize("N", [1, 3])
def test_self_similar_profile_is_stationary(calcs, N):
    calc = calcs["log_tower"]
    grid = ScaledGrid(10.0, 0.05, N)
    r = np.linspace(0.0, 80.0, 8001)
    prof = lambda y: np.exp(-(y**2) / 3.0)
    for t in (0.0, 3.0, 40.0):
        scale = calc.eval_B(t) + 1.0
        u = scale ** (-N / 2) * prof(r / math.sqrt(scale))
        sc = to_scaled(_state(calc, t, N, r, u, np.zeros_like(r)), calc, grid)
        assert np.max(np.abs(sc.v - prof(np.abs(grid.y)))) < 1e-8
        assert sc.s == pytest.approx(math.log(scale))


@pytest.mark.parametrize("N", [1, 2])
def test_roundtrip(calcs, N):
    calc = calcs["constant"]
    grid = ScaledGrid(12.0, 0.01, N)
    r = np.linspace(0.0, 30.0, 6001)
    t = 2.0
    u = np.exp(-(r**2) / 4.0) * (1 + 0.3 * np.cos(r))
    ut = -0.2 * (1.0 - r**2 / 5.0) * np.exp(-(r**2) / 5.0)  # radial data must be even in r
    st = _state(calc, t, N, r, u, ut)
    back = from_scaled(to_scaled(st, calc, grid), calc, r[r < 20.0])
    keep = r < 20.0
    assert back.t == pytest.approx(t)
    assert np.max(np.abs(back.u - u[keep])) < 1e-6 * np.max(np.abs(u))
    assert np.max(np.abs(back.v - ut[keep])) < 1e-6 * np.max(np.abs(ut))


def test_resampling_errors(calcs):
    calc = calcs["constant"]
    r = np.linspace(0.0, 5.0, 101)
    st = _state(calc, 3.0, 1, r, np.exp(-(r**2)), np.zeros_like(r))
    with pytest.raises(ResamplingError):
        to_scaled(st, calc, GRID)
    sc = initial_scaled(GRID, calc, 1.0, gaussian_profile(), zero_profile)
    with pytest.raises(ResamplingError):
        from_scaled(sc, calc, np.linspace(0.0, 40.0, 11))


@pytest.mark.parametrize("N", [1, 2, 3])
def test_gaussian_mode_identity(N):
    grid = ScaledGrid(16.0, 0.02, N)
    y = grid.y
    res = grid.drift(phi0(y, N)) + 0.5 * N * phi0(y, N) + psi0(y, N)
    assert np.max(np.abs(res[1:-1])) < 1e-5
    # trapezoid against r^{N-1}: exact to roundoff for N = 1, O(k^2) otherwise
    tol = 1e-12 if N == 1 else 1e-4
    assert grid.integrate(phi0(y, N)) == pytest.approx(1.0, abs=tol)
    assert abs(grid.integrate(psi0(y, N))) < tol
    lap = grid.laplacian(phi0(y, N))
    assert np.max(np.abs(lap - psi0(y, N))[:-1]) < 1e-4


def test_decompose_pure_mode():
    y = GRID.y
    st = ScaledState(GRID, 3.0 * phi0(y, 1), np.zeros_like(y), 0.0)
    dec = decompose_alpha(st)
    assert dec.alpha == pytest.approx(3.0, abs=1e-12)
    assert dec.dalpha_ds == 0.0
    assert np.max(np.abs(dec.f)) < 1e-12
    assert np.allclose(dec.g, -3.0 * psi0(y, 1), atol=1e-12)
    assert abs(dec.mean_g) < 1e-10


def test_boundary_leak_warning():
    y = GRID.y
    st = ScaledState(GRID, np.ones_like(y), np.zeros_like(y), 0.0)
    with pytest.warns(BoundaryLeakWarning):
        decompose_alpha(st)


def test_cumulative_of_mean_zero_vanishes_at_ends():
    y = GRID.y
    f = np.where(np.abs(y) < 2, y * (4 - y * y) ** 2, 0.0) + np.where(np.abs(y - 5) < 1, (1 - (y - 5) ** 2) ** 2, 0.0)
    f = f - np.where(np.abs(y + 5) < 1, (1 - (y + 5) ** 2) ** 2, 0.0)
    F = _cumulative(GRID, f)
    assert abs(F[0]) < 1e-8 and abs(F[-1]) < 1e-8


def test_zero_fields_energies(calcs):
    y = GRID.y
    zero = [ScaledState(GRID, np.zeros_like(y), np.zeros_like(y), s) for s in (0.0, 0.1, 0.2)]
    reps = compute_energies_1d(zero, calcs["constant"], 2.0)
    for rep in reps:
        assert (rep.E0, rep.E1, rep.E2, rep.E3, rep.E4, rep.E5, rep.M) == (0, 0, 0, 0, 0, 0, 0)
    assert np.all(check_alpha_ode(reps) == 0.0)


@pytest.fixture(scope="module")
def linear_run(calcs):
    calc = calcs["constant"]
    st = initial_scaled(GRID, calc, 1.0, gaussian_profile(), zero_profile)
    run = evolve_scaled(st, calc, 2.0, 5.0, ds=1e-3, record_at=list(np.arange(0.05, 5.0001, 0.05)), nonlinear=False)
    return run, compute_energies_1d(run.states, calc, 2.0)


def test_alpha_conserved_in_linear_heat_limit(linear_run):
    _, reps = linear_run
    alphas = np.array([r.alpha for r in reps if 1.0 <= r.s <= 5.0])
    assert np.max(np.abs(alphas - alphas[-1])) < 1e-3 * abs(alphas[-1])


def test_alpha_ode_linear_residual(calcs):
    # nonzero g so that alpha' = int w is not identically zero; it decays like
    # exp(-(e^s - 1 - s)) for unit damping, so stop at s = 2
    calc = calcs["constant"]
    st = initial_scaled(GRID, calc, 1.0, gaussian_profile(), gaussian_profile())
    run = evolve_scaled(st, calc, 2.0, 2.0, ds=2e-4, record_at=list(np.arange(0.0, 2.0001, 0.01)), nonlinear=False)
    reps = compute_energies_1d(run.states, calc, 2.0)
    res = check_alpha_ode(reps, nonlinear=False)
    assert np.max(res) < 0.01
    da = np.array([r.dalpha_ds for r in reps])
    s = np.array([r.s for r in reps])
    assert np.allclose(da, da[0] * np.exp(-(np.expm1(s) - s)), rtol=0.02, atol=1e-6 * abs(da[0]))


def test_dalpha_two_ways(linear_run):
    _, reps = linear_run
    s = np.array([r.s for r in reps])
    a = np.array([r.alpha for r in reps])
    da = np.array([r.dalpha_ds for r in reps])
    fd = (a[2:] - a[:-2]) / (s[2:] - s[:-2])
    assert np.max(np.abs(fd - da[1:-1])) < 0.05 * np.max(np.abs(da)) + 1e-6


def test_monitor_nondecreasing_and_norm_equivalence(linear_run):
    _, reps = linear_run
    M = np.array([r.M for r in reps])
    assert np.all(np.diff(M) >= 0)
    ratio = np.array([r.E5 / r.bracket for r in reps if r.s >= 0.5])
    assert ratio.max() / ratio.min() < 10.0
    assert all(len(r.row()) == len(EnergyReport.COLUMNS) for r in reps)


def test_mean_zero_along_run(linear_run):
    _, reps = linear_run
    assert all(abs(r.mean_f) < 1e-6 and abs(r.mean_g) < 1e-6 for r in reps)


def test_supercritical_relaxation_limit(calcs):
    calc = calcs["log_tower"]
    co = frame_coefficients(calc, 12.0, 4.0, 1)
    assert co.kappa < 1e-10 and abs(co.beta) < 1e-10


def test_frame_consistency_small():
    cmp = compare_frames(0.05, 4.0, BUILTIN["constant"], s_cmp=0.5, h=0.05, ds=2e-3)
    assert cmp.rel_total < 0.01


@pytest.mark.parametrize("name", ["constant", "power_half"])
def test_scaled_lifespan_matches_direct(name):
    cfg = SolveConfig(p=2.0, eps=0.5, damping=BUILTIN[name], T_max=200.0, cfl=0.9)
    direct = solve_with_growth(cfg)[0]
    scaled = solve_scaled_until_blowup(cfg)
    assert scaled.reason == direct.reason == "threshold"
    assert scaled.B_of_T == pytest.approx(direct.B_of_T, rel=2e-3)


def test_scaled_horizon_record(calcs):
    cfg = SolveConfig(p=4.0, eps=0.01, damping=BUILTIN["constant"], T_max=20.0)
    rec = solve_scaled_until_blowup(cfg)
    assert rec.reason == "horizon" and rec.T_num == 20.0


def test_energy_requires_N1(calcs):
    grid = ScaledGrid(8.0, 0.1, 2)
    st = ScaledState(grid, np.zeros_like(grid.y), np.zeros_like(grid.y), 0.0)
    with pytest.raises(ValueError):
        compute_energies_1d([st], calcs["constant"], 2.0)


def test_growth_limited_collapse_counts_as_threshold():
    # kappa ~ 1e-20 near blowup: the step limit hits ds_min while e^{-s/2} v < U_max
    cfg = SolveConfig(p=3.0, eps=0.7917047464637365, damping=BUILTIN["log_tower"], T_max=math.inf)
    rec = solve_scaled_until_blowup(cfg)
    assert rec.reason == "threshold"
    assert rec.B_of_T == pytest.approx(21.02097, rel=1e-5)
