"""Acceptance suite: eight end-to-end criteria, one printed verdict line each.

Each test computes its quantities first, records a [PASS]/[FAIL] line with the
measured values (echoed again in the terminal summary), and only then asserts.
"""

import time

import numpy as np
import pytest
import scipy.linalg

from aniflow import diagnostics, harness
from aniflow.integrator import StepperConfig, run
from aniflow.model import (
    FlowState,
    compute_rhs,
    compute_rhs_explicit,
    pressure_solve,
)
from aniflow.spectral import SpectralField, SpectralGrid

from conftest import field_from_physical, make_grid, random_state

CRITERION_LINES: list[str] = []


def _record(num: int, name: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {name} -- {detail}"
    CRITERION_LINES.append(line)
    print(line)


def _tendency_scale(t) -> float:
    return float(
        max(
            np.max(np.abs(t.dpsi.coeffs)),
            *(np.max(np.abs(c.coeffs)) for c in t.dv),
            1e-300,
        )
    )


def _tendency_diff(a, b) -> float:
    err = np.max(np.abs(a.dpsi.coeffs - b.dpsi.coeffs))
    for x, y in zip(a.dv, b.dv):
        err = max(err, np.max(np.abs(x.coeffs - y.coeffs)))
    return float(err)


def _pair_mode_state(grid, mode, psi_amp=0.0, v_amps=(0.0, 0.0, 0.0), t=0.0):
    """State with the Hermitian pair +/-mode populated at full amplitude."""

    def place(amp):
        c = np.zeros(grid.shape, dtype=np.complex128)
        if amp != 0.0:
            i = tuple(m % n for m, n in zip(mode, grid.shape))
            j = tuple((-m) % n for m, n in zip(mode, grid.shape))
            c[i] = amp
            c[j] = np.conj(amp)
        return c

    return FlowState.from_coeffs(
        grid, place(psi_amp), [place(a) for a in v_amps], t
    )


# -- criterion 1: exact identity suite ---------------------------------------------


def test_criterion_1_exact_identity_suite():
    t0 = time.perf_counter()
    worst = 0.0
    for n, seeds in ((16, range(100)), (32, range(100, 200))):
        grid = make_grid(n)
        for seed in seeds:
            amp = 0.1 * (1 + seed % 5)
            state = harness.generate_initial(
                grid, harness.InitSpec(k_max=4, amplitude_B0=amp, seed=seed)
            )
            res = diagnostics.energy_subidentities(state)
            worst = max(worst, res.h2_balance, res.cross_balance, res.combined)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed <= 120.0
    _record(
        1,
        "exact energy sub-identities",
        ok,
        f"max residual {worst:.3e} over 200 states at 16^3/32^3 "
        f"(limit 1e-10), {elapsed:.1f}s (limit 120s)",
    )
    assert worst <= 1e-10
    assert elapsed <= 120.0


# -- criterion 2: tendency route equivalence -------------------------------------


def test_criterion_2_route_equivalence():
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(50):
        state = random_state(16, seed=seed, amplitude=0.1 * (1 + seed % 4))
        a = compute_rhs(state)
        b = compute_rhs_explicit(state)
        worst = max(worst, _tendency_diff(a, b) / _tendency_scale(a))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-11 and elapsed <= 60.0
    _record(
        2,
        "projected vs explicit-pressure tendency routes",
        ok,
        f"max relative gap {worst:.3e} over 50 states at 16^3 "
        f"(limit 1e-11), {elapsed:.1f}s (limit 60s)",
    )
    assert worst <= 1e-11
    assert elapsed <= 60.0


# -- criterion 3: linear single-mode oracle ---------------------------------------


def test_criterion_3_linear_oracle():
    grid = make_grid(8)
    eps = 1e-4

    # horizontal mode k=(1,0,0): (psi_hat, v3_hat)' = A (psi_hat, v3_hat)
    # with A = [[0,-1],[1,-1]], eigenvalues (-1 +/- i sqrt(3))/2
    state = _pair_mode_state(grid, (1, 0, 0), psi_amp=eps)
    a0 = state.psi.coeffs[1, 0, 0]
    A = np.array([[0.0, -1.0], [1.0, -1.0]])
    samples: list[tuple[float, complex, complex]] = []
    config = StepperConfig(t_end=10.0, dt=1e-3, scheme="IFRK4", sample_every=100)
    run(
        state,
        config,
        with_pressure=False,
        sinks=[
            lambda s, led: samples.append(
                (s.t, s.psi.coeffs[1, 0, 0], s.v[2].coeffs[1, 0, 0])
            )
        ],
    )
    err_osc = 0.0
    for t, a, w in samples:
        exact = scipy.linalg.expm(A * t) @ np.array([a0, 0.0])
        err_osc = max(err_osc, abs(a - exact[0]), abs(w - exact[1]))
    err_osc /= abs(a0)

    # vertical mode k=(0,0,1): psi frozen exactly, v_h decays as e^{-t}
    state2 = _pair_mode_state(
        grid, (0, 0, 1), psi_amp=0.3, v_amps=(0.2, 0.0, 0.0)
    )
    p0 = state2.psi.coeffs[0, 0, 1]
    v0 = state2.v[0].coeffs[0, 0, 1]
    samples2: list[tuple[float, complex, complex]] = []
    config2 = StepperConfig(t_end=10.0, dt=1e-2, sample_every=100)
    run(
        state2,
        config2,
        with_pressure=False,
        sinks=[
            lambda s, led: samples2.append(
                (s.t, s.psi.coeffs[0, 0, 1], s.v[0].coeffs[0, 0, 1])
            )
        ],
    )
    err_frozen = max(abs(p - p0) for _, p, _ in samples2) / abs(p0)
    err_decay = max(
        abs(v - v0 * np.exp(-t)) for t, _, v in samples2
    ) / abs(v0)

    ok = err_osc <= 1e-6 and err_frozen <= 1e-8 and err_decay <= 1e-8
    _record(
        3,
        "single-mode linear oracle",
        ok,
        f"damped-oscillation error {err_osc:.3e} (limit 1e-6); "
        f"frozen-potential error {err_frozen:.3e}, viscous-decay error "
        f"{err_decay:.3e} (limits 1e-8), t in [0, 10]",
    )
    assert err_osc <= 1e-6
    assert err_frozen <= 1e-8
    assert err_decay <= 1e-8


# -- criterion 4: scheme order --------------------------------------------------------


def test_criterion_4_scheme_order():
    grid = make_grid(32)
    initial = harness.generate_initial(
        grid, harness.InitSpec(k_max=4, amplitude_B0=0.2, seed=0)
    )

    def residual_max(dt):
        config = StepperConfig(t_end=0.5, dt=dt, sample_every=1)
        report, _ = run(initial, config, with_pressure=False)
        return report.identity_residual_max

    r_coarse = residual_max(1e-2)
    r_fine = residual_max(5e-3)
    factor = r_coarse / r_fine

    def final_state(dt):
        config = StepperConfig(t_end=0.25, dt=dt, sample_every=10**6)
        _, final = run(initial, config, with_pressure=False)
        return final

    def state_diff(a, b):
        pa, va = a.coeff_arrays()
        pb, vb = b.coeff_arrays()
        err = np.max(np.abs(pa - pb))
        for x, y in zip(va, vb):
            err = max(err, float(np.max(np.abs(x - y))))
        return float(err)

    u1, u2, u3 = final_state(1e-2), final_state(5e-3), final_state(2.5e-3)
    order = float(np.log2(state_diff(u1, u2) / state_diff(u2, u3)))

    ok = 3.5 <= factor <= 4.5 and order >= 1.9
    _record(
        4,
        "temporal order of the default scheme",
        ok,
        f"energy-residual dt-halving factor {factor:.3f} (window [3.5, 4.5]); "
        f"self-convergence order {order:.3f} (floor 1.9) at 32^3",
    )
    assert 3.5 <= factor <= 4.5
    assert order >= 1.9


# -- criterion 5: structural invariants of every sampled state -----------------------


def test_criterion_5_structure_preserved_along_runs():
    worst = {"div": 0.0, "mean": 0.0, "herm": 0.0, "diss": 0.0}
    n_states = 0

    def checker(state, ledger):
        nonlocal n_states
        n_states += 1
        worst["div"] = max(worst["div"], state.max_divergence())
        pc, vc = state.coeff_arrays()
        for c in (pc, *vc):
            worst["mean"] = max(worst["mean"], abs(c[0, 0, 0]))
            herm = np.max(np.abs(c - state.grid.hermitize(c)))
            scale = max(float(np.max(np.abs(c))), 1e-300)
            worst["herm"] = max(worst["herm"], herm / scale)
        worst["diss"] = max(worst["diss"], ledger.D_v3 - ledger.D_visc)

    for n, scheme, seed in (
        (16, "IFRK2", 0),
        (16, "IFRK4", 1),
        (32, "IFRK2", 2),
    ):
        grid = make_grid(n)
        initial = harness.generate_initial(
            grid, harness.InitSpec(k_max=4, amplitude_B0=0.3, seed=seed)
        )
        config = StepperConfig(t_end=1.0, dt=1e-2, scheme=scheme, sample_every=5)
        run(initial, config, with_pressure=False, sinks=[checker])

    ok = (
        worst["div"] <= 1e-12
        and worst["mean"] == 0.0
        and worst["herm"] <= 1e-13
        and worst["diss"] <= 0.0
    )
    _record(
        5,
        "divergence/mean/Hermitian/dissipation-ordering invariants",
        ok,
        f"over {n_states} sampled states: max divergence {worst['div']:.3e} "
        f"(limit 1e-12), max mean mode {worst['mean']:.1e} (must be 0), "
        f"max Hermitian defect {worst['herm']:.3e} (limit 1e-13), "
        f"max D_v3 - D_visc {worst['diss']:.3e} (must be <= 0)",
    )
    assert worst["div"] <= 1e-12
    assert worst["mean"] == 0.0
    assert worst["herm"] <= 1e-13
    assert worst["diss"] <= 0.0


# -- criterion 6: small-data boundedness ------------------------------------------------


def test_criterion_6_small_data_boundedness():
    t0 = time.perf_counter()

    # locate the bounded regime: geometric bisection of the blow-up threshold
    sweep = harness.SweepSpec(
        t_end=10.0, dt=2e-2, grid_n=32, k_max=4, sample_every=50
    )
    lo, hi, rows = harness.bisect_threshold(
        sweep, bracket=(1e2, 1e4), rel_width=0.5
    )
    b0_small = lo / 20.0  # comfortably inside the bounded regime

    grid = make_grid(32)
    sup_ratio = 0.0
    bt_ratio = 0.0
    verdicts_ok = True
    for seed in range(10):
        initial = harness.generate_initial(
            grid, harness.InitSpec(k_max=4, amplitude_B0=b0_small, seed=seed)
        )
        for dt, cadence in ((2e-2, 25), (1e-2, 50)):
            config = StepperConfig(t_end=50.0, dt=dt, sample_every=cadence)
            report, _ = run(initial, config, with_pressure=False)
            verdicts_ok = verdicts_ok and report.verdict == "bounded"
            sup_ratio = max(sup_ratio, report.sup_energy_ratio)
            bt_ratio = max(bt_ratio, report.bt_over_b0)
    elapsed = time.perf_counter() - t0

    ok = (
        verdicts_ok
        and sup_ratio <= 4.0
        and np.isfinite(bt_ratio)
        and elapsed <= 1800.0
    )
    _record(
        6,
        "small-data global boundedness",
        ok,
        f"threshold bracket [{lo:.3g}, {hi:.3g}], probe amplitude "
        f"{b0_small:.3g}; 10 seeds, T=50, 32^3, dt in {{2e-2, 1e-2}}: "
        f"all bounded={verdicts_ok}, max sup E/E(0) {sup_ratio:.3f} "
        f"(limit 4), max B_T/B_0 {bt_ratio:.3f}; {elapsed:.0f}s (limit 1800s)",
    )
    assert verdicts_ok
    assert sup_ratio <= 4.0
    assert np.isfinite(bt_ratio)
    assert elapsed <= 1800.0


# -- criteria 7/8: inequality and pressure witnesses across refinement -------------------


@pytest.fixture(scope="module")
def ensemble_reports():
    out = {}
    for n in (16, 32):
        grid = make_grid(n)
        reports = []
        for seed in range(20):
            initial = harness.generate_initial(
                grid, harness.InitSpec(k_max=4, amplitude_B0=0.2, seed=seed)
            )
            config = StepperConfig(t_end=5.0, dt=1e-2, sample_every=10)
            report, _ = run(initial, config, with_pressure=True)
            reports.append(report)
        out[n] = reports
    return out


def _stable(a: float, b: float) -> bool:
    if a == 0.0 and b == 0.0:
        return True
    if not (np.isfinite(a) and np.isfinite(b)) or a <= 0.0:
        return False
    return 0.8 <= b / a <= 1.2


def test_criterion_7_inequality_witnesses(ensemble_reports):
    maxima = {}
    for n, reports in ensemble_reports.items():
        interp = [max(r.interp_ratios) for r in reports]
        probe = [max(r.bound_probe_ratios) for r in reports]
        maxima[n] = {
            "interp": [
                max(r.interp_ratios[j] for r in reports) for j in range(3)
            ],
            "probe": [
                max(r.bound_probe_ratios[j] for r in reports) for j in range(3)
            ],
            "finite": all(np.isfinite(x) for x in interp + probe),
            "anomaly": any(r.interp_anomaly for r in reports),
        }
    finite = maxima[16]["finite"] and maxima[32]["finite"]
    no_anomaly = not (maxima[16]["anomaly"] or maxima[32]["anomaly"])
    stable = all(
        _stable(maxima[16][kind][j], maxima[32][kind][j])
        for kind in ("interp", "probe")
        for j in range(3)
    )
    fmt = lambda xs: "/".join(f"{x:.3g}" for x in xs)
    ok = finite and no_anomaly and stable
    _record(
        7,
        "interpolation and vertical-bound witnesses",
        ok,
        "20-seed ensemble max ratios, interp "
        f"{fmt(maxima[16]['interp'])} (16^3) vs {fmt(maxima[32]['interp'])} "
        f"(32^3), probes {fmt(maxima[16]['probe'])} vs "
        f"{fmt(maxima[32]['probe'])}; all finite={finite}, "
        f"stable within +/-20%={stable}",
    )
    assert finite
    assert no_anomaly
    assert stable


def test_criterion_8_pressure_witness(ensemble_reports):
    p16 = max(r.pressure_ratio for r in ensemble_reports[16])
    p32 = max(r.pressure_ratio for r in ensemble_reports[32])
    finite = np.isfinite(p16) and np.isfinite(p32)
    stable = _stable(p16, p32)

    # analytic case: v = 0, psi = sin(x3) gives p = -2 cos(x3) - cos(2 x3)/2
    grid = make_grid(16)
    psi = field_from_physical(grid, lambda x1, x2, x3: np.sin(x3))
    state = FlowState(
        psi, tuple(SpectralField.zeros(grid) for _ in range(3))
    )
    p = pressure_solve(state)
    expect = field_from_physical(
        grid, lambda x1, x2, x3: -2.0 * np.cos(x3) - 0.5 * np.cos(2 * x3)
    )
    analytic_err = float(np.max(np.abs(p.coeffs - expect.coeffs)))

    ok = finite and stable and analytic_err <= 1e-12
    _record(
        8,
        "pressure gradient witness",
        ok,
        f"max sup|grad p|_H1 / B_0: {p16:.4g} (16^3) vs {p32:.4g} (32^3), "
        f"finite={finite}, stable within +/-20%={stable}; analytic-profile "
        f"coefficient error {analytic_err:.3e} (limit 1e-12)",
    )
    assert finite
    assert stable
    assert analytic_err <= 1e-12
