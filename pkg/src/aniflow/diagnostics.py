"""Energy, dissipation and inequality diagnostics along trajectories.

The centerpiece is an exact semi-discrete energy balance: the modified energy

    E = 1/2 (|v|_{H2}^2 + |grad psi|_{H2}^2 + 1/4 |Lap psi|_{H1}^2)
        + 1/4 (v3 | Lap psi)_{H1}

satisfies, for the discrete tendencies produced by the model,

    dE/dt + |grad v|_{H2}^2 - 1/4 |grad v3|_{H1}^2 + 1/4 |grad grad_h psi|_{H1}^2
        = sum of seven quadratic inner products.

The balance splits into an H2 part and a cross/curvature part; both are
algebraic identities of the semi-discrete system and are verified to
round-off by substituting the model tendency (no time differencing).  A
separate finite-difference check of the same balance along recorded samples
validates the time integrator instead.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import model
from .model import FlowState
from .spectral import SpectralGrid

__all__ = [
    "EnergyLedger",
    "RunReport",
    "SubidentityResiduals",
    "modified_energy",
    "make_ledger",
    "energy_subidentities",
    "energy_identity_residual",
    "residual_series",
    "bt_functional",
    "interpolation_ratios",
    "bound_probe",
    "TrajectoryRecorder",
    "write_timeseries_csv",
    "write_run_summary_json",
    "CSV_COLUMNS",
]

_TINY = 1e-30


def _inner(grid: SpectralGrid, a: np.ndarray, b: np.ndarray, mult: np.ndarray) -> float:
    """Weighted spectral inner product: vol * sum mult * Re(a conj(b))."""
    return grid.volume * float(np.sum(mult * np.real(a * np.conj(b))))


@dataclass
class EnergyLedger:
    """Per-sample record of every norm and inner product in the energy balance.

    rhs_terms carries the seven right-hand-side terms with their signs and
    1/4 weights included, so that sum(rhs_terms) is the full right-hand side.
    """

    t: float
    E_mod: float
    D_visc: float          # |grad v|_{H2}^2
    D_v3: float            # |grad v3|_{H1}^2
    D_psi_h: float         # |grad grad_h psi|_{H1}^2
    rhs_terms: tuple[float, ...]
    cross_term: float      # (v3 | Lap psi)_{H1}
    v_H2_sq: float
    grad_psi_H2_sq: float
    lap_psi_H1_sq: float
    linf_grad_psi: float
    l4_grad_psi: float     # |grad psi|_{L4}^4
    l4_hess_psi: float     # |grad^2 psi|_{L4}^4
    # additional accumulators needed by trajectory functionals
    grad_psi_H1_sq: float = 0.0
    gradh_grad_psi_l2_sq: float = 0.0   # |grad_h grad psi|_{L2}^2
    vert_grad_psi_H1_sq: float = 0.0    # |d3 grad psi|_{H1}^2
    probe_1: float = 0.0   # int d3 psi d3^3 psi d3^3 v3 dx
    probe_2: float = 0.0   # int d3 v3 (d3^3 psi)^2 dx
    probe_3: float = 0.0   # int d3 psi d3 v3 (d3^3 psi)^2 dx
    grad_p_H1: float = 0.0


def modified_energy(state: FlowState) -> float:
    """The weighted energy functional whose exact balance is verified."""
    g = state.grid
    psi_c, v_c = state.coeff_arrays()
    m1 = g.sobolev_multiplier(1)
    m2 = g.sobolev_multiplier(2)
    v_h2 = sum(_inner(g, c, c, m2) for c in v_c)
    grad_psi_h2 = _inner(g, psi_c, psi_c, m2 * g.ksq)
    lap_psi_h1 = _inner(g, psi_c, psi_c, m1 * g.ksq * g.ksq)
    cross = _inner(g, v_c[2], -g.ksq * psi_c, m1)
    return 0.5 * (v_h2 + grad_psi_h2 + 0.25 * lap_psi_h1) + 0.25 * cross


def _rhs_terms(
    grid: SpectralGrid,
    psi_c: np.ndarray,
    v_c: list[np.ndarray],
    terms: model.RHSTerms,
) -> tuple[float, ...]:
    m1 = grid.sobolev_multiplier(1)
    m2 = grid.sobolev_multiplier(2)
    lap_psi = -grid.ksq * psi_c
    r1 = -sum(_inner(grid, terms.conv_v[i], v_c[i], m2) for i in range(3))
    r2 = _inner(grid, terms.conv_psi, lap_psi, m2)
    r3 = -sum(_inner(grid, terms.stress_div[i], v_c[i], m2) for i in range(3))
    r4 = -0.25 * _inner(grid, terms.conv_v[2], lap_psi, m1)
    r5 = 0.25 * _inner(grid, terms.f_v, lap_psi, m1)
    r6 = 0.25 * _inner(grid, terms.conv_psi, v_c[2], m1 * grid.ksq)
    r7 = -0.25 * _inner(grid, terms.conv_psi, psi_c, m1 * grid.ksq * grid.ksq)
    return (r1, r2, r3, r4, r5, r6, r7)


def make_ledger(
    state: FlowState,
    terms: model.RHSTerms | None = None,
    with_pressure: bool = True,
) -> EnergyLedger:
    """Evaluate every ledger quantity at one state."""
    g = state.grid
    psi_c, v_c = state.coeff_arrays()
    m1 = g.sobolev_multiplier(1)
    m2 = g.sobolev_multiplier(2)
    K1, K2, K3 = g.k
    ksq = g.ksq

    if terms is None:
        terms = model.nonlinear_terms(state)

    v_h2 = sum(_inner(g, c, c, m2) for c in v_c)
    grad_psi_h2 = _inner(g, psi_c, psi_c, m2 * ksq)
    grad_psi_h1 = _inner(g, psi_c, psi_c, m1 * ksq)
    lap_psi_h1 = _inner(g, psi_c, psi_c, m1 * ksq * ksq)
    cross = _inner(g, v_c[2], -ksq * psi_c, m1)
    e_mod = 0.5 * (v_h2 + grad_psi_h2 + 0.25 * lap_psi_h1) + 0.25 * cross

    d_visc = sum(_inner(g, c, c, m2 * ksq) for c in v_c)
    d_v3 = _inner(g, v_c[2], v_c[2], m1 * ksq)
    d_psi_h = _inner(g, psi_c, psi_c, m1 * g.khsq * ksq)
    gradh_grad_l2 = _inner(g, psi_c, psi_c, g.khsq * ksq)
    vert_grad_h1 = _inner(g, psi_c, psi_c, m1 * K3 * K3 * ksq)

    # physical-space gradient / Hessian magnitudes for the Lebesgue norms
    gpsi = [g.to_physical(1j * g.k[j] * psi_c) for j in range(3)]
    grad_mag_sq = gpsi[0] ** 2 + gpsi[1] ** 2 + gpsi[2] ** 2
    dv_cell = g.volume / g.size
    linf_grad = float(np.sqrt(grad_mag_sq.max()))
    l4_grad = float(np.sum(grad_mag_sq ** 2) * dv_cell)

    hess_mag_sq = np.zeros(g.shape)
    for i in range(3):
        for j in range(i, 3):
            h = g.to_physical(-g.k[i] * g.k[j] * psi_c)
            hess_mag_sq += (1.0 if i == j else 2.0) * h ** 2
    l4_hess = float(np.sum(hess_mag_sq ** 2) * dv_cell)

    # vertical-derivative probe integrands
    d3psi = g.to_physical(1j * K3 * psi_c)
    d3cube_psi = g.to_physical((1j * K3) ** 3 * psi_c)
    d3v3 = g.to_physical(1j * K3 * v_c[2])
    d3cube_v3 = g.to_physical((1j * K3) ** 3 * v_c[2])
    probe_1 = float(np.sum(d3psi * d3cube_psi * d3cube_v3) * dv_cell)
    probe_2 = float(np.sum(d3v3 * d3cube_psi ** 2) * dv_cell)
    probe_3 = float(np.sum(d3psi * d3v3 * d3cube_psi ** 2) * dv_cell)

    grad_p_h1 = 0.0
    if with_pressure:
        p = -2.0 * 1j * K3 * psi_c + terms.q_nonlocal
        p[0, 0, 0] = 0.0
        grad_p_h1 = math.sqrt(max(_inner(g, p, p, m1 * ksq), 0.0))

    return EnergyLedger(
        t=state.t,
        E_mod=e_mod,
        D_visc=d_visc,
        D_v3=d_v3,
        D_psi_h=d_psi_h,
        rhs_terms=_rhs_terms(g, psi_c, v_c, terms),
        cross_term=cross,
        v_H2_sq=v_h2,
        grad_psi_H2_sq=grad_psi_h2,
        lap_psi_H1_sq=lap_psi_h1,
        linf_grad_psi=linf_grad,
        l4_grad_psi=l4_grad,
        l4_hess_psi=l4_hess,
        grad_psi_H1_sq=grad_psi_h1,
        gradh_grad_psi_l2_sq=gradh_grad_l2,
        vert_grad_psi_H1_sq=vert_grad_h1,
        probe_1=probe_1,
        probe_2=probe_2,
        probe_3=probe_3,
        grad_p_H1=grad_p_h1,
    )


class SubidentityResiduals(NamedTuple):
    """Normalized residuals of the two sub-balances and their weighted sum."""

    h2_balance: float
    cross_balance: float
    combined: float


def energy_subidentities(state: FlowState) -> SubidentityResiduals:
    """Instantaneous algebraic check of the energy balance.

    All time derivatives are evaluated by substituting the model tendency,
    so for exact tendencies both residuals vanish to round-off.
    """
    g = state.grid
    psi_c, v_c = state.coeff_arrays()
    m1 = g.sobolev_multiplier(1)
    m2 = g.sobolev_multiplier(2)
    ksq = g.ksq
    lap_psi = -ksq * psi_c

    terms = model.nonlinear_terms(state)
    dpsi_c, dv_c, _ = model._tendency_arrays(state, include_viscous=True, terms=terms)

    d_visc = sum(_inner(g, c, c, m2 * ksq) for c in v_c)
    d_v3 = _inner(g, v_c[2], v_c[2], m1 * ksq)
    d_psi_h = _inner(g, psi_c, psi_c, m1 * g.khsq * ksq)

    r1, r2, r3, r4, r5, r6, r7 = _rhs_terms(g, psi_c, v_c, terms)

    # H2 balance: d/dt (1/2)(|v|_{H2}^2 + |grad psi|_{H2}^2) + |grad v|_{H2}^2
    de_kin = sum(_inner(g, v_c[i], dv_c[i], m2) for i in range(3))
    de_grad = _inner(g, psi_c, dpsi_c, m2 * ksq)
    lhs_h2 = de_kin + de_grad + d_visc
    rhs_h2 = r1 + r2 + r3
    scale_h2 = max(
        abs(de_kin), abs(de_grad), d_visc, abs(r1), abs(r2), abs(r3), _TINY
    )
    res_h2 = abs(lhs_h2 - rhs_h2) / scale_h2

    # cross/curvature balance: d/dt {(1/2)|Lap psi|_{H1}^2 + (v3|Lap psi)_{H1}}
    #   + |grad grad_h psi|_{H1}^2 - |grad v3|_{H1}^2
    de_curv = _inner(g, psi_c, dpsi_c, m1 * ksq * ksq)
    de_cross = _inner(g, dv_c[2], lap_psi, m1) + _inner(g, v_c[2], -ksq * dpsi_c, m1)
    lhs_cr = de_curv + de_cross + d_psi_h - d_v3
    rhs_cr = 4.0 * (r4 + r5 + r6 + r7)
    scale_cr = max(
        abs(de_curv), abs(de_cross), d_psi_h, d_v3,
        4 * abs(r4), 4 * abs(r5), 4 * abs(r6), 4 * abs(r7), _TINY,
    )
    res_cr = abs(lhs_cr - rhs_cr) / scale_cr

    # weighted sum is the full balance
    de_total = de_kin + de_grad + 0.25 * (de_curv + de_cross)
    lhs_full = de_total + d_visc - 0.25 * d_v3 + 0.25 * d_psi_h
    rhs_full = r1 + r2 + r3 + r4 + r5 + r6 + r7
    scale_full = max(
        abs(de_total), d_visc, 0.25 * d_v3, 0.25 * d_psi_h,
        *(abs(r) for r in (r1, r2, r3, r4, r5, r6, r7)), _TINY,
    )
    res_full = abs(lhs_full - rhs_full) / scale_full

    return SubidentityResiduals(res_h2, res_cr, res_full)


def _window_residual(lo: EnergyLedger, mid: EnergyLedger, hi: EnergyLedger) -> float:
    h1 = mid.t - lo.t
    h2 = hi.t - mid.t
    if h1 <= 0 or h2 <= 0 or abs(h1 - h2) > 1e-9 * max(h1, h2):
        raise ValueError("ledger window is not uniformly spaced")
    dedt = (hi.E_mod - lo.E_mod) / (h1 + h2)
    dissip = mid.D_visc - 0.25 * mid.D_v3 + 0.25 * mid.D_psi_h
    rhs = sum(mid.rhs_terms)
    scale = max(
        abs(dedt), mid.D_visc, 0.25 * mid.D_v3, 0.25 * mid.D_psi_h,
        *(abs(r) for r in mid.rhs_terms), _TINY,
    )
    return abs(dedt + dissip - rhs) / scale


def energy_identity_residual(window: Sequence[EnergyLedger]) -> float:
    """Centered-difference check of the energy balance at the window center.

    Requires at least three uniformly spaced records; validates the time
    integrator (the residual scales with the sampling/step size squared).
    """
    if len(window) < 3:
        raise ValueError("need at least three ledger records")
    mid = len(window) // 2
    return _window_residual(window[mid - 1], window[mid], window[mid + 1])


def residual_series(ledgers: Sequence[EnergyLedger]) -> np.ndarray:
    """Per-sample finite-difference residuals; NaN at endpoints and across
    non-uniform spacing."""
    out = np.full(len(ledgers), np.nan)
    for i in range(1, len(ledgers) - 1):
        try:
            out[i] = _window_residual(ledgers[i - 1], ledgers[i], ledgers[i + 1])
        except ValueError:
            pass
    return out


def _trapz(values, t):
    return float(np.trapezoid(np.asarray(values), np.asarray(t)))


def bt_functional(ledgers: Sequence[EnergyLedger]) -> float:
    """Solution-size functional: running sup of the instantaneous H2 norms
    plus time-integrated dissipation, as a single square root."""
    if not ledgers:
        raise ValueError("empty ledger series")
    t = [led.t for led in ledgers]
    sup_part = max(led.v_H2_sq + led.grad_psi_H2_sq for led in ledgers)
    int_part = _trapz([led.D_visc for led in ledgers], t) + _trapz(
        [led.D_psi_h for led in ledgers], t
    )
    return math.sqrt(max(sup_part + int_part, 0.0))


class InterpolationRatios(NamedTuple):
    grad_l4: float
    hess_l4: float
    grad_linf: float
    anomaly: bool


def _ratio(num: float, den: float) -> tuple[float, bool]:
    if den > 0.0:
        return num / den, False
    if num == 0.0:
        return 0.0, False
    return math.inf, True


def interpolation_ratios(ledgers: Sequence[EnergyLedger]) -> InterpolationRatios:
    """LHS/RHS quotients of the three space-time interpolation inequalities
    (the right-hand sides carry no constant)."""
    if not ledgers:
        raise ValueError("empty ledger series")
    t = [led.t for led in ledgers]
    lhs_grad = _trapz([led.l4_grad_psi for led in ledgers], t) ** 0.25
    lhs_hess = _trapz([led.l4_hess_psi for led in ledgers], t) ** 0.25
    lhs_linf = _trapz([led.linf_grad_psi ** 4 for led in ledgers], t) ** 0.25

    den_1 = (
        _trapz([led.gradh_grad_psi_l2_sq for led in ledgers], t) ** 0.25
        * max(led.grad_psi_H1_sq for led in ledgers) ** 0.25
    )
    den_23 = (
        _trapz([led.D_psi_h for led in ledgers], t) ** 0.25
        * max(led.grad_psi_H2_sq for led in ledgers) ** 0.25
    )
    r1, a1 = _ratio(lhs_grad, den_1)
    r2, a2 = _ratio(lhs_hess, den_23)
    r3, a3 = _ratio(lhs_linf, den_23)
    return InterpolationRatios(r1, r2, r3, a1 or a2 or a3)


class BoundProbeReport(NamedTuple):
    mixed_third: float      # |int int d3psi d3^3psi d3^3v3|
    transport_third: float  # |int int d3v3 (d3^3psi)^2|
    weighted_third: float   # |int int d3psi d3v3 (d3^3psi)^2|


def bound_probe(ledgers: Sequence[EnergyLedger], b_t: float | None = None) -> BoundProbeReport:
    """Empirical LHS/RHS ratios for the vertical-derivative trilinear bounds.

    Finite ratios witness that the bounds hold with some constant on the
    torus; no specific constant is asserted.
    """
    if not ledgers:
        raise ValueError("empty ledger series")
    t = [led.t for led in ledgers]
    if b_t is None:
        b_t = bt_functional(ledgers)
    lhs1 = abs(_trapz([led.probe_1 for led in ledgers], t))
    lhs2 = abs(_trapz([led.probe_2 for led in ledgers], t))
    lhs3 = abs(_trapz([led.probe_3 for led in ledgers], t))

    sup_grad = max(led.grad_psi_H2_sq for led in ledgers) ** 0.5
    int_horiz = _trapz([led.D_psi_h for led in ledgers], t) ** 0.5
    int_visc = _trapz([led.D_visc for led in ledgers], t) ** 0.5
    rhs1 = sup_grad * int_horiz * int_visc * (1.0 + sup_grad)
    rhs2 = b_t ** 3 * (1.0 + b_t ** 2)
    rhs3 = b_t ** 4 * (1.0 + b_t)
    return BoundProbeReport(
        _ratio(lhs1, rhs1)[0], _ratio(lhs2, rhs2)[0], _ratio(lhs3, rhs3)[0]
    )


@dataclass
class RunReport:
    """Trajectory-level aggregates and the boundedness verdict."""

    B0: float
    B_T: float
    sup_energy_ratio: float
    identity_residual_max: float
    identity_residual_rms: float
    interp_ratios: tuple[float, float, float]
    interp_anomaly: bool
    bound_probe_ratios: tuple[float, float, float]
    sup_grad_p_H1: float
    pressure_ratio: float
    horiz_dissipation_integral: float
    vert_dissipation_integral: float
    verdict: str                      # "bounded" | "blow_up"
    blow_up_time: float | None
    t_final: float
    n_samples: int

    @property
    def bt_over_b0(self) -> float:
        return _ratio(self.B_T, self.B0)[0]

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["bt_over_b0"] = self.bt_over_b0
        d["interp_ratios"] = list(self.interp_ratios)
        d["bound_probe_ratios"] = list(self.bound_probe_ratios)
        return d


class TrajectoryRecorder:
    """Append-only ledger sink that aggregates a RunReport at the end."""

    def __init__(self, with_pressure: bool = True):
        self.ledgers: list[EnergyLedger] = []
        self.with_pressure = with_pressure

    def on_sample(self, state: FlowState, terms: model.RHSTerms | None = None) -> EnergyLedger:
        led = make_ledger(state, terms=terms, with_pressure=self.with_pressure)
        self.ledgers.append(led)
        return led

    def finalize(
        self, verdict: str = "bounded", blow_up_time: float | None = None
    ) -> RunReport:
        leds = self.ledgers
        if not leds:
            raise ValueError("no samples recorded")
        t = [led.t for led in leds]
        first = leds[0]
        b0 = math.sqrt(max(first.grad_psi_H2_sq, 0.0)) + math.sqrt(max(first.v_H2_sq, 0.0))
        b_t = bt_functional(leds)
        e0 = first.E_mod
        sup_e = max(led.E_mod for led in leds)
        if e0 > 0.0:
            sup_ratio = sup_e / e0
        else:
            sup_ratio = 1.0 if sup_e == 0.0 else math.inf
        res = residual_series(leds)
        finite = res[np.isfinite(res)]
        res_max = float(finite.max()) if finite.size else 0.0
        res_rms = float(np.sqrt(np.mean(finite ** 2))) if finite.size else 0.0
        interp = interpolation_ratios(leds)
        probes = bound_probe(leds, b_t)
        sup_gp = max(led.grad_p_H1 for led in leds)
        return RunReport(
            B0=b0,
            B_T=b_t,
            sup_energy_ratio=sup_ratio,
            identity_residual_max=res_max,
            identity_residual_rms=res_rms,
            interp_ratios=(interp.grad_l4, interp.hess_l4, interp.grad_linf),
            interp_anomaly=interp.anomaly,
            bound_probe_ratios=tuple(probes),
            sup_grad_p_H1=sup_gp,
            pressure_ratio=_ratio(sup_gp, b0)[0],
            horiz_dissipation_integral=_trapz([led.D_psi_h for led in leds], t),
            vert_dissipation_integral=_trapz(
                [led.vert_grad_psi_H1_sq for led in leds], t
            ),
            verdict=verdict,
            blow_up_time=blow_up_time,
            t_final=leds[-1].t,
            n_samples=len(leds),
        )


CSV_COLUMNS = (
    ["t", "E_mod", "D_visc", "D_v3", "D_psi_h"]
    + [f"rhs_{i}" for i in range(1, 8)]
    + ["cross_term", "v_H2_sq", "grad_psi_H2_sq", "lap_psi_H1_sq", "linf_grad_psi", "residual"]
)


def write_timeseries_csv(path, ledgers: Sequence[EnergyLedger]) -> None:
    res = residual_series(ledgers)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for led, r in zip(ledgers, res):
            writer.writerow(
                [led.t, led.E_mod, led.D_visc, led.D_v3, led.D_psi_h]
                + list(led.rhs_terms)
                + [
                    led.cross_term,
                    led.v_H2_sq,
                    led.grad_psi_H2_sq,
                    led.lap_psi_H1_sq,
                    led.linf_grad_psi,
                    r,
                ]
            )


def write_run_summary_json(path, report: RunReport) -> None:
    def default(o):
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        raise TypeError(f"not JSON serializable: {type(o)}")

    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, default=default)
        fh.write("\n")
