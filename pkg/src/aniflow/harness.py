"""Initial-data generation and amplitude sweeps probing the smallness threshold.

Initial states are random band-limited fields: Hermitian, mean-free, with
the velocity made divergence-free by projection, then rescaled so that the
data functional

    B0 = |grad psi0|_{H2} + |v0|_{H2}

hits the requested target exactly.  The sweep harness runs trajectories
across a list of amplitudes (optionally refining the bounded/blow-up
boundary by bisection) and reports per-amplitude verdicts and ratios.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics, integrator, model
from .model import FlowState
from .spectral import SpectralField, SpectralGrid

__all__ = [
    "InitSpec",
    "SweepSpec",
    "SweepRow",
    "generate_initial",
    "amplitude_sweep",
    "bisect_threshold",
    "pressure_report",
]


@dataclass
class InitSpec:
    """Recipe for one initial state."""

    kind: str = "random_band"          # random_band | single_mode | checkpoint
    k_max: int = 4
    amplitude_B0: float = 0.1
    spectrum_slope: float = -2.0
    seed: int = 0
    psi_fraction: float = 0.5          # share of B0 carried by |grad psi|_{H2}
    mode: tuple[int, int, int] = (1, 0, 0)
    checkpoint_path: str | None = None

    def __post_init__(self):
        if self.kind not in ("random_band", "single_mode", "checkpoint"):
            raise ValueError(f"unknown initial-data kind {self.kind!r}")
        if self.amplitude_B0 < 0:
            raise ValueError("amplitude_B0 must be nonnegative")
        if not 0.0 <= self.psi_fraction <= 1.0:
            raise ValueError("psi_fraction must lie in [0, 1]")


def _random_band_fields(
    grid: SpectralGrid, k_max: int, slope: float, seed: int
) -> list[np.ndarray]:
    """Four random band-limited Hermitian coefficient arrays.

    The noise is drawn per integer mode of the band cube in a fixed lattice
    order, so a given (seed, k_max, slope) produces the same spectral content
    at every resolution that contains the band — initial data are directly
    comparable across refinement studies.
    """
    rng = np.random.default_rng(seed)
    idx = np.arange(-k_max, k_max + 1)
    A, B, C = np.meshgrid(idx, idx, idx, indexing="ij")
    modes = np.stack([A.ravel(), B.ravel(), C.ravel()], axis=1)
    modes = modes[np.any(modes != 0, axis=1)]
    scale = (2.0 * np.pi / grid.box_length) * np.sqrt(
        np.sum(modes.astype(float) ** 2, axis=1)
    )
    envelope = scale**slope
    raw = rng.standard_normal((4, len(modes), 2))
    i1 = modes[:, 0] % grid.n1
    i2 = modes[:, 1] % grid.n2
    i3 = modes[:, 2] % grid.n3
    fields = []
    for f in range(4):
        c = np.zeros(grid.shape, dtype=np.complex128)
        c[i1, i2, i3] = (raw[f, :, 0] + 1j * raw[f, :, 1]) * envelope
        fields.append(grid.hermitize(c))
    return fields


def _h2_norms(grid: SpectralGrid, psi_c, v_c) -> tuple[float, float]:
    m2 = grid.sobolev_multiplier(2)
    npsi = math.sqrt(
        grid.volume * float(np.sum(m2 * grid.ksq * np.abs(psi_c) ** 2))
    )
    nv = math.sqrt(
        grid.volume * sum(float(np.sum(m2 * np.abs(c) ** 2)) for c in v_c)
    )
    return npsi, nv


def generate_initial(grid: SpectralGrid, spec: InitSpec) -> FlowState:
    """Deterministic-in-seed random initial state with measured B0 on target."""
    if spec.kind == "checkpoint":
        if not spec.checkpoint_path:
            raise ValueError("checkpoint kind requires checkpoint_path")
        state, _ = integrator.read_checkpoint(spec.checkpoint_path)
        return state

    band_limit = min(grid.n1, grid.n2, grid.n3) // 3
    if spec.k_max > band_limit:
        raise ValueError(
            f"k_max={spec.k_max} exceeds the dealias band (max {band_limit})"
        )
    if spec.amplitude_B0 == 0.0:
        return FlowState.zero(grid)

    if spec.kind == "single_mode":
        psi_c = np.zeros(grid.shape, dtype=np.complex128)
        i1, i2, i3 = (m % n for m, n in zip(spec.mode, grid.shape))
        psi_c[i1, i2, i3] = 1.0
        psi_c = grid.hermitize(psi_c)
        v_c = [np.zeros(grid.shape, dtype=np.complex128) for _ in range(3)]
    else:
        fields = _random_band_fields(
            grid, spec.k_max, spec.spectrum_slope, spec.seed
        )
        psi_c, v_c = fields[0], model._leray_arrays(grid, fields[1:])
        for c in (psi_c, *v_c):
            c[0, 0, 0] = 0.0

    npsi, nv = _h2_norms(grid, psi_c, v_c)
    target_psi = spec.psi_fraction * spec.amplitude_B0
    target_v = (1.0 - spec.psi_fraction) * spec.amplitude_B0
    if npsi == 0.0 and target_psi > 0.0:
        # nothing to scale: reassign the psi share to the velocity
        target_v += target_psi
        target_psi = 0.0
    if nv == 0.0 and target_v > 0.0:
        target_psi += target_v
        target_v = 0.0
    if (npsi == 0.0 and target_psi > 0.0) or (nv == 0.0 and target_v > 0.0):
        raise ValueError("generated state is identically zero; cannot rescale")
    psi_c = psi_c * (target_psi / npsi if npsi > 0 else 0.0)
    v_c = [c * (target_v / nv if nv > 0 else 0.0) for c in v_c]

    return FlowState.from_coeffs(grid, psi_c, v_c, 0.0)


@dataclass
class SweepSpec:
    """Amplitude sweep over the data functional B0."""

    amplitudes: list[float] = field(default_factory=list)
    t_end: float = 10.0
    trials_per_amplitude: int = 1
    grid_n: int = 32
    k_max: int = 4
    seed: int = 0
    dt: float = 1e-2
    scheme: str = "IFRK2"
    sample_every: int = 10
    spectrum_slope: float = -2.0
    psi_fraction: float = 0.5
    workers: int = 1

    def __post_init__(self):
        amps = list(self.amplitudes)
        if any(a < 0 for a in amps):
            raise ValueError("amplitudes must be nonnegative")
        if any(b <= a for a, b in zip(amps, amps[1:])):
            raise ValueError("amplitudes must be strictly increasing")
        if self.trials_per_amplitude < 1:
            raise ValueError("trials_per_amplitude must be >= 1")


@dataclass
class SweepRow:
    """Aggregate over the trials at one amplitude."""

    amplitude: float
    verdict: str                 # blow_up if any trial diverged
    bt_over_b0: float            # worst (largest) trial ratio
    sup_energy_ratio: float
    max_residual: float
    blow_up_times: list[float]

    def to_dict(self) -> dict:
        return {
            "amplitude": self.amplitude,
            "verdict": self.verdict,
            "bt_over_b0": self.bt_over_b0,
            "sup_energy_ratio": self.sup_energy_ratio,
            "max_residual": self.max_residual,
            "blow_up_times": self.blow_up_times,
        }


def _trial_seed(base_seed: int, amplitude_index: int, trial: int) -> int:
    return base_seed + 7919 * amplitude_index + trial


def _run_trial(args: dict) -> dict:
    """Worker entry point; plain-dict in/out so it pickles across processes."""
    grid = SpectralGrid(args["grid_n"], args["grid_n"], args["grid_n"])
    init = InitSpec(
        k_max=args["k_max"],
        amplitude_B0=args["amplitude"],
        spectrum_slope=args["spectrum_slope"],
        seed=args["seed"],
        psi_fraction=args["psi_fraction"],
    )
    state = generate_initial(grid, init)
    config = integrator.StepperConfig(
        t_end=args["t_end"],
        dt=args["dt"],
        scheme=args["scheme"],
        sample_every=args["sample_every"],
    )
    report, _ = integrator.run(state, config)
    return {
        "verdict": report.verdict,
        "bt_over_b0": report.bt_over_b0,
        "sup_energy_ratio": report.sup_energy_ratio,
        "max_residual": report.identity_residual_max,
        "blow_up_time": report.blow_up_time,
    }


def _trial_args(spec: SweepSpec, amplitude: float, amp_index: int, trial: int) -> dict:
    return {
        "grid_n": spec.grid_n,
        "k_max": spec.k_max,
        "amplitude": amplitude,
        "spectrum_slope": spec.spectrum_slope,
        "seed": _trial_seed(spec.seed, amp_index, trial),
        "psi_fraction": spec.psi_fraction,
        "t_end": spec.t_end,
        "dt": spec.dt,
        "scheme": spec.scheme,
        "sample_every": spec.sample_every,
    }


def _aggregate(amplitude: float, results: list[dict]) -> SweepRow:
    blew = [r for r in results if r["verdict"] == "blow_up"]
    return SweepRow(
        amplitude=amplitude,
        verdict="blow_up" if blew else "bounded",
        bt_over_b0=max(r["bt_over_b0"] for r in results),
        sup_energy_ratio=max(r["sup_energy_ratio"] for r in results),
        max_residual=max(r["max_residual"] for r in results),
        blow_up_times=[r["blow_up_time"] for r in blew],
    )


def amplitude_sweep(spec: SweepSpec) -> list[SweepRow]:
    """Run every (amplitude, trial) pair; rows come back in amplitude order
    regardless of completion order."""
    jobs = [
        (ai, trial, _trial_args(spec, amp, ai, trial))
        for ai, amp in enumerate(spec.amplitudes)
        for trial in range(spec.trials_per_amplitude)
    ]
    results: dict[tuple[int, int], dict] = {}
    if spec.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            for (ai, trial, _), res in zip(
                jobs, pool.map(_run_trial, [j[2] for j in jobs])
            ):
                results[(ai, trial)] = res
    else:
        for ai, trial, args in jobs:
            results[(ai, trial)] = _run_trial(args)
    rows = []
    for ai, amp in enumerate(spec.amplitudes):
        rows.append(
            _aggregate(amp, [results[(ai, t)] for t in range(spec.trials_per_amplitude)])
        )
    return rows


def bisect_threshold(
    spec: SweepSpec,
    bracket: tuple[float, float],
    rel_width: float = 0.25,
    max_iters: int = 32,
    verdict_fn=None,
) -> tuple[float, float, list[SweepRow]]:
    """Shrink a (bounded, blow_up) amplitude bracket to the requested relative
    width by geometric bisection; returns (lo, hi, rows evaluated)."""
    lo, hi = bracket
    if not 0 < lo < hi:
        raise ValueError("bracket must satisfy 0 < lo < hi")

    def evaluate(amplitude: float) -> SweepRow:
        one = SweepSpec(**{**spec.__dict__, "amplitudes": [amplitude]})
        return amplitude_sweep(one)[0]

    if verdict_fn is None:
        verdict_fn = evaluate

    rows: list[SweepRow] = []
    row_lo = verdict_fn(lo)
    row_hi = verdict_fn(hi)
    rows += [row_lo, row_hi]
    if row_lo.verdict != "bounded" or row_hi.verdict != "blow_up":
        raise ValueError(
            f"bracket verdicts do not straddle the threshold: "
            f"{row_lo.verdict} at {lo}, {row_hi.verdict} at {hi}"
        )
    for _ in range(max_iters):
        if (hi - lo) <= rel_width * lo:
            break
        mid = math.sqrt(lo * hi)
        row = verdict_fn(mid)
        rows.append(row)
        if row.verdict == "bounded":
            lo = mid
        else:
            hi = mid
    rows.sort(key=lambda r: r.amplitude)
    return lo, hi, rows


def pressure_report(states: list[FlowState], b0: float | None = None) -> dict:
    """sup over the given states of |grad p|_{H1}, and its ratio to B0."""
    if not states:
        raise ValueError("need at least one state")
    grid = states[0].grid
    m1ksq = grid.sobolev_multiplier(1) * grid.ksq
    sup = 0.0
    for s in states:
        p = model.pressure_solve(s)
        val = math.sqrt(
            max(grid.volume * float(np.sum(m1ksq * np.abs(p.coeffs) ** 2)), 0.0)
        )
        sup = max(sup, val)
    if b0 is None:
        psi_c, v_c = states[0].coeff_arrays()
        npsi, nv = _h2_norms(grid, psi_c, v_c)
        b0 = npsi + nv
    ratio = sup / b0 if b0 > 0 else (0.0 if sup == 0.0 else math.inf)
    return {"sup_grad_p_H1": sup, "B0": b0, "ratio": ratio}
