"""Time integration with integrating-factor Runge-Kutta schemes.

The viscous term is diagonal in Fourier space and is applied exactly through
the per-mode factor exp(-|k|^2 dt); the transport and potential-coupling
terms are advanced explicitly.  The potential has no diffusive factor (its
equation is pure transport plus source), so its integrating factor is 1.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import diagnostics, model
from .model import FlowState
from .spectral import SpectralGrid

__all__ = [
    "StepperConfig",
    "BlowUpDetected",
    "step",
    "cfl_dt",
    "run",
    "write_checkpoint",
    "read_checkpoint",
    "SCHEME_TAGS",
]

SCHEME_TAGS = {"IFRK2": 0, "IFRK4": 1}
_TAG_SCHEMES = {v: k for k, v in SCHEME_TAGS.items()}

CHECKPOINT_MAGIC = b"AFLW"
CHECKPOINT_VERSION = 1


class BlowUpDetected(Exception):
    """Raised when a trajectory diverges; carries the offending time."""

    def __init__(self, t: float, reason: str = "non-finite coefficient"):
        super().__init__(f"blow-up at t={t:.6g}: {reason}")
        self.t = t
        self.reason = reason


@dataclass
class StepperConfig:
    """Time-stepping configuration.

    Exactly one of dt (fixed step) or cfl_safety (adaptive step) must be set.
    The dt cap guards the explicit treatment of the potential coupling; the
    CFL floor prevents unbounded steps near equilibrium.
    """

    t_end: float
    dt: float | None = None
    cfl_safety: float | None = None
    scheme: str = "IFRK2"
    dealias_every_stage: bool = True
    dt_cap: float = 1e-2
    cfl_floor: float = 1e-3
    blowup_energy_factor: float = 1e6
    sample_every: int = 1

    def __post_init__(self):
        if self.scheme not in SCHEME_TAGS:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if (self.dt is None) == (self.cfl_safety is None):
            raise ValueError("set exactly one of dt or cfl_safety")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.cfl_safety is not None and not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        if self.sample_every < 1:
            raise ValueError("sample_every must be >= 1")


def cfl_dt(
    state: FlowState,
    safety: float,
    cap: float = 1e-2,
    floor: float = 1e-3,
) -> float:
    """Advective step limit: safety * dx / max(|v|_inf, floor), capped."""
    g = state.grid
    speed_sq = sum(g.to_physical(f.coeffs) ** 2 for f in state.v)
    vmax = float(np.sqrt(speed_sq.max()))
    dx = g.box_length / max(g.n1, g.n2, g.n3)
    return min(cap, safety * dx / max(vmax, floor))


def _enforce_half(grid: SpectralGrid, psi_h, v_h):
    """Re-impose Hermitian symmetry, zero means, dealiasing and projection.

    A no-op to round-off when the tendency routes are exact; guards against
    accumulated floating-point drift on long runs.
    """
    mask = grid.dealias_mask_half
    K = grid.k_half
    psi_h = grid.hermitize_half(psi_h)
    psi_h *= mask
    psi_h[0, 0, 0] = 0.0
    v_h = [grid.hermitize_half(c) for c in v_h]
    parallel = (K[0] * v_h[0] + K[1] * v_h[1] + K[2] * v_h[2]) * grid.inv_ksq_half
    v_h = [v_h[i] - K[i] * parallel for i in range(3)]
    for c in v_h:
        c *= mask
        c[0, 0, 0] = 0.0
    return psi_h, v_h


def _mask_stage(grid: SpectralGrid, psi_h, v_h):
    mask = grid.dealias_mask_half
    psi_h *= mask
    for c in v_h:
        c *= mask
    return psi_h, v_h


class _ExpCache:
    """Per-run cache of the integrating-factor arrays exp(-|k|^2 dt)."""

    def __init__(self, grid: SpectralGrid):
        self.grid = grid
        self._store: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    def factors(self, dt: float) -> tuple[np.ndarray, np.ndarray]:
        got = self._store.get(dt)
        if got is None:
            e_half = np.exp(-self.grid.ksq_half * (0.5 * dt))
            got = (e_half, e_half * e_half)
            if len(self._store) > 8:
                self._store.clear()
            self._store[dt] = got
        return got


def _step_half(grid, psi0, v0, t, dt, config, cache: _ExpCache):
    """One integrating-factor RK step on half-spectrum arrays."""
    e_half, e_full = cache.factors(dt)

    if config.scheme == "IFRK2":
        k1p, k1v = model._tendency_half(grid, psi0, v0, include_viscous=False)
        p1 = psi0 + dt * k1p
        u1 = [e_full * (v0[i] + dt * k1v[i]) for i in range(3)]
        if config.dealias_every_stage:
            p1, u1 = _mask_stage(grid, p1, u1)
        k2p, k2v = model._tendency_half(grid, p1, u1, include_viscous=False)
        psi_n = psi0 + 0.5 * dt * (k1p + k2p)
        v_n = [
            e_full * v0[i] + 0.5 * dt * (e_full * k1v[i] + k2v[i]) for i in range(3)
        ]
    else:  # IFRK4
        ap, av = model._tendency_half(grid, psi0, v0, include_viscous=False)
        pa = psi0 + 0.5 * dt * ap
        ua = [e_half * (v0[i] + 0.5 * dt * av[i]) for i in range(3)]
        if config.dealias_every_stage:
            pa, ua = _mask_stage(grid, pa, ua)
        bp, bv = model._tendency_half(grid, pa, ua, include_viscous=False)
        pb = psi0 + 0.5 * dt * bp
        ub = [e_half * v0[i] + 0.5 * dt * bv[i] for i in range(3)]
        if config.dealias_every_stage:
            pb, ub = _mask_stage(grid, pb, ub)
        cp, cv = model._tendency_half(grid, pb, ub, include_viscous=False)
        pc = psi0 + dt * cp
        uc = [e_full * v0[i] + dt * e_half * cv[i] for i in range(3)]
        if config.dealias_every_stage:
            pc, uc = _mask_stage(grid, pc, uc)
        dp, dv_ = model._tendency_half(grid, pc, uc, include_viscous=False)
        psi_n = psi0 + (dt / 6.0) * (ap + 2.0 * bp + 2.0 * cp + dp)
        v_n = [
            e_full * v0[i]
            + (dt / 6.0)
            * (e_full * av[i] + 2.0 * e_half * (bv[i] + cv[i]) + dv_[i])
            for i in range(3)
        ]

    psi_n, v_n = _enforce_half(grid, psi_n, v_n)
    if not (
        np.isfinite(np.abs(psi_n).max())
        and all(np.isfinite(np.abs(c).max()) for c in v_n)
    ):
        raise BlowUpDetected(t + dt)
    return psi_n, v_n


def _half_arrays(state: FlowState):
    g = state.grid
    psi_c, v_c = state.coeff_arrays()
    return g.half_from_full(psi_c), [g.half_from_full(c) for c in v_c]


def _state_from_half(grid: SpectralGrid, psi_h, v_h, t: float) -> FlowState:
    return FlowState.from_coeffs(
        grid, grid.full_from_half(psi_h), [grid.full_from_half(c) for c in v_h], t
    )


def step(state: FlowState, dt: float, config: StepperConfig) -> FlowState:
    """Advance one step; raises BlowUpDetected on non-finite coefficients."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    g = state.grid
    psi_h, v_h = _half_arrays(state)
    psi_h, v_h = _step_half(g, psi_h, v_h, state.t, dt, config, _ExpCache(g))
    return _state_from_half(g, psi_h, v_h, state.t + dt)


def _h2_energy_half(grid: SpectralGrid, psi_h, v_h) -> float:
    """Cheap instantaneous |v|_{H2}^2 + |grad psi|_{H2}^2 for blow-up checks."""
    key = "_h2_weight_half"
    w = grid.__dict__.get(key)
    if w is None:
        m2 = grid.sobolev_multiplier(2)[:, :, : grid.n3 // 2 + 1]
        w = 2.0 * m2
        w[:, :, 0] *= 0.5
        w[:, :, -1] *= 0.5
        grid.__dict__[key] = w
    total = float(np.sum(w * grid.ksq_half * (psi_h.real**2 + psi_h.imag**2)))
    total += sum(float(np.sum(w * (c.real**2 + c.imag**2))) for c in v_h)
    return grid.volume * total


SampleSink = Callable[[FlowState, diagnostics.EnergyLedger], None]


def run(
    initial: FlowState,
    config: StepperConfig,
    sinks: Sequence[SampleSink] = (),
    with_pressure: bool = True,
) -> tuple[diagnostics.RunReport, FlowState]:
    """Advance to t_end or blow-up, emitting ledger samples at the configured
    cadence; returns the trajectory report and the final state."""
    g = initial.grid
    psi_h, v_h = _half_arrays(initial)
    psi_h, v_h = _enforce_half(g, psi_h, v_h)
    t = initial.t

    recorder = diagnostics.TrajectoryRecorder(with_pressure=with_pressure)

    def sample(t_now: float) -> FlowState:
        s = _state_from_half(g, psi_h, v_h, t_now)
        led = recorder.on_sample(s)
        for sink in sinks:
            sink(s, led)
        return s

    state = sample(t)
    e_ref = _h2_energy_half(g, psi_h, v_h)
    verdict, blow_t = "bounded", None
    cache = _ExpCache(g)

    n_steps = 0
    t_end = config.t_end
    while t < t_end - 1e-12:
        if config.dt is not None:
            dt = config.dt
        else:
            speed_sq = sum(g.to_physical_half(c) ** 2 for c in v_h)
            vmax = float(np.sqrt(speed_sq.max()))
            dx = g.box_length / max(g.n1, g.n2, g.n3)
            dt = min(config.dt_cap, config.cfl_safety * dx / max(vmax, config.cfl_floor))
        dt = min(dt, t_end - t)
        try:
            psi_h, v_h = _step_half(g, psi_h, v_h, t, dt, config, cache)
        except BlowUpDetected as sig:
            verdict, blow_t = "blow_up", sig.t
            break
        t += dt
        n_steps += 1
        if (
            e_ref > 0.0
            and _h2_energy_half(g, psi_h, v_h) > config.blowup_energy_factor * e_ref
        ):
            verdict, blow_t = "blow_up", t
            break
        if n_steps % config.sample_every == 0 or t >= t_end - 1e-12:
            state = sample(t)

    if state.t < t:
        state = _state_from_half(g, psi_h, v_h, t)
    report = recorder.finalize(verdict=verdict, blow_up_time=blow_t)
    return report, state


# -- checkpoint format -------------------------------------------------------
#
# header: magic "AFLW", u32 version, u32 n1 n2 n3, f64 box_length, f64 t,
#         u8 scheme tag; then four blocks (psi, v1, v2, v3) of contiguous
#         little-endian f64 (real, imag) pairs in axis-major lattice order.

_HEADER = struct.Struct("<4sIIIIddB")


def write_checkpoint(path, state: FlowState, scheme: str = "IFRK2") -> None:
    g = state.grid
    if scheme not in SCHEME_TAGS:
        raise ValueError(f"unknown scheme {scheme!r}")
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                CHECKPOINT_MAGIC,
                CHECKPOINT_VERSION,
                g.n1,
                g.n2,
                g.n3,
                g.box_length,
                state.t,
                SCHEME_TAGS[scheme],
            )
        )
        psi_c, v_c = state.coeff_arrays()
        for c in (psi_c, *v_c):
            fh.write(np.ascontiguousarray(c, dtype="<c16").tobytes())


def read_checkpoint(path) -> tuple[FlowState, str]:
    """Reconstruct the FlowState bit-exactly; returns (state, scheme name)."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        magic, version, n1, n2, n3, box_length, t, tag = _HEADER.unpack(header)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError("not a checkpoint file (bad magic)")
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        if tag not in _TAG_SCHEMES:
            raise ValueError(f"unknown scheme tag {tag}")
        grid = SpectralGrid(n1, n2, n3, box_length)
        count = grid.size
        blocks = []
        for _ in range(4):
            buf = fh.read(count * 16)
            if len(buf) != count * 16:
                raise ValueError("truncated checkpoint file")
            blocks.append(
                np.frombuffer(buf, dtype="<c16").reshape(grid.shape).astype(np.complex128)
            )
    state = FlowState.from_coeffs(grid, blocks[0], blocks[1:], t)
    return state, _TAG_SCHEMES[tag]
