"""Right-hand side assembly for the perturbation system about the sheared equilibrium.

The unknowns are a scalar potential perturbation psi and a divergence-free
velocity v = (v1, v2, v3).  The evolution is

    d/dt psi = -(v . grad psi) - v3
    d/dt v   = Lap v - P[ v . grad v + (grad_h d3 psi, (Lap + d3^2) psi)
                          + div(grad psi (x) grad psi) ]

with P the Leray projection.  An equivalent formulation eliminates the
pressure explicitly through nonlocal (-Lap)^{-1} terms; both routes are
implemented and must agree to round-off, which is the module's own
cross-check.

All quadratic products are formed pointwise in physical space and truncated
with the 2/3 rule, so they are exact convolutions on the retained modes; the
vector-calculus identities used below (divergence form of advection,
double-divergence form of the quadratic pressure source) then hold exactly
for the discrete system because the velocity is exactly divergence-free
modewise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spectral import SpectralField, SpectralGrid

__all__ = [
    "FlowState",
    "Tendency",
    "RHSTerms",
    "leray_project",
    "nonlinear_terms",
    "compute_rhs",
    "compute_rhs_explicit",
    "pressure_solve",
]


@dataclass
class FlowState:
    """Perturbation unknowns (psi, v1, v2, v3) at one instant."""

    psi: SpectralField
    v: tuple[SpectralField, SpectralField, SpectralField]
    t: float = 0.0

    @property
    def grid(self) -> SpectralGrid:
        return self.psi.grid

    @classmethod
    def zero(cls, grid: SpectralGrid, t: float = 0.0) -> "FlowState":
        return cls(
            SpectralField.zeros(grid),
            tuple(SpectralField.zeros(grid) for _ in range(3)),
            t,
        )

    @classmethod
    def from_coeffs(cls, grid, psi_c, v_c, t: float = 0.0) -> "FlowState":
        return cls(
            SpectralField(grid, psi_c),
            tuple(SpectralField(grid, c) for c in v_c),
            t,
        )

    def coeff_arrays(self) -> tuple[np.ndarray, list[np.ndarray]]:
        return self.psi.coeffs, [f.coeffs for f in self.v]

    def copy(self) -> "FlowState":
        return FlowState(self.psi.copy(), tuple(f.copy() for f in self.v), self.t)

    def max_divergence(self) -> float:
        """Max over modes of |k . v_hat| / |v_hat|, zero where the mode is empty."""
        g = self.grid
        K1, K2, K3 = g.k
        div = K1 * self.v[0].coeffs + K2 * self.v[1].coeffs + K3 * self.v[2].coeffs
        mag = np.sqrt(sum(np.abs(f.coeffs) ** 2 for f in self.v))
        return float(np.max(np.abs(div) / np.maximum(mag, 1e-300)))

    def validate(self, div_tol: float = 1e-12, herm_tol: float = 1e-13) -> None:
        """Raise ValueError if any state invariant is violated."""
        g = self.grid
        fields = [self.psi, *self.v]
        for f in fields:
            if f.grid is not g and f.grid != g:
                raise ValueError("state components live on different grids")
            if f.coeffs[0, 0, 0] != 0.0:
                raise ValueError("state components must be mean-free")
            if not f.is_hermitian(herm_tol):
                raise ValueError("state component is not Hermitian-symmetric")
        if self.max_divergence() > div_tol:
            raise ValueError("velocity is not divergence-free modewise")


@dataclass
class Tendency:
    """Time derivatives (dpsi, dv1, dv2, dv3) of a FlowState."""

    dpsi: SpectralField
    dv: tuple[SpectralField, SpectralField, SpectralField]


def _leray_arrays(grid: SpectralGrid, w: list[np.ndarray]) -> list[np.ndarray]:
    K = grid.k
    parallel = (K[0] * w[0] + K[1] * w[1] + K[2] * w[2]) * grid.inv_ksq
    return [w[i] - K[i] * parallel for i in range(3)]


def leray_project(
    w: tuple[SpectralField, SpectralField, SpectralField],
) -> tuple[SpectralField, ...]:
    """Remove the wavenumber-parallel component modewise; k=0 passes through."""
    grid = w[0].grid
    for f in w[1:]:
        if f.grid is not grid and f.grid != grid:
            raise ValueError("vector components live on different grids")
    out = _leray_arrays(grid, [f.coeffs for f in w])
    return tuple(SpectralField(grid, c) for c in out)


@dataclass
class RHSTerms:
    """Dealiased spectral building blocks shared by both RHS routes.

    Arrays are raw coefficient arrays on the state's grid:
      conv_psi    v . grad psi
      conv_v      v . grad v_i (divergence form, i = 1..3)
      stress_div  [div(grad psi (x) grad psi)]_i
      q_nonlocal  (-Lap)^{-1} sum_ij [d_i v_j d_j v_i + d_i d_j(d_i psi d_j psi)]
      f_h, f_v    explicit nonlocal momentum forcings of the pressure-free form
    """

    conv_psi: np.ndarray = field(repr=False)
    conv_v: list[np.ndarray] = field(repr=False)
    stress_div: list[np.ndarray] = field(repr=False)
    q_nonlocal: np.ndarray = field(repr=False)
    f_h: list[np.ndarray] = field(repr=False)
    f_v: np.ndarray = field(repr=False)


def nonlinear_terms(state: FlowState) -> RHSTerms:
    """Assemble every dealiased quadratic term of the system at this state."""
    g = state.grid
    psi_c, v_c = state.coeff_arrays()
    K = g.k
    mask = g.dealias_mask

    v_phys = [g.to_physical(c) for c in v_c]
    gpsi_phys = [g.to_physical(1j * K[j] * psi_c) for j in range(3)]

    def prod(fa, fb):
        out = g.to_spectral(fa * fb)
        out[~mask] = 0.0
        return out

    # transport of psi; its mean vanishes exactly because div v = 0
    conv_psi = prod(v_phys[0], gpsi_phys[0])
    conv_psi += prod(v_phys[1], gpsi_phys[1])
    conv_psi += prod(v_phys[2], gpsi_phys[2])
    conv_psi[0, 0, 0] = 0.0

    # symmetric quadratic tensors: v (x) v and grad psi (x) grad psi
    vv = {}
    tt = {}
    for i in range(3):
        for j in range(i, 3):
            vv[(i, j)] = prod(v_phys[i], v_phys[j])
            tt[(i, j)] = prod(gpsi_phys[i], gpsi_phys[j])

    def sym(d, i, j):
        return d[(i, j)] if i <= j else d[(j, i)]

    # advection in divergence form (equal to the convective form modewise
    # because div v = 0 exactly) and the stress divergence
    conv_v = []
    stress_div = []
    for i in range(3):
        cv = np.zeros(g.shape, dtype=np.complex128)
        sd = np.zeros(g.shape, dtype=np.complex128)
        for j in range(3):
            cv += 1j * K[j] * sym(vv, i, j)
            sd += 1j * K[j] * sym(tt, i, j)
        conv_v.append(cv)
        stress_div.append(sd)

    # double divergence of v (x) v equals sum_ij d_i v_j d_j v_i for
    # divergence-free v, again exactly on the retained modes
    qsum = np.zeros(g.shape, dtype=np.complex128)
    for i in range(3):
        qsum -= K[i] * K[i] * (vv[(i, i)] + tt[(i, i)])
        for j in range(i + 1, 3):
            qsum -= 2.0 * K[i] * K[j] * (vv[(i, j)] + tt[(i, j)])
    q_nonlocal = g.inv_ksq * qsum

    f_h = [-1j * K[a] * q_nonlocal - stress_div[a] for a in range(2)]
    f_v = -1j * K[2] * q_nonlocal - stress_div[2]

    return RHSTerms(
        conv_psi=conv_psi,
        conv_v=conv_v,
        stress_div=stress_div,
        q_nonlocal=q_nonlocal,
        f_h=f_h,
        f_v=f_v,
    )


def _linear_coupling(grid: SpectralGrid, psi_c: np.ndarray) -> list[np.ndarray]:
    """The terms (grad_h d3 psi, (Lap + d3^2) psi) as they stand on the LHS."""
    K1, K2, K3 = grid.k
    return [
        -K1 * K3 * psi_c,
        -K2 * K3 * psi_c,
        -(grid.ksq + K3 * K3) * psi_c,
    ]


def _tendency_arrays(
    state: FlowState, include_viscous: bool, terms: RHSTerms | None = None
) -> tuple[np.ndarray, list[np.ndarray], RHSTerms]:
    g = state.grid
    psi_c, v_c = state.coeff_arrays()
    if terms is None:
        terms = nonlinear_terms(state)
    lin = _linear_coupling(g, psi_c)

    dpsi = -terms.conv_psi - v_c[2]
    forcing = [terms.conv_v[i] + lin[i] + terms.stress_div[i] for i in range(3)]
    proj = _leray_arrays(g, forcing)
    dv = [-proj[i] for i in range(3)]
    if include_viscous:
        for i in range(3):
            dv[i] -= g.ksq * v_c[i]
    dpsi[0, 0, 0] = 0.0
    for c in dv:
        c[0, 0, 0] = 0.0
    return dpsi, dv, terms


def compute_rhs(state: FlowState, include_viscous: bool = True) -> Tendency:
    """Tendency via Leray projection of the momentum forcing (primary route)."""
    g = state.grid
    dpsi, dv, _ = _tendency_arrays(state, include_viscous)
    return Tendency(
        SpectralField(g, dpsi), tuple(SpectralField(g, c) for c in dv)
    )


def compute_rhs_explicit(state: FlowState) -> Tendency:
    """Tendency via the explicit pressure-free form (verification route).

    Assembles the nonlocal forcings f_h, f_v directly; the linear potential
    terms appear with the sign they take after the pressure substitution
    (+grad_h d3 psi horizontally, -Lap_h psi vertically).
    """
    g = state.grid
    psi_c, v_c = state.coeff_arrays()
    K1, K2, K3 = g.k
    terms = nonlinear_terms(state)

    dpsi = -terms.conv_psi - v_c[2]
    dpsi[0, 0, 0] = 0.0

    dv = []
    for a, Ka in ((0, K1), (1, K2)):
        c = -g.ksq * v_c[a] - terms.conv_v[a] - Ka * K3 * psi_c + terms.f_h[a]
        dv.append(c)
    dv.append(-g.ksq * v_c[2] - terms.conv_v[2] + g.khsq * psi_c + terms.f_v)
    for c in dv:
        c[0, 0, 0] = 0.0

    return Tendency(
        SpectralField(g, dpsi), tuple(SpectralField(g, c) for c in dv)
    )


def _tendency_half(
    grid: SpectralGrid,
    psi_h: np.ndarray,
    v_h: list[np.ndarray],
    include_viscous: bool = True,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Tendency evaluated entirely on the rfft half-spectrum (stepper hot path).

    Algebraically identical to the full-array route of compute_rhs: the
    advection and stress tensors are combined (s_ij = v_i v_j + d_i psi d_j psi)
    before transforming, which halves the forward-FFT count without changing
    the assembled forcing.
    """
    K = grid.k_half
    ksq = grid.ksq_half
    cache = grid.__dict__.get("_tendency_mults")
    if cache is None:
        cache = (
            grid.dealias_mask_half.astype(np.float64),
            -(ksq + K[2] * K[2]),
        )
        grid.__dict__["_tendency_mults"] = cache
    mask, lin_vert = cache

    v_phys = [grid.to_physical_half(c) for c in v_h]
    gpsi_phys = [grid.to_physical_half(1j * K[j] * psi_h) for j in range(3)]

    conv_psi = grid.to_spectral_half(
        v_phys[0] * gpsi_phys[0] + v_phys[1] * gpsi_phys[1] + v_phys[2] * gpsi_phys[2]
    )
    conv_psi *= mask
    conv_psi[0, 0, 0] = 0.0

    ss = {}
    for i in range(3):
        for j in range(i, 3):
            s = grid.to_spectral_half(
                v_phys[i] * v_phys[j] + gpsi_phys[i] * gpsi_phys[j]
            )
            s *= mask
            ss[(i, j)] = s

    def sym(i, j):
        return ss[(i, j)] if i <= j else ss[(j, i)]

    forcing = []
    lin_mults = (-K[0] * K[2], -K[1] * K[2], lin_vert)
    for i in range(3):
        f = lin_mults[i] * psi_h
        for j in range(3):
            f += 1j * K[j] * sym(i, j)
        forcing.append(f)

    parallel = (
        K[0] * forcing[0] + K[1] * forcing[1] + K[2] * forcing[2]
    ) * grid.inv_ksq_half
    dv = [-(forcing[i] - K[i] * parallel) for i in range(3)]
    if include_viscous:
        for i in range(3):
            dv[i] -= ksq * v_h[i]

    dpsi = -conv_psi - v_h[2]
    dpsi[0, 0, 0] = 0.0
    for c in dv:
        c[0, 0, 0] = 0.0
    return dpsi, dv


def pressure_solve(state: FlowState) -> SpectralField:
    """Mean-free pressure recovered from the divergence of the momentum equation:

    p = -2 d3 psi + (-Lap)^{-1} sum_ij [d_i v_j d_j v_i + d_i d_j(d_i psi d_j psi)]
    """
    g = state.grid
    psi_c, _ = state.coeff_arrays()
    terms = nonlinear_terms(state)
    K3 = g.k[2]
    p = -2.0 * 1j * K3 * psi_c + terms.q_nonlocal
    p[0, 0, 0] = 0.0
    return SpectralField(g, p)
