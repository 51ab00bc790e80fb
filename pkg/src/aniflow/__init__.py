"""Pseudo-spectral solver and verification suite for an anisotropic
complex-fluid perturbation system on the periodic box."""

from .spectral import (
    SpectralField,
    SpectralGrid,
    dealias,
    derivative,
    forward_transform,
    inverse_transform,
    laplacian,
    mixed_norm,
    sobolev_inner,
    sobolev_norm_sq,
)
from .model import (
    FlowState,
    Tendency,
    compute_rhs,
    compute_rhs_explicit,
    leray_project,
    nonlinear_terms,
    pressure_solve,
)
from .diagnostics import (
    EnergyLedger,
    RunReport,
    TrajectoryRecorder,
    bound_probe,
    bt_functional,
    energy_identity_residual,
    energy_subidentities,
    interpolation_ratios,
    make_ledger,
    modified_energy,
    write_run_summary_json,
    write_timeseries_csv,
)
from .integrator import (
    BlowUpDetected,
    StepperConfig,
    cfl_dt,
    read_checkpoint,
    run,
    step,
    write_checkpoint,
)
from .harness import (
    InitSpec,
    SweepSpec,
    amplitude_sweep,
    bisect_threshold,
    generate_initial,
    pressure_report,
)

__version__ = "0.1.0"
