"""Batch command-line surface.

Subcommands:
    run     single trajectory -> timeseries CSV + summary JSON + checkpoints
    sweep   amplitude sweep or bisection bracket -> table CSV + JSON
    verify  property-check battery at a given grid size (exit 0 iff all pass)
    resume  continue a trajectory from a checkpoint file

Options may also come from a JSON config file (--config); explicit
command-line flags override file values.  The default output directory is
taken from the ANIFLOW_OUT_DIR environment variable when --out-dir is not
given, falling back to the current directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import diagnostics, harness, integrator, model
from .harness import InitSpec, SweepSpec
from .integrator import StepperConfig
from .model import FlowState
from .spectral import SpectralGrid

OUT_DIR_ENV = "ANIFLOW_OUT_DIR"


def _default_out_dir() -> str:
    return os.environ.get(OUT_DIR_ENV, ".")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override its keys")
    parser.add_argument("--grid", type=int, help="cubic resolution n (default 32)")
    parser.add_argument("--dt", type=float, help="fixed time step (default 1e-2)")
    parser.add_argument("--t-end", type=float, dest="t_end", help="final time (default 10)")
    parser.add_argument(
        "--scheme", choices=sorted(integrator.SCHEME_TAGS), help="time scheme (default IFRK2)"
    )
    parser.add_argument("--seed", type=int, help="random seed (default 0)")
    parser.add_argument("--b0", type=float, help="target initial amplitude B0 (default 0.1)")
    parser.add_argument("--k-max", type=int, dest="k_max", help="band limit of initial data")
    parser.add_argument(
        "--sample-every", type=int, dest="sample_every", help="steps between ledger samples"
    )
    parser.add_argument("--out-dir", dest="out_dir", help="output directory")
    parser.add_argument(
        "--checkpoint-every",
        type=int,
        dest="checkpoint_every",
        help="ledger samples between checkpoints (0 = final only)",
    )


_DEFAULTS = {
    "grid": 32,
    "dt": 1e-2,
    "t_end": 10.0,
    "scheme": "IFRK2",
    "seed": 0,
    "b0": 0.1,
    "k_max": 4,
    "sample_every": 10,
    "out_dir": None,
    "checkpoint_every": 0,
    "sweep": None,
    "trials": 1,
    "workers": 1,
    "rel_width": 0.25,
}


def _settings(args: argparse.Namespace) -> dict:
    """Merge defaults, config-file values and explicit flags (in that order)."""
    merged = dict(_DEFAULTS)
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        with open(cfg_path) as fh:
            cfg = json.load(fh)
        unknown = set(cfg) - set(_DEFAULTS)
        if unknown:
            raise SystemExit(f"unknown config keys: {sorted(unknown)}")
        merged.update(cfg)
    for key in _DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    if merged["out_dir"] is None:
        merged["out_dir"] = _default_out_dir()
    return merged


def _make_config(s: dict) -> StepperConfig:
    return StepperConfig(
        t_end=s["t_end"], dt=s["dt"], scheme=s["scheme"], sample_every=s["sample_every"]
    )


def _run_to_files(
    state: FlowState, s: dict, out_dir: Path, tag: str
) -> diagnostics.RunReport:
    config = _make_config(s)
    recorder_ledgers: list[diagnostics.EnergyLedger] = []
    counter = {"n": 0}

    def sink(st: FlowState, led: diagnostics.EnergyLedger) -> None:
        recorder_ledgers.append(led)
        counter["n"] += 1
        every = s["checkpoint_every"]
        if every and counter["n"] % every == 0:
            integrator.write_checkpoint(
                out_dir / f"{tag}_t{st.t:.6f}.ckpt", st, s["scheme"]
            )

    report, final = integrator.run(state, config, sinks=[sink])
    diagnostics.write_timeseries_csv(out_dir / f"{tag}_timeseries.csv", recorder_ledgers)
    diagnostics.write_run_summary_json(out_dir / f"{tag}_summary.json", report)
    integrator.write_checkpoint(out_dir / f"{tag}_final.ckpt", final, s["scheme"])
    return report


def cmd_run(args: argparse.Namespace) -> int:
    s = _settings(args)
    out_dir = Path(s["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = SpectralGrid(s["grid"], s["grid"], s["grid"])
    init = InitSpec(k_max=s["k_max"], amplitude_B0=s["b0"], seed=s["seed"])
    state = harness.generate_initial(grid, init)
    report = _run_to_files(state, s, out_dir, "run")
    print(
        f"run: verdict={report.verdict} B0={report.B0:.6g} "
        f"B_T/B0={report.bt_over_b0:.6g} sup_E/E0={report.sup_energy_ratio:.6g}"
    )
    return 0


def cmd_resume(args: argparse.Namespace) -> int:
    s = _settings(args)
    out_dir = Path(s["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    state, scheme = integrator.read_checkpoint(args.resume)
    s = {**s, "scheme": scheme if getattr(args, "scheme", None) is None else s["scheme"]}
    if s["t_end"] <= state.t:
        raise SystemExit(
            f"--t-end {s['t_end']} is not beyond the checkpoint time {state.t}"
        )
    report = _run_to_files(state, s, out_dir, "resume")
    print(
        f"resume: from t={state.t:.6g} verdict={report.verdict} "
        f"t_final={report.t_final:.6g}"
    )
    return 0


def _parse_sweep(text: str) -> tuple[list[float] | None, tuple[float, float] | None]:
    """'a,b,c' -> amplitude list; 'lo:hi' -> bisection bracket."""
    if ":" in text:
        lo, hi = (float(x) for x in text.split(":", 1))
        return None, (lo, hi)
    return [float(x) for x in text.split(",")], None


def cmd_sweep(args: argparse.Namespace) -> int:
    s = _settings(args)
    if not s["sweep"]:
        raise SystemExit("sweep requires --sweep 'a,b,c' or --sweep 'lo:hi'")
    out_dir = Path(s["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    amplitudes, bracket = _parse_sweep(s["sweep"])
    spec = SweepSpec(
        amplitudes=amplitudes or [],
        t_end=s["t_end"],
        trials_per_amplitude=s["trials"],
        grid_n=s["grid"],
        k_max=s["k_max"],
        seed=s["seed"],
        dt=s["dt"],
        scheme=s["scheme"],
        sample_every=s["sample_every"],
        workers=s["workers"],
    )
    summary: dict = {"settings": {k: s[k] for k in sorted(s)}}
    if bracket is not None:
        lo, hi, rows = harness.bisect_threshold(spec, bracket, rel_width=s["rel_width"])
        summary["bracket"] = [lo, hi]
        print(f"sweep: threshold bracket [{lo:.6g}, {hi:.6g}]")
    else:
        rows = harness.amplitude_sweep(spec)
    summary["rows"] = [r.to_dict() for r in rows]
    with open(out_dir / "sweep_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    with open(out_dir / "sweep_table.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["amplitude", "verdict", "bt_over_b0", "sup_energy_ratio", "max_residual"]
        )
        for r in rows:
            writer.writerow(
                [r.amplitude, r.verdict, r.bt_over_b0, r.sup_energy_ratio, r.max_residual]
            )
            print(
                f"  B0={r.amplitude:<10.6g} {r.verdict:<8} "
                f"B_T/B0={r.bt_over_b0:.4g} sup_E/E0={r.sup_energy_ratio:.4g}"
            )
    return 0


def _verify_checks(n: int, seed: int) -> list[tuple[str, bool, str]]:
    grid = SpectralGrid(n, n, n)
    rng = np.random.default_rng(seed)
    results = []

    def record(name: str, value: float, tol: float):
        results.append((name, value <= tol, f"{value:.3e} (tol {tol:.0e})"))

    # transform roundtrip on random physical samples
    samples = rng.standard_normal(grid.shape)
    err = float(np.max(np.abs(grid.to_physical(grid.to_spectral(samples)) - samples)))
    record("transform_roundtrip", err, 1e-12)

    # random dealiased state: invariants, route equivalence, energy identities
    init = InitSpec(k_max=min(4, n // 3), amplitude_B0=0.2, seed=seed)
    state = harness.generate_initial(grid, init)
    try:
        state.validate()
        results.append(("state_invariants", True, "ok"))
    except ValueError as exc:
        results.append(("state_invariants", False, str(exc)))

    ta = model.compute_rhs(state)
    tb = model.compute_rhs_explicit(state)
    scale = max(
        float(np.max(np.abs(ta.dpsi.coeffs))),
        *(float(np.max(np.abs(c.coeffs))) for c in ta.dv),
        1e-300,
    )
    err = max(
        float(np.max(np.abs(ta.dpsi.coeffs - tb.dpsi.coeffs))),
        *(
            float(np.max(np.abs(a.coeffs - b.coeffs)))
            for a, b in zip(ta.dv, tb.dv)
        ),
    )
    record("route_equivalence", err / scale, 1e-11)

    res = diagnostics.energy_subidentities(state)
    record("energy_identity_h2", res.h2_balance, 1e-10)
    record("energy_identity_cross", res.cross_balance, 1e-10)
    record("energy_identity_combined", res.combined, 1e-10)

    # short integration keeps invariants; the finite-difference energy
    # residual carries the O(dt^2) stencil error of the stiffest modes
    config = StepperConfig(t_end=0.05, dt=1e-3, sample_every=1)
    report, final = integrator.run(state, config)
    record("post_run_divergence", final.max_divergence(), 1e-12)
    record("post_run_identity_residual", report.identity_residual_max, 1e-2)

    # analytic pressure oracle: v = 0, psi = sin(x3)
    psi_c = np.zeros(grid.shape, dtype=np.complex128)
    psi_c[0, 0, 1] = -0.5j
    psi_c[0, 0, n - 1] = 0.5j
    oracle = FlowState.from_coeffs(
        grid, psi_c, [np.zeros(grid.shape, dtype=np.complex128)] * 3
    )
    p = model.pressure_solve(oracle).coeffs
    expect = np.zeros(grid.shape, dtype=np.complex128)
    expect[0, 0, 1] = expect[0, 0, n - 1] = -1.0     # -2 cos(x3)
    expect[0, 0, 2] = expect[0, 0, n - 2] = -0.25    # -(1/2) cos(2 x3)
    record("pressure_oracle", float(np.max(np.abs(p - expect))), 1e-12)

    return results


def cmd_verify(args: argparse.Namespace) -> int:
    s = _settings(args)
    results = _verify_checks(s["grid"], s["seed"])
    all_ok = True
    for name, ok, detail in results:
        print(f"  [{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        all_ok &= ok
    print(f"verify: {'all checks passed' if all_ok else 'FAILURES detected'}")
    return 0 if all_ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aniflow",
        description="Pseudo-spectral solver and verification harness "
        "for the anisotropic complex-fluid perturbation system.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="integrate a single trajectory")
    _add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="amplitude sweep / threshold bisection")
    _add_common(p_sweep)
    p_sweep.add_argument(
        "--sweep", help="amplitude list 'a,b,c' or bisection bracket 'lo:hi'"
    )
    p_sweep.add_argument("--trials", type=int, help="trials per amplitude")
    p_sweep.add_argument("--workers", type=int, help="parallel worker processes")
    p_sweep.add_argument(
        "--rel-width", type=float, dest="rel_width", help="bisection bracket width"
    )
    p_sweep.set_defaults(func=cmd_sweep)

    p_verify = sub.add_parser("verify", help="run the property-check battery")
    _add_common(p_verify)
    p_verify.set_defaults(func=cmd_verify)

    p_resume = sub.add_parser("resume", help="continue from a checkpoint")
    _add_common(p_resume)
    p_resume.add_argument("--resume", required=True, help="checkpoint file to resume")
    p_resume.set_defaults(func=cmd_resume)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
