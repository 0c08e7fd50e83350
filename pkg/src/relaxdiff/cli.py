"""Batch entry point: `relaxdiff <mode> --config <path> [...]`.

Modes:
  simulate        march to the horizon, writing diagnostics.csv and snapshots
  converge        step-size (and optionally mesh) refinement study
  cross-validate  semi-implicit vs fully implicit discrepancy study
  invariants      per-step invariant audit with machine-readable output

Exit status 0 means every check passed, 1 means a numerical failure or a
violated invariant (with a message naming step and species), 2 means the
configuration was rejected. All state lives in the config file plus the
optional --seed/--output-dir overrides, so runs are reproducible byte for
byte.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import fixedpoint, stepper
from .config import RunConfig, parse_config
from .diagnostics import (
    CSV_HEADER,
    CheckTolerances,
    check_step,
    w_increment_residual,
)
from .errors import ConfigError, RelaxdiffError, Violation
from .grid import Grid, integrate
from .model import validate_model
from .snapshots import write_snapshot
from .stepper import RunSinks, SchemeConfig


def _fmt(x: float) -> str:
    return repr(float(x))


class _AbortRun(RelaxdiffError):
    pass


def run_simulate(cfg: RunConfig) -> int:
    """Full run with per-step invariant enforcement and file outputs."""
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    model = cfg.build_model()
    g = model.grid
    tolerances = CheckTolerances.from_linear_tol(cfg.scheme.linear_tol)
    initial_masses = [integrate(g, f) for f in model.initial_data]

    diag_path = outdir / "diagnostics.csv"
    with open(diag_path, "w", newline="\n") as diag:
        diag.write(CSV_HEADER + "\n")

        def on_step(k, before, after, records):
            for row in records:
                diag.write(row.to_csv_row() + "\n")
            diag.flush()
            violations = check_step(before, after, tolerances)
            for i in range(after.n_species):
                drift = abs(integrate(g, after.u[i]) - initial_masses[i])
                if drift > tolerances.mass * max(abs(initial_masses[i]), 1e-300):
                    violations.append(
                        Violation(
                            "mass drifted from the initial total",
                            species=i + 1,
                            detail=f"drift {drift!r}",
                        )
                    )
            if violations:
                raise _AbortRun(
                    f"step {k} (t = {after.time!r}): " + "; ".join(str(v) for v in violations)
                )

        def on_snapshot(k, state):
            write_snapshot(outdir / f"snap_{k}.fld", g, list(state.u), state.time)

        try:
            result = stepper.run(
                model, cfg.scheme, RunSinks(on_step=on_step, on_snapshot=on_snapshot)
            )
        except _AbortRun as exc:
            print(f"invariant violation: {exc}", file=sys.stderr)
            return 1
        except RelaxdiffError as exc:
            print(f"solver failure: {exc}", file=sys.stderr)
            return 1

    if result.shortened_last_step:
        print("note: final step shortened to land on the horizon", file=sys.stderr)
    return 0


def _final_state(cfg: RunConfig, scheme: SchemeConfig, grid: Grid | None = None):
    model = cfg.build_model(grid)
    return stepper.run(model, scheme, None).state


def _restrict(fine: Grid, values: np.ndarray) -> np.ndarray:
    """Average fine cells pairwise per axis onto the next coarser grid."""
    if fine.ndim == 1:
        return 0.5 * (values[0::2] + values[1::2])
    n1, n2 = fine.cells
    arr = values.reshape(n2, n1)
    arr = 0.5 * (arr[0::2, :] + arr[1::2, :])
    arr = 0.5 * (arr[:, 0::2] + arr[:, 1::2])
    return arr.reshape(-1)


def _fit_order(diffs: list[float]) -> float:
    # order p from successive differences d_k ~ C * 2^(-p k)
    logs = [np.log2(d) for d in diffs]
    k = np.arange(len(logs))
    slope = np.polyfit(k, logs, 1)[0]
    return float(-slope)


_DEGENERATE_FLOOR = 1e-13


def run_converge(cfg: RunConfig) -> int:
    """Refinement study; exits 0 when the fitted orders are in the expected bands."""
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    lines = ["study,level,step,diff_inf,order_estimate"]
    ok = True

    finals = []
    for k in range(cfg.halvings + 1):
        scheme_k = replace(cfg.scheme, tau=cfg.scheme.tau / (2**k))
        finals.append(_final_state(cfg, scheme_k))
    diffs = [
        max(
            float(np.max(np.abs(a.u[i].values - b.u[i].values)))
            for i in range(len(a.u))
        )
        for a, b in zip(finals, finals[1:])
    ]
    scale = max(1.0, max(float(np.max(np.abs(f.values))) for f in finals[0].u))
    live = [d for d in diffs if d > _DEGENERATE_FLOOR * scale]
    for k, d in enumerate(diffs):
        order = ""
        if k > 0 and d > 0 and diffs[k - 1] > 0:
            order = _fmt(np.log2(diffs[k - 1] / d))
        lines.append(f"tau,{k},{_fmt(cfg.scheme.tau / 2**k)},{_fmt(d)},{order}")
    if len(live) != len(diffs):
        print("temporal study degenerate (zero differences)", file=sys.stderr)
    elif len(diffs) < 2:
        print("temporal study has too few levels for an order fit", file=sys.stderr)
    else:
        tau_order = _fit_order(diffs)
        lines.append(f"tau_fit,,,,{_fmt(tau_order)}")
        if not (0.8 <= tau_order <= 1.3):
            print(f"temporal order {tau_order:.3f} outside [0.8, 1.3]", file=sys.stderr)
            ok = False

    if cfg.spatial:
        grids = [cfg.grid]
        for _ in range(2):
            prev = grids[-1]
            grids.append(
                Grid(
                    tuple(2 * n for n in prev.cells),
                    tuple(h / 2 for h in prev.spacing),
                )
            )
        states = [_final_state(cfg, cfg.scheme, g) for g in grids]
        sdiffs = []
        for coarse_state, fine_state, fine in zip(states, states[1:], grids[1:]):
            d = max(
                float(
                    np.max(
                        np.abs(
                            coarse_state.u[i].values
                            - _restrict(fine, fine_state.u[i].values)
                        )
                    )
                )
                for i in range(len(coarse_state.u))
            )
            sdiffs.append(d)
        for k, d in enumerate(sdiffs):
            order = ""
            if k > 0 and d > 0 and sdiffs[k - 1] > 0:
                order = _fmt(np.log2(sdiffs[k - 1] / d))
            lines.append(f"h,{k},{_fmt(grids[k].spacing[0])},{_fmt(d)},{order}")
        if all(d <= _DEGENERATE_FLOOR * scale for d in sdiffs):
            print("spatial study degenerate (zero differences)", file=sys.stderr)
        else:
            h_order = _fit_order(sdiffs)
            lines.append(f"h_fit,,,,{_fmt(h_order)}")
            if not (1.6 <= h_order <= 2.4):
                print(f"spatial order {h_order:.3f} outside [1.6, 2.4]", file=sys.stderr)
                ok = False

    (outdir / "converge.csv").write_text("\n".join(lines) + "\n")
    return 0 if ok else 1


def run_cross_validate(cfg: RunConfig) -> int:
    """Two-path discrepancy study; exits 0 when the gap shrinks with tau."""
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    model = cfg.build_model()
    if not model.lipschitz:
        print(
            "cross-validate requires locally Lipschitz coefficients "
            "(polynomial family: p >= 1); this model is not flagged as such",
            file=sys.stderr,
        )
        return 2
    report = fixedpoint.cross_validate(model, cfg.scheme, cfg.picard, cfg.halvings)
    lines = ["tau,discrepancy"]
    for row in report.rows:
        lines.append(f"{_fmt(row.tau)},{_fmt(row.discrepancy)}")
    (outdir / "crossval.csv").write_text("\n".join(lines) + "\n")
    if report.degenerate:
        return 0
    if report.passed(min_ratio=1.5):
        return 0
    ratios = ", ".join(f"{r:.2f}" for r in report.shrink_ratios())
    print(f"discrepancy did not shrink by 1.5x per halving (ratios: {ratios})",
          file=sys.stderr)
    return 1


def run_invariants(cfg: RunConfig) -> int:
    """Audit run: every per-step invariant, written as machine-readable rows."""
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    model = cfg.build_model()
    g = model.grid
    tolerances = CheckTolerances.from_linear_tol(cfg.scheme.linear_tol)
    initial_masses = [integrate(g, f) for f in model.initial_data]
    n_steps = len(stepper.plan_steps(cfg.scheme.tau, cfg.scheme.horizon)[0])
    identity_stride = max(1, n_steps // 8)
    failures = [0]

    path = outdir / "invariants.csv"
    with open(path, "w", newline="\n") as fh:
        fh.write("step,species,check,value,threshold,status\n")

        def emit(step, species, check, value, threshold):
            status = "pass" if value <= threshold else "fail"
            if status == "fail":
                failures[0] += 1
            fh.write(
                f"{step},{species},{check},{_fmt(value)},{_fmt(threshold)},{status}\n"
            )

        def on_step(k, before, after, records):
            for i in range(after.n_species):
                sp = i + 1
                mass_scale = max(abs(initial_masses[i]), 1e-300)
                emit(k, sp, "mass_drift_rel",
                     abs(integrate(g, after.u[i]) - initial_masses[i]) / mass_scale,
                     tolerances.mass)
                emit(k, sp, "utilde_mass_gap_rel",
                     abs(integrate(g, after.u_tilde[i]) - integrate(g, after.u[i]))
                     / mass_scale,
                     tolerances.mass)
                emit(k, sp, "neg_u",
                     max(0.0, -float(np.min(after.u[i].values))),
                     tolerances.positivity)
                emit(k, sp, "neg_utilde",
                     max(0.0, -float(np.min(after.u_tilde[i].values))),
                     tolerances.positivity)
                emit(k, sp, "neg_w_increment",
                     max(0.0, -float(np.min(after.w[i].values - before.w[i].values))),
                     tolerances.monotonicity)
            if k % identity_stride == 0:
                residual = w_increment_residual(
                    model, before, after, tol=cfg.scheme.linear_tol / 100,
                    tau=after.time - before.time)
                emit(k, 0, "w_identity_residual", residual,
                     100 * cfg.scheme.linear_tol)
            fh.flush()

        try:
            stepper.run(model, cfg.scheme, RunSinks(on_step=on_step))
        except RelaxdiffError as exc:
            print(f"solver failure: {exc}", file=sys.stderr)
            return 1

    if failures[0]:
        print(f"{failures[0]} invariant check(s) failed; see {path}", file=sys.stderr)
        return 1
    return 0


_DISPATCH = {
    "simulate": run_simulate,
    "converge": run_converge,
    "cross-validate": run_cross_validate,
    "invariants": run_invariants,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="relaxdiff",
        description="Finite-volume simulator for relaxed cross-diffusion systems",
    )
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in _DISPATCH:
        p = sub.add_parser(mode)
        p.add_argument("--config", required=True, help="path to the run configuration")
        p.add_argument("--output-dir", default=None, help="override [run] output_dir")
        p.add_argument("--seed", type=int, default=None, help="override [run] seed")
    args = parser.parse_args(argv)

    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if cfg.mode != args.mode:
        print(
            f"note: config sets mode = {cfg.mode}, running {args.mode} as requested",
            file=sys.stderr,
        )
        cfg.mode = args.mode
    if args.output_dir is not None:
        cfg.output_dir = args.output_dir
    if args.seed is not None:
        cfg.seed = args.seed
        violations = validate_model(cfg.build_model())
        if violations:
            listing = "; ".join(str(v) for v in violations)
            print(f"config error: model validation failed: {listing}", file=sys.stderr)
            return 2

    try:
        return _DISPATCH[cfg.mode](cfg)
    except RelaxdiffError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
