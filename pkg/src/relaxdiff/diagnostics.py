"""Per-step invariant checks and the growth-in-time study for u_tilde.

Everything here is a pure function of simulation states: running diagnostics
never mutates the simulation. Violations come back as data so callers decide
whether to abort, log, or ignore.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import Violation
from .grid import Field, integrate
from .model import ModelSpec, coefficient_fields
from .stepper import SchemeConfig, SpeciesStepInfo, SystemState

CSV_HEADER = (
    "step,time,species,mass_u,mass_utilde,min_u,max_u,min_utilde,max_utilde,"
    "w_min_increment,coef_min,coef_max,clamps,cg_iters"
)


def _fmt(x: float) -> str:
    # shortest round-trip decimal form, reproducible across runs
    return repr(float(x))


@dataclass(frozen=True)
class StepRecord:
    """One diagnostics row: the state of one species after one step."""

    step: int
    time: float
    species: int
    mass_u: float
    mass_utilde: float
    min_u: float
    max_u: float
    min_utilde: float
    max_utilde: float
    w_min_increment: float
    coef_min: float
    coef_max: float
    clamps: int
    cg_iters: int

    def to_csv_row(self) -> str:
        return ",".join(
            [
                str(self.step),
                _fmt(self.time),
                str(self.species),
                _fmt(self.mass_u),
                _fmt(self.mass_utilde),
                _fmt(self.min_u),
                _fmt(self.max_u),
                _fmt(self.min_utilde),
                _fmt(self.max_utilde),
                _fmt(self.w_min_increment),
                _fmt(self.coef_min),
                _fmt(self.coef_max),
                str(self.clamps),
                str(self.cg_iters),
            ]
        )


@dataclass
class DiagnosticsReport:
    """Ordered step/species rows plus CSV serialization."""

    rows: list[StepRecord] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = [CSV_HEADER]
        lines.extend(row.to_csv_row() for row in self.rows)
        return "\n".join(lines) + "\n"

    def for_species(self, species: int) -> list[StepRecord]:
        return [r for r in self.rows if r.species == species]


def step_records(
    step: int, before: SystemState, after: SystemState, infos: Sequence[SpeciesStepInfo]
) -> list[StepRecord]:
    """Build the diagnostics rows for one executed step."""
    g = after.grid
    records = []
    for info in infos:
        i = info.species - 1
        u = after.u[i]
        ut = after.u_tilde[i]
        w_inc = after.w[i].values - before.w[i].values
        records.append(
            StepRecord(
                step=step,
                time=after.time,
                species=info.species,
                mass_u=integrate(g, u),
                mass_utilde=integrate(g, ut),
                min_u=float(np.min(u.values)),
                max_u=float(np.max(u.values)),
                min_utilde=float(np.min(ut.values)),
                max_utilde=float(np.max(ut.values)),
                w_min_increment=float(np.min(w_inc)),
                coef_min=info.coefficient_min,
                coef_max=info.coefficient_max,
                clamps=info.clamp_count,
                cg_iters=info.cg_iterations,
            )
        )
    return records


@dataclass(frozen=True)
class CheckTolerances:
    """Thresholds for the per-step invariant checks.

    The guarantees are exact in exact arithmetic, so the positivity and
    monotonicity slack scales with the linear solver tolerance.
    """

    mass: float = 1e-10
    positivity: float = 1e-9
    monotonicity: float = 1e-9

    @classmethod
    def from_linear_tol(cls, linear_tol: float) -> "CheckTolerances":
        return cls(mass=1e-10, positivity=10 * linear_tol, monotonicity=10 * linear_tol)


def check_step(
    before: SystemState, after: SystemState, tolerances: CheckTolerances
) -> list[Violation]:
    """Invariant audit of one step; an empty list means the step is clean.

    Checks, per species: the cell total of u moved by at most the relative
    mass tolerance; the regularized field carries the same total as u; both
    fields stay above -positivity; and the w increment stays above
    -monotonicity in every cell.
    """
    if before.n_species != after.n_species:
        raise ValueError("states have different species counts")
    if before.grid != after.grid:
        raise ValueError("states live on different grids")
    g = after.grid
    out: list[Violation] = []
    for i in range(after.n_species):
        sp = i + 1
        mass_before = integrate(g, before.u[i])
        mass_after = integrate(g, after.u[i])
        mass_scale = max(abs(mass_before), 1e-300)
        drift = abs(mass_after - mass_before)
        if drift > tolerances.mass * mass_scale:
            out.append(
                Violation(
                    "mass drift above tolerance",
                    species=sp,
                    detail=f"|{mass_after!r} - {mass_before!r}| = {drift!r}",
                )
            )
        gap = abs(integrate(g, after.u_tilde[i]) - mass_after)
        if gap > tolerances.mass * mass_scale:
            out.append(
                Violation(
                    "regularized mass differs from density mass",
                    species=sp,
                    detail=f"gap {gap!r}",
                )
            )
        for name, values in (("u", after.u[i].values), ("u_tilde", after.u_tilde[i].values)):
            j = int(np.argmin(values))
            if values[j] < -tolerances.positivity:
                out.append(
                    Violation(
                        f"negative {name} beyond tolerance",
                        species=sp,
                        cell=j,
                        detail=f"value {values[j]!r}",
                    )
                )
        w_inc = after.w[i].values - before.w[i].values
        j = int(np.argmin(w_inc))
        if w_inc[j] < -tolerances.monotonicity:
            out.append(
                Violation(
                    "w increment negative beyond tolerance",
                    species=sp,
                    cell=j,
                    detail=f"increment {w_inc[j]!r}",
                )
            )
    return out


def w_increment_residual(
    m: ModelSpec,
    before: SystemState,
    after: SystemState,
    tol: float = 1e-12,
    tau: float | None = None,
) -> float:
    """Max-norm mismatch between the w increment and its resolvent identity.

    The increment should equal tau * (I - delta L)^{-1} (A * u_new) with A the
    coefficients frozen at `before`; the mismatch is bounded by solver error.
    """
    from .stepper import _solve_regularize

    g = after.grid
    if tau is None:
        tau = after.time - before.time
    A_fields, _ = coefficient_fields(m, before.u_tilde, clamp_negative=True)
    worst = 0.0
    for i in range(after.n_species):
        expected, _ = _solve_regularize(
            g, tau * A_fields[i] * after.u[i].values, m.delta[i], tol, 100_000
        )
        actual = after.w[i].values - before.w[i].values
        worst = max(worst, float(np.max(np.abs(actual - expected))))
    return worst


@dataclass(frozen=True)
class BoundFit:
    """Least-squares line through sup_{t <= T} of the scaled sup-norm of u_tilde."""

    horizons: tuple[float, ...]
    sup_utilde: tuple[float, ...]
    fitted_intercept: float
    fitted_slope: float
    max_rel_residual: float

    def fitted(self, horizon: float) -> float:
        return self.fitted_intercept + self.fitted_slope * horizon


def fit_linear_bound(
    m: ModelSpec, cfg: SchemeConfig, horizons: Sequence[float]
) -> BoundFit:
    """Empirical growth study: run once to the largest horizon and fit a line.

    Records, for each requested horizon T, the running supremum over t <= T of
    max_i delta_i * ||u_tilde_i||_inf, then fits sup(T) ~ intercept + slope * T.
    The theory predicts at most linear growth; the fit quality (max relative
    residual) indicates how far the run is from that envelope.
    """
    from . import stepper  # deferred: stepper.run builds records from this module

    horizons = sorted(float(T) for T in horizons)
    if len(horizons) < 3:
        raise ValueError("at least three horizons required for a meaningful fit")
    run_cfg = SchemeConfig(
        tau=cfg.tau,
        horizon=horizons[-1],
        linear_tol=cfg.linear_tol,
        linear_max_iter=cfg.linear_max_iter,
        clamp_tilde_positive=cfg.clamp_tilde_positive,
        output_stride=cfg.output_stride,
        workers=cfg.workers,
    )

    sup_at: dict[float, float] = {}
    running = {"sup": 0.0}

    def scaled_sup(state: SystemState) -> float:
        return max(
            m.delta[i] * float(np.max(np.abs(state.u_tilde[i].values)))
            for i in range(state.n_species)
        )

    def on_step(k, before, after, records):
        if before.time == 0.0:
            running["sup"] = max(running["sup"], scaled_sup(before))
        running["sup"] = max(running["sup"], scaled_sup(after))
        for T in horizons:
            if after.time <= T * (1 + 1e-12):
                sup_at[T] = running["sup"]

    stepper.run(m, run_cfg, stepper.RunSinks(on_step=on_step))
    sups = [sup_at[T] for T in horizons]
    coeffs = np.polyfit(horizons, sups, 1)
    slope, intercept = float(coeffs[0]), float(coeffs[1])
    residuals = [
        abs(s - (intercept + slope * T)) / max(abs(s), 1e-300)
        for T, s in zip(horizons, sups)
    ]
    return BoundFit(
        horizons=tuple(horizons),
        sup_utilde=tuple(sups),
        fitted_intercept=intercept,
        fitted_slope=slope,
        max_rel_residual=max(residuals),
    )


def energy_identity_residual(
    trajectory: Sequence[Field],
    A_nodes: Sequence[np.ndarray],
    w0: Field,
    tau: float,
) -> float:
    """Relative defect of the continuous-time energy balance on a slab run.

    The balance equates the coefficient-weighted space-time square of the
    trajectory plus half the squared gradient of the accumulated flux
    potential with the pairing of the initial data against that potential.
    The marching scheme satisfies it up to a positive O(tau) remainder, so
    halving tau should roughly halve the returned value.
    """
    g = w0.grid
    steps = len(trajectory) - 1
    if len(A_nodes) != steps:
        raise ValueError("one coefficient field per executed step required")
    meas = g.cell_measure
    lhs_bulk = 0.0
    rhs = 0.0
    S = np.zeros(g.n_cells)
    w0v = w0.values
    for n in range(steps):
        A = np.asarray(A_nodes[n], dtype=np.float64)
        w_next = trajectory[n + 1].values
        z = A * w_next
        lhs_bulk += tau * float(z @ w_next) * meas
        rhs += tau * float(w0v @ z) * meas
        S = S + tau * z
    grad_term = 0.5 * float((-g.laplacian(S)) @ S) * meas
    lhs = lhs_bulk + grad_term
    denom = abs(rhs) + 1e-14 * abs(lhs) + 1e-300
    return abs(lhs - rhs) / denom
