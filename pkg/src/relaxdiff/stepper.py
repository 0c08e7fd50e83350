"""Semi-implicit time stepping for the relaxed cross-diffusion system.

Each step regularizes the previous densities (a screened-Poisson solve),
freezes the diffusion coefficients at the clamped regularized state, and
advances every species through one implicit diffusion solve. Both linear
solves are symmetric positive definite and handled by conjugate gradients.

Two structural choices make the scheme's invariants hold at solver accuracy
rather than "up to discretization":

* The implicit system is symmetrized by substituting z = A * u_new, and the
  update is then applied in flux form, u_new = u_old + tau * L z. Because the
  discrete Laplacian L annihilates nothing but adds fluxes that cancel in
  pairs, the total of u_new equals the total of u_old exactly, whatever the
  iterative solver returned for z.
* The regularization is likewise re-expressed as u + delta * L z after the
  solve, so the regularized field carries exactly the mass of its source.

The running auxiliary field w accumulates delta * u_tilde plus the
left-endpoint quadrature of A * u; with the flux-form update its per-step
increment equals tau * (I - delta L)^{-1} (A * u_new) algebraically, which is
the discrete form of its monotonicity in time.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import LinearSolverError
from .grid import Field, Grid
from .model import ModelSpec, coefficient_fields
from .sparse import SolverReport, cg_solve


@dataclass
class SchemeConfig:
    """Time-scheme parameters shared by every run mode."""

    tau: float
    horizon: float
    linear_tol: float = 1e-10
    linear_max_iter: int = 10_000
    clamp_tilde_positive: bool = True
    output_stride: int = 1
    workers: int = 1

    def __post_init__(self):
        if not (self.tau > 0):
            raise ValueError("tau must be positive")
        if not (self.horizon > 0):
            raise ValueError("horizon must be positive")
        if self.tau > self.horizon * (1 + 1e-12):
            raise ValueError("tau must not exceed the horizon")
        if not (self.linear_tol > 0):
            raise ValueError("linear tolerance must be positive")
        if self.linear_max_iter < 1:
            raise ValueError("linear_max_iter must be at least 1")
        if self.output_stride < 1:
            raise ValueError("output_stride must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


class _ResolventOperator:
    """Matrix-free I - delta * L; symmetric positive definite."""

    def __init__(self, grid: Grid, delta: float):
        self.grid = grid
        self.delta = float(delta)
        self.n_rows = self.n_cols = grid.n_cells

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return x - self.delta * self.grid.laplacian(x)

    def diagonal(self) -> np.ndarray:
        return 1.0 - self.delta * self.grid.laplacian_diagonal()


class _ImplicitStepOperator:
    """Matrix-free diag(1 / (tau A)) - L; symmetric positive definite."""

    def __init__(self, grid: Grid, A: np.ndarray, tau: float):
        self.grid = grid
        self.scale = 1.0 / (tau * A)
        self.n_rows = self.n_cols = grid.n_cells

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.scale * x - self.grid.laplacian(x)

    def diagonal(self) -> np.ndarray:
        return self.scale - self.grid.laplacian_diagonal()


def _solve_regularize(
    g: Grid, u: np.ndarray, delta: float, tol: float, max_iter: int
) -> tuple[np.ndarray, SolverReport]:
    op = _ResolventOperator(g, delta)
    z, report = cg_solve(op, u, tol, max_iter)
    if not report.converged:
        raise LinearSolverError(
            f"regularization solve stalled after {report.iterations} iterations "
            f"(residual {report.residual_norm:.3e})"
        )
    # flux form: identical to z up to the solver residual, but mass-exact
    return u + delta * g.laplacian(z), report


def _solve_implicit(
    g: Grid, u_n: np.ndarray, A: np.ndarray, tau: float, tol: float, max_iter: int
) -> tuple[np.ndarray, SolverReport]:
    if not np.all(A > 0):
        raise ValueError("implicit step requires strictly positive coefficients")
    op = _ImplicitStepOperator(g, A, tau)
    z, report = cg_solve(op, u_n / tau, tol, max_iter)
    if not report.converged:
        raise LinearSolverError(
            f"implicit diffusion solve stalled after {report.iterations} iterations "
            f"(residual {report.residual_norm:.3e})"
        )
    return u_n + tau * g.laplacian(z), report


def regularize(g: Grid, u: Field, delta: float, tol: float = 1e-10,
               max_iter: int = 10_000) -> Field:
    """Solve (I - delta L) v = u with zero-flux boundaries.

    The result has exactly the mean of `u` and maps nonnegative input to
    nonnegative output up to solver round-off.
    """
    if not (delta > 0):
        raise ValueError("delta must be positive")
    values, _ = _solve_regularize(g, np.asarray(u.values, dtype=np.float64), delta,
                                  tol, max_iter)
    return Field(g, values)


def implicit_diffusion_step(g: Grid, u_n: Field, A: Field, tau: float,
                            tol: float = 1e-10, max_iter: int = 10_000) -> Field:
    """One backward step of u_t = L(A * u) with the coefficient field frozen.

    Solves (I / tau - L diag(A)) u_new = u_n / tau through the symmetric
    substitution z = A * u_new. The column sums of the step matrix all equal
    1 / tau, so the cell total of u is conserved; the M-matrix structure keeps
    nonnegative data nonnegative.
    """
    values, _ = _solve_implicit(g, np.asarray(u_n.values, dtype=np.float64),
                                np.asarray(A.values, dtype=np.float64), tau, tol,
                                max_iter)
    return Field(g, values)


@dataclass
class SystemState:
    """Densities, their regularizations, and the running w field at one time."""

    time: float
    u: tuple[Field, ...]
    u_tilde: tuple[Field, ...]
    w: tuple[Field, ...]

    def __post_init__(self):
        self.u = tuple(self.u)
        self.u_tilde = tuple(self.u_tilde)
        self.w = tuple(self.w)

    @property
    def n_species(self) -> int:
        return len(self.u)

    @property
    def grid(self) -> Grid:
        return self.u[0].grid


def initial_state(m: ModelSpec, cfg: SchemeConfig) -> SystemState:
    """State at t = 0: regularized initial data and w = delta * u_tilde."""
    g = m.grid
    u = tuple(f.copy() for f in m.initial_data)
    u_tilde = []
    w = []
    for i in range(m.n_species):
        ut, _ = _solve_regularize(g, u[i].values, m.delta[i], cfg.linear_tol,
                                  cfg.linear_max_iter)
        u_tilde.append(Field(g, ut))
        w.append(Field(g, m.delta[i] * ut))
    return SystemState(0.0, u, tuple(u_tilde), tuple(w))


@dataclass(frozen=True)
class SpeciesStepInfo:
    """Per-species bookkeeping for one step, consumed by the diagnostics."""

    species: int
    cg_iterations: int
    clamp_count: int
    coefficient_min: float
    coefficient_max: float


def step_with_info(
    state: SystemState, m: ModelSpec, cfg: SchemeConfig, tau: float | None = None
) -> tuple[SystemState, list[SpeciesStepInfo]]:
    """Advance one step of size `tau` (default cfg.tau) and report solve stats."""
    g = m.grid
    dt = cfg.tau if tau is None else float(tau)
    A_fields, clamp_counts = coefficient_fields(m, state.u_tilde, cfg.clamp_tilde_positive)
    t0 = state.time

    def advance(i: int):
        try:
            u_new, rep_impl = _solve_implicit(
                g, state.u[i].values, A_fields[i], dt, cfg.linear_tol,
                cfg.linear_max_iter)
            ut_new, rep_reg = _solve_regularize(
                g, u_new, m.delta[i], cfg.linear_tol, cfg.linear_max_iter)
        except LinearSolverError as exc:
            raise LinearSolverError(
                f"species {i + 1}, step from t = {t0!r}: {exc}"
            ) from exc
        w_new = (m.delta[i] * ut_new
                 + (state.w[i].values - m.delta[i] * state.u_tilde[i].values)
                 + dt * A_fields[i] * u_new)
        info = SpeciesStepInfo(
            species=i + 1,
            cg_iterations=rep_impl.iterations + rep_reg.iterations,
            clamp_count=clamp_counts[i],
            coefficient_min=float(np.min(A_fields[i])),
            coefficient_max=float(np.max(A_fields[i])),
        )
        return Field(g, u_new), Field(g, ut_new), Field(g, w_new), info

    indices = range(state.n_species)
    if cfg.workers > 1 and state.n_species > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(advance, indices))
    else:
        results = [advance(i) for i in indices]

    new_state = SystemState(
        time=state.time + dt,
        u=tuple(r[0] for r in results),
        u_tilde=tuple(r[1] for r in results),
        w=tuple(r[2] for r in results),
    )
    return new_state, [r[3] for r in results]


def step(state: SystemState, m: ModelSpec, cfg: SchemeConfig) -> SystemState:
    """One semi-implicit step of size cfg.tau."""
    new_state, _ = step_with_info(state, m, cfg)
    return new_state


def plan_steps(tau: float, horizon: float) -> tuple[list[float], bool]:
    """Step sizes covering [0, horizon]; the last one is shortened if needed."""
    ratio = horizon / tau
    n_full = int(np.floor(ratio + 1e-9))
    remainder = horizon - n_full * tau
    if remainder > 1e-9 * tau:
        return [tau] * n_full + [remainder], True
    return [tau] * max(n_full, 1), False


@dataclass
class RunSinks:
    """Output hooks for `run`; every callback is optional.

    `on_step(step_index, before, after, records)` fires after each step with
    the diagnostics rows for that step. `on_snapshot(step_index, state)` fires
    at step 0, every `output_stride` steps, and at the final step.
    """

    on_step: Callable | None = None
    on_snapshot: Callable | None = None


@dataclass
class RunResult:
    state: SystemState
    report: "DiagnosticsReport"
    shortened_last_step: bool


def run(m: ModelSpec, cfg: SchemeConfig, sinks: RunSinks | None = None) -> RunResult:
    """March the scheme to the horizon, emitting diagnostics every step."""
    from .diagnostics import DiagnosticsReport, step_records

    sinks = sinks or RunSinks()
    taus, shortened = plan_steps(cfg.tau, cfg.horizon)
    state = initial_state(m, cfg)
    report = DiagnosticsReport()
    if sinks.on_snapshot is not None:
        sinks.on_snapshot(0, state)
    for k, dt in enumerate(taus, start=1):
        before = state
        state, infos = step_with_info(before, m, cfg, tau=dt)
        # pin times to the step grid instead of accumulating round-off
        state.time = cfg.horizon if k == len(taus) else k * cfg.tau
        records = step_records(k, before, state, infos)
        report.rows.extend(records)
        if sinks.on_step is not None:
            sinks.on_step(k, before, state, records)
        if sinks.on_snapshot is not None and (k % cfg.output_stride == 0 or k == len(taus)):
            sinks.on_snapshot(k, state)
    return RunResult(state, report, shortened)
