"""Independent solution paths used to cross-check the semi-implicit stepper.

`solve_frozen_slab` marches the linear problem in which the coefficient field
is fixed data, the building block behind the scheme's well-posedness.
`picard_step` turns one time step into a fully implicit one by successive
coefficient freezing, starting from the semi-implicit prediction. Because the
two paths approximate the same (unique, for locally Lipschitz coefficients)
solution, their end-of-horizon discrepancy must shrink as tau does; that is
what `cross_validate` measures.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import PicardConvergenceError
from .grid import Field, Grid
from .model import ModelSpec, coefficient_fields
from .stepper import (
    SchemeConfig,
    SystemState,
    _solve_implicit,
    _solve_regularize,
    initial_state,
    plan_steps,
    step_with_info,
)


@dataclass
class PicardConfig:
    """Stopping rule for the coefficient-freezing sweep loop."""

    max_sweeps: int = 50
    sweep_tol: float = 1e-9

    def __post_init__(self):
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be at least 1")
        if not (self.sweep_tol > 0):
            raise ValueError("sweep_tol must be positive")


def solve_frozen_slab(
    g: Grid,
    A_nodes: Sequence[np.ndarray],
    w0: Field,
    tau: float,
    *,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> list[Field]:
    """Time-march the linear problem with per-node frozen coefficients.

    Returns the whole trajectory [w0, w1, ..., wN] with one implicit
    diffusion solve per node; N = len(A_nodes).
    """
    state = np.asarray(w0.values, dtype=np.float64)
    trajectory = [Field(g, state.copy())]
    for A in A_nodes:
        A = np.asarray(A, dtype=np.float64)
        state, _ = _solve_implicit(g, state, A, tau, tol, max_iter)
        trajectory.append(Field(g, state.copy()))
    return trajectory


def _relative_l2_change(new: list[np.ndarray], old: list[np.ndarray]) -> float:
    num = np.sqrt(sum(float(np.sum((a - b) ** 2)) for a, b in zip(new, old)))
    den = np.sqrt(sum(float(np.sum(b**2)) for b in old))
    return num / max(den, 1e-300)


def picard_step_with_info(
    state: SystemState,
    m: ModelSpec,
    cfg: SchemeConfig,
    p: PicardConfig,
    tau: float | None = None,
) -> tuple[SystemState, int]:
    """One fully implicit step via successive coefficient freezing.

    The first candidate is the semi-implicit prediction (coefficients from the
    previous time level). Each sweep regularizes the current candidate,
    re-evaluates the coefficients there, and redoes the implicit solve from
    the previous-step densities. The loop stops when the candidate's relative
    L2 change across a sweep falls below `sweep_tol`; if the coefficients do
    not depend on the state this happens on the first sweep and the result
    coincides with the plain semi-implicit step.
    """
    g = m.grid
    dt = cfg.tau if tau is None else float(tau)
    u_prev_fields = state.u

    def implicit_all(A_fields: list[np.ndarray]) -> tuple[list[np.ndarray], int]:
        iters = 0
        out = []
        for i in range(m.n_species):
            u_new, rep = _solve_implicit(
                g, state.u[i].values, A_fields[i], dt, cfg.linear_tol,
                cfg.linear_max_iter)
            out.append(u_new)
            iters += rep.iterations
        return out, iters

    # sweep 0: freeze at the previous time level (the semi-implicit predictor)
    A_fields, _ = coefficient_fields(m, state.u_tilde, cfg.clamp_tilde_positive)
    candidate, _ = implicit_all(A_fields)

    sweeps = 0
    change = np.inf
    while sweeps < p.max_sweeps:
        sweeps += 1
        tilde = []
        for i in range(m.n_species):
            ut, _ = _solve_regularize(g, candidate[i], m.delta[i], cfg.linear_tol,
                                      cfg.linear_max_iter)
            tilde.append(Field(g, ut))
        A_fields, _ = coefficient_fields(m, tilde, cfg.clamp_tilde_positive)
        refreshed, _ = implicit_all(A_fields)
        change = _relative_l2_change(refreshed, candidate)
        candidate = refreshed
        if change < p.sweep_tol:
            break
    else:
        raise PicardConvergenceError(
            f"sweep loop did not converge in {p.max_sweeps} sweeps "
            f"(last relative change {change:.3e}); a smaller tau may help",
            sweeps=p.max_sweeps,
            last_change=float(change),
        )

    u_tilde_new = []
    w_new = []
    for i in range(m.n_species):
        ut, _ = _solve_regularize(g, candidate[i], m.delta[i], cfg.linear_tol,
                                  cfg.linear_max_iter)
        u_tilde_new.append(Field(g, ut))
        w_new.append(Field(g,
            m.delta[i] * ut
            + (state.w[i].values - m.delta[i] * state.u_tilde[i].values)
            + dt * A_fields[i] * candidate[i]))
    new_state = SystemState(
        time=state.time + dt,
        u=tuple(Field(g, c) for c in candidate),
        u_tilde=tuple(u_tilde_new),
        w=tuple(w_new),
    )
    return new_state, sweeps


def picard_step(
    state: SystemState, m: ModelSpec, cfg: SchemeConfig, p: PicardConfig
) -> SystemState:
    """Fully implicit step; see `picard_step_with_info`."""
    new_state, _ = picard_step_with_info(state, m, cfg, p)
    return new_state


def _run_semi(m: ModelSpec, cfg: SchemeConfig) -> SystemState:
    taus, _ = plan_steps(cfg.tau, cfg.horizon)
    state = initial_state(m, cfg)
    for k, dt in enumerate(taus, start=1):
        state, _ = step_with_info(state, m, cfg, tau=dt)
        state.time = cfg.horizon if k == len(taus) else k * cfg.tau
    return state


def _run_picard(m: ModelSpec, cfg: SchemeConfig, p: PicardConfig) -> SystemState:
    taus, _ = plan_steps(cfg.tau, cfg.horizon)
    state = initial_state(m, cfg)
    for k, dt in enumerate(taus, start=1):
        state, _ = picard_step_with_info(state, m, cfg, p, tau=dt)
        state.time = cfg.horizon if k == len(taus) else k * cfg.tau
    return state


@dataclass(frozen=True)
class CrossValidationRow:
    tau: float
    discrepancy: float


@dataclass
class CrossValidationReport:
    """End-of-horizon gap between the two solution paths, per step size."""

    rows: list[CrossValidationRow]
    degeneracy_floor: float

    @property
    def discrepancies(self) -> list[float]:
        return [r.discrepancy for r in self.rows]

    @property
    def degenerate(self) -> bool:
        return all(d <= self.degeneracy_floor for d in self.discrepancies)

    def shrink_ratios(self) -> list[float]:
        d = self.discrepancies
        return [d[k] / max(d[k + 1], 1e-300) for k in range(len(d) - 1)]

    def passed(self, min_ratio: float = 1.5) -> bool:
        if self.degenerate:
            return True
        return all(r >= min_ratio for r in self.shrink_ratios())


def cross_validate(
    m: ModelSpec,
    cfg: SchemeConfig,
    p: PicardConfig,
    halvings: int = 3,
) -> CrossValidationReport:
    """Run both paths to the horizon at tau, tau/2, ... and compare.

    Requires coefficients flagged locally Lipschitz: only then do the two
    discretizations share a unique limit, making the shrinking discrepancy a
    meaningful consistency check.
    """
    if not m.lipschitz:
        raise ValueError(
            "cross-validation requires locally Lipschitz coefficients; the two "
            "paths are only guaranteed to approximate one solution in that case"
        )
    rows = []
    scale = 0.0
    for k in range(halvings + 1):
        tau_k = cfg.tau / (2**k)
        cfg_k = SchemeConfig(
            tau=tau_k,
            horizon=cfg.horizon,
            linear_tol=cfg.linear_tol,
            linear_max_iter=cfg.linear_max_iter,
            clamp_tilde_positive=cfg.clamp_tilde_positive,
            output_stride=cfg.output_stride,
            workers=cfg.workers,
        )
        semi = _run_semi(m, cfg_k)
        picard = _run_picard(m, cfg_k, p)
        gap = max(
            float(np.max(np.abs(semi.u[i].values - picard.u[i].values)))
            for i in range(m.n_species)
        )
        scale = max(scale, *(float(np.max(np.abs(f.values))) for f in semi.u))
        rows.append(CrossValidationRow(tau=tau_k, discrepancy=gap))
    floor = 10 * cfg.linear_tol * max(1.0, scale)
    return CrossValidationReport(rows=rows, degeneracy_floor=floor)
