"""Shared builders: small models and the dense-elimination replay oracle."""

import numpy as np
import pytest

import relaxdiff as rd


def make_grid_1d(n=16, length=1.0):
    return rd.Grid((n,), (length / n,))


def make_grid_2d(n1=4, n2=4, lengths=(1.0, 1.0)):
    return rd.Grid((n1, n2), (lengths[0] / n1, lengths[1] / n2))


def cosine_profile(grid, amplitude=0.5, offset=1.0):
    x = grid.cell_centers()[0]
    return offset + amplitude * np.cos(np.pi * x / grid.lengths[0])


def two_species_model(grid, delta=(0.01, 0.02), d=(0.1, 0.05),
                      couplings=((0.3, 0.6), (0.5, 0.2)), p=1.0):
    x = grid.cell_centers()[0]
    u1 = np.maximum(0.0, 1.0 - ((x - 0.3 * grid.lengths[0]) / (0.25 * grid.lengths[0])) ** 2) ** 2
    u2 = np.where(x < grid.lengths[0] / 2, 0.0, 1.0)
    return rd.ModelSpec(
        delta=delta,
        coefficients=(
            rd.SktCoefficients(d[0], couplings[0], p),
            rd.SktCoefficients(d[1], couplings[1], p),
        ),
        initial_data=(rd.Field(grid, u1), rd.Field(grid, u2)),
    )


def lipschitz_cross_model(grid, base=0.05, coupling=1.0, delta=0.01, amplitude=0.5):
    """The smooth two-species problem used for the dual-path comparisons."""
    profile = cosine_profile(grid, amplitude)
    mirrored = cosine_profile(grid, -amplitude)
    return rd.ModelSpec(
        delta=(delta, delta),
        coefficients=(
            rd.SktCoefficients(base, (0.0, coupling)),
            rd.SktCoefficients(base, (coupling, 0.0)),
        ),
        initial_data=(rd.Field(grid, profile), rd.Field(grid, mirrored)),
    )


def dense_replay(model, cfg, n_steps, tau=None):
    """Re-run the scheme with dense pivoted-LU solves on assembled matrices.

    Independent of the iterative path: matrices are materialized, the
    unsymmetrized implicit system is solved directly, and the regularization
    uses the dense resolvent. Returns per-step (u, u_tilde, w) snapshots.
    """
    g = model.grid
    tau = cfg.tau if tau is None else tau
    n = g.n_cells
    L = rd.assemble_laplacian(g).to_dense()
    eye = np.eye(n)

    u = [f.values.copy() for f in model.initial_data]
    ut = [rd.dense_solve(eye - model.delta[i] * L, u[i]) for i in range(model.n_species)]
    w = [model.delta[i] * ut[i] for i in range(model.n_species)]
    history = [([v.copy() for v in u], [v.copy() for v in ut], [v.copy() for v in w])]

    for _ in range(n_steps):
        R = np.maximum(np.stack(ut), 0.0)
        A = [spec.evaluate_many(R) for spec in model.coefficients]
        if model.a_max is not None:
            A = [np.minimum(a, model.a_max) for a in A]
        u_new, ut_new, w_new = [], [], []
        for i in range(model.n_species):
            step_matrix = eye / tau - L @ np.diag(A[i])
            nxt = rd.dense_solve(step_matrix, u[i] / tau)
            tnxt = rd.dense_solve(eye - model.delta[i] * L, nxt)
            u_new.append(nxt)
            ut_new.append(tnxt)
            w_new.append(model.delta[i] * tnxt + (w[i] - model.delta[i] * ut[i])
                         + tau * A[i] * nxt)
        u, ut, w = u_new, ut_new, w_new
        history.append(([v.copy() for v in u], [v.copy() for v in ut],
                        [v.copy() for v in w]))
    return history


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
