"""Species data: diffusion-coefficient families, relaxation lengths, initial data.

Two coefficient families are supported. The polynomial cross-diffusion family
evaluates a_i(r) = d_i + sum_j d_ij * r_j^p and is bounded below by d_i by
construction. Tabulated coefficients wrap an arbitrary user function together
with a declared lower bound, which is trusted but spot-checked on samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .errors import Violation
from .grid import Field, Grid


@dataclass(frozen=True)
class SktCoefficients:
    """Polynomial coefficient a(r) = base + sum_j couplings[j] * r_j^power."""

    base: float
    couplings: tuple[float, ...]
    power: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "couplings", tuple(float(c) for c in self.couplings))

    @property
    def lower_bound(self) -> float:
        return self.base

    @property
    def lipschitz(self) -> bool:
        # r^p is locally Lipschitz on [0, inf) exactly when p >= 1
        return self.power >= 1.0 or all(c == 0.0 for c in self.couplings)

    def evaluate(self, r: np.ndarray) -> float:
        r = np.asarray(r, dtype=np.float64)
        return float(self.base + np.dot(self.couplings, np.power(r, self.power)))

    def evaluate_many(self, R: np.ndarray) -> np.ndarray:
        """Vectorized evaluation; R has shape (n_species, n_cells)."""
        powered = np.power(R, self.power) if self.power != 1.0 else R
        out = np.full(R.shape[1], self.base)
        for c, row in zip(self.couplings, powered):
            if c != 0.0:
                out = out + c * row
        return out


@dataclass(frozen=True)
class TabulatedCoefficients:
    """Arbitrary coefficient function with a user-declared lower bound."""

    func: Callable[[np.ndarray], float]
    lower_bound: float
    lipschitz: bool = False

    def evaluate(self, r: np.ndarray) -> float:
        return float(self.func(np.asarray(r, dtype=np.float64)))

    def evaluate_many(self, R: np.ndarray) -> np.ndarray:
        return np.array([self.evaluate(R[:, j]) for j in range(R.shape[1])])


CoefficientSpec = Union[SktCoefficients, TabulatedCoefficients]


def eval_coefficient(spec: CoefficientSpec, r: Sequence[float]) -> float:
    """Evaluate one species' coefficient at a nonnegative density vector."""
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0):
        raise ValueError("coefficient argument must be componentwise nonnegative")
    if not np.all(np.isfinite(r)):
        raise ValueError("coefficient argument must be finite")
    return spec.evaluate(r)


def truncation_bound(
    specs: Sequence[CoefficientSpec], k: float, lattice_points: int = 33
) -> float:
    """Envelope max_i sup {a_i(r) : r in [0, k]^I}.

    For the polynomial family the supremum sits at the corner (k, ..., k)
    because the couplings are nonnegative. Tabulated coefficients are
    maximized over a lattice with `lattice_points` samples per axis.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    n_species = len(specs)
    best = -np.inf
    lattice = None
    for spec in specs:
        if isinstance(spec, SktCoefficients):
            corner = np.full(n_species, float(k))
            best = max(best, spec.evaluate(corner))
        else:
            if lattice is None:
                axes = [np.linspace(0.0, k, lattice_points)] * n_species
                mesh = np.meshgrid(*axes, indexing="ij")
                lattice = np.stack([m.ravel() for m in mesh])
            best = max(best, float(np.max(spec.evaluate_many(lattice))))
    return best


@dataclass
class ModelSpec:
    """Everything that defines one simulation problem except the time scheme.

    `delta` holds the per-species relaxation lengths, `coefficients` the
    per-species diffusion coefficient specs, and `initial_data` one field per
    species on a shared grid. `a_max` optionally truncates every coefficient
    from above (off by default); activations of that clamp are reported by
    the diagnostics so it can be confirmed inert.
    """

    delta: tuple[float, ...]
    coefficients: tuple[CoefficientSpec, ...]
    initial_data: tuple[Field, ...]
    a_max: float | None = None

    def __post_init__(self):
        self.delta = tuple(float(d) for d in self.delta)
        self.coefficients = tuple(self.coefficients)
        self.initial_data = tuple(self.initial_data)

    @property
    def n_species(self) -> int:
        return len(self.delta)

    @property
    def grid(self) -> Grid:
        return self.initial_data[0].grid

    @property
    def lipschitz(self) -> bool:
        return all(spec.lipschitz for spec in self.coefficients)

    def lower_bounds(self) -> tuple[float, ...]:
        return tuple(spec.lower_bound for spec in self.coefficients)


_SPOT_CHECK_SAMPLES = 256


def validate_model(m: ModelSpec, *, rng_seed: int = 0) -> list[Violation]:
    """Collect every violated model assumption; an empty list means valid."""
    violations: list[Violation] = []
    n = m.n_species
    if n < 1:
        violations.append(Violation("at least one species required"))
        return violations
    if len(m.coefficients) != n or len(m.initial_data) != n:
        violations.append(
            Violation(
                "per-species data must align",
                detail=f"{n} deltas, {len(m.coefficients)} coefficient specs, "
                f"{len(m.initial_data)} initial fields",
            )
        )
        return violations

    g = m.initial_data[0].grid
    for i, (delta, spec, init) in enumerate(
        zip(m.delta, m.coefficients, m.initial_data), start=1
    ):
        if not (delta > 0):
            violations.append(Violation("delta must be positive", species=i))
        if init.grid != g:
            violations.append(Violation("initial fields must share one grid", species=i))
            continue
        negatives = np.nonzero(init.values < 0)[0]
        for cell in negatives[:8]:
            violations.append(
                Violation(
                    "initial data must be nonnegative",
                    species=i,
                    cell=int(cell),
                    detail=f"value {init.values[cell]!r}",
                )
            )
        violations.extend(_validate_coefficients(spec, i, n, rng_seed))
        if m.a_max is not None and m.a_max < spec.lower_bound:
            violations.append(
                Violation(
                    "a_max lies below the coefficient lower bound",
                    species=i,
                    detail=f"a_max {m.a_max!r} < {spec.lower_bound!r}",
                )
            )
    return violations


def _validate_coefficients(
    spec: CoefficientSpec, species: int, n_species: int, rng_seed: int
) -> list[Violation]:
    out: list[Violation] = []
    if isinstance(spec, SktCoefficients):
        if not (spec.base > 0):
            out.append(Violation("coefficient base must be positive", species=species))
        if len(spec.couplings) != n_species:
            out.append(
                Violation(
                    "one coupling per species required",
                    species=species,
                    detail=f"got {len(spec.couplings)} for {n_species} species",
                )
            )
        if any(c < 0 for c in spec.couplings):
            out.append(Violation("couplings must be nonnegative", species=species))
        if not (spec.power > 0):
            out.append(Violation("power must be positive", species=species))
        return out

    if not (spec.lower_bound > 0):
        out.append(Violation("declared lower bound must be positive", species=species))
        return out
    # trust but spot-check the declared bound on sampled inputs
    rng = np.random.default_rng([rng_seed, species])
    samples = rng.uniform(0.0, 10.0, size=(_SPOT_CHECK_SAMPLES, n_species))
    for r in samples:
        value = spec.evaluate(r)
        if not np.isfinite(value):
            out.append(
                Violation("coefficient must be finite", species=species, detail=f"r={r}")
            )
            break
        if value < spec.lower_bound * (1 - 1e-12):
            out.append(
                Violation(
                    "sampled value fell below the declared lower bound",
                    species=species,
                    detail=f"a({np.round(r, 6)}) = {value!r} < {spec.lower_bound!r}",
                )
            )
            break
    return out


def coefficient_fields(
    m: ModelSpec, u_tilde: Sequence[Field], clamp_negative: bool
) -> tuple[list[np.ndarray], list[int]]:
    """Per-species coefficient arrays evaluated at the regularized densities.

    Negative regularized values (solver round-off) are clamped to zero before
    evaluation when `clamp_negative` is set; either way the number of negative
    cells per species is counted. The optional `a_max` truncation is applied
    last and its activations are added to the same counter.
    """
    raw = np.stack([f.values for f in u_tilde])
    counts = [int(np.count_nonzero(row < 0)) for row in raw]
    R = np.maximum(raw, 0.0) if clamp_negative else raw
    fields = []
    for i, spec in enumerate(m.coefficients):
        A = spec.evaluate_many(R)
        if m.a_max is not None:
            hit = int(np.count_nonzero(A > m.a_max))
            if hit:
                counts[i] += hit
                A = np.minimum(A, m.a_max)
        if not np.all(np.isfinite(A)):
            raise ValueError(
                f"coefficient evaluation produced non-finite values for species {i + 1}"
            )
        fields.append(A)
    return fields, counts
