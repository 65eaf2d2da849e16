"""Binary quadratic models: QUBO / Ising forms, energies and conversions."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np


class DimensionError(ValueError):
    """Configuration or vector length does not match the model size."""


class Sense(str, Enum):
    LESS_EQUAL = "le"
    EQUAL = "eq"


@dataclass(frozen=True)
class QuboProblem:
    """Minimize ``x^T Q x + offset`` over ``x in {0,1}^n``.

    The matrix is kept symmetric; the diagonal holds the linear terms
    (``x_i^2 = x_i``).  Constraint functions reuse this shape.
    """

    coeffs: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        q = np.array(self.coeffs, dtype=np.float64)
        if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] < 1:
            raise DimensionError(f"coefficient matrix must be square with n >= 1, got shape {q.shape}")
        if not np.array_equal(q, q.T):
            raise ValueError("coefficient matrix must be symmetric")
        q.setflags(write=False)
        object.__setattr__(self, "coeffs", q)
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def n(self) -> int:
        return self.coeffs.shape[0]

    @classmethod
    def from_upper(cls, upper: np.ndarray, offset: float = 0.0) -> "QuboProblem":
        """Build from an upper-triangular matrix whose (i, j) entry is the full pair weight."""
        u = np.triu(np.asarray(upper, dtype=np.float64))
        diag = np.diag(np.diag(u))
        off = u - diag
        return cls(diag + (off + off.T) / 2.0, offset)

    @classmethod
    def linear(cls, weights: Sequence[float], offset: float = 0.0) -> "QuboProblem":
        return cls(np.diag(np.asarray(weights, dtype=np.float64)), offset)

    def energy(self, config) -> float:
        return energy(self, config)

    def energies(self, configs: np.ndarray) -> np.ndarray:
        """Vectorized energies for a (m, n) array of binary rows."""
        x = np.asarray(configs, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n:
            raise DimensionError(f"expected (m, {self.n}) configurations, got {x.shape}")
        return ((x @ self.coeffs) * x).sum(axis=1) + self.offset

    def to_json(self) -> dict:
        return qubo_to_json(self)


@dataclass(frozen=True)
class IsingProblem:
    """``(1/2) sum_{i!=j} J_ij s_i s_j + sum_i h_i s_i + offset`` with ``s in {-1,+1}^n``."""

    couplings: np.ndarray
    fields: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        j = np.array(self.couplings, dtype=np.float64)
        h = np.array(self.fields, dtype=np.float64)
        if j.ndim != 2 or j.shape[0] != j.shape[1] or h.shape != (j.shape[0],):
            raise DimensionError("couplings must be (n, n) and fields (n,)")
        if not np.array_equal(j, j.T) or np.any(np.diag(j) != 0):
            raise ValueError("couplings must be symmetric with zero diagonal")
        j.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "couplings", j)
        object.__setattr__(self, "fields", h)
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def n(self) -> int:
        return self.fields.shape[0]

    def energy(self, spins) -> float:
        s = np.asarray(spins, dtype=np.float64)
        if s.shape != (self.n,):
            raise DimensionError(f"expected {self.n} spins, got shape {s.shape}")
        return float(0.5 * s @ self.couplings @ s + self.fields @ s + self.offset)


@dataclass(frozen=True)
class ConstrainedProblem:
    """Minimize ``objective(x)`` subject to ``constraints[k](x) <= bounds[k]`` (or ``==``)."""

    objective: QuboProblem
    constraints: tuple[QuboProblem, ...]
    bounds: np.ndarray
    senses: tuple[Sense, ...] = field(default=())

    def __post_init__(self):
        cons = tuple(self.constraints)
        if len(cons) < 1:
            raise ValueError("at least one constraint is required")
        bounds = np.array(self.bounds, dtype=np.float64).reshape(-1)
        if bounds.shape[0] != len(cons):
            raise DimensionError("bounds length must equal the number of constraints")
        senses = tuple(Sense(s) for s in self.senses) if self.senses else (Sense.LESS_EQUAL,) * len(cons)
        if len(senses) != len(cons):
            raise DimensionError("senses length must equal the number of constraints")
        for c in cons:
            if c.n != self.objective.n:
                raise DimensionError("constraint size differs from objective size")
        bounds.setflags(write=False)
        object.__setattr__(self, "constraints", cons)
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "senses", senses)

    @property
    def n(self) -> int:
        return self.objective.n

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    def constraint_values(self, config) -> np.ndarray:
        return np.array([c.energy(config) for c in self.constraints])

    def is_feasible(self, config, tol: float = 1e-9) -> bool:
        return bool(np.all(self.feasible_mask(np.atleast_2d(config), tol)))

    def feasible_mask(self, configs: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        """Boolean mask over rows of ``configs`` satisfying every constraint."""
        configs = np.asarray(configs)
        mask = np.ones(configs.shape[0], dtype=bool)
        for c, bound, sense in zip(self.constraints, self.bounds, self.senses):
            vals = c.energies(configs)
            if sense is Sense.EQUAL:
                mask &= np.abs(vals - bound) <= tol
            else:
                mask &= vals <= bound + tol
        return mask


def _as_config(problem_n: int, config) -> np.ndarray:
    x = np.asarray(config)
    if x.shape != (problem_n,):
        raise DimensionError(f"expected configuration of length {problem_n}, got shape {x.shape}")
    if not np.all((x == 0) | (x == 1)):
        raise ValueError("configuration entries must be 0 or 1")
    return x.astype(np.float64)


def energy(problem: QuboProblem, config) -> float:
    """Return ``sum_ij Q_ij x_i x_j + offset``."""
    x = _as_config(problem.n, config)
    return float(x @ problem.coeffs @ x + problem.offset)


def qubo_to_ising(problem: QuboProblem) -> IsingProblem:
    """Substitute ``x_i = (s_i + 1) / 2``."""
    q = problem.coeffs
    diag = np.diag(q).copy()
    off = q - np.diag(diag)
    couplings = off / 2.0
    fields = diag / 2.0 + off.sum(axis=1) / 2.0
    offset = problem.offset + diag.sum() / 2.0 + off.sum() / 4.0
    return IsingProblem(couplings, fields, offset)


def ising_to_qubo(problem: IsingProblem) -> QuboProblem:
    """Substitute ``s_i = 2 x_i - 1``."""
    j = problem.couplings
    h = problem.fields
    q = 2.0 * j + np.diag(2.0 * h - 2.0 * j.sum(axis=1))
    offset = problem.offset - h.sum() + j.sum() / 2.0
    return QuboProblem(q, offset)


def _signed_multipliers(problem: ConstrainedProblem, mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=np.float64).reshape(-1)
    if mu.shape[0] != problem.num_constraints:
        raise DimensionError("one multiplier per constraint is required")
    signs = np.array([-1.0 if s is Sense.EQUAL else 1.0 for s in problem.senses])
    bad = (signs > 0) & (mu < 0)
    if np.any(bad):
        raise ValueError(f"negative multiplier on inequality constraint(s) {np.flatnonzero(bad).tolist()}")
    return signs * mu


def build_relaxed_qubo(problem: ConstrainedProblem, mu) -> QuboProblem:
    """Objective plus multiplier-weighted constraint forms.

    Inequality constraints enter as ``+mu_k F_k``; equality constraints as
    ``-nu_k F_k``.  The constant ``-sum mu_k C_k`` is not folded in, see
    :func:`lagrangian_constant`.
    """
    weights = _signed_multipliers(problem, mu)
    q = problem.objective.coeffs.copy()
    offset = problem.objective.offset
    for w, c in zip(weights, problem.constraints):
        if w != 0.0:
            q += w * c.coeffs
            offset += w * c.offset
    return QuboProblem(q, offset)


def lagrangian_constant(problem: ConstrainedProblem, mu) -> float:
    """Constant part of the Lagrangian at ``mu`` (``-sum mu_k C_k`` with equality signs flipped)."""
    return float(-_signed_multipliers(problem, mu) @ problem.bounds)


def count_quadratic_terms(problem: QuboProblem) -> int:
    """Number of unordered pairs ``i < j`` with a nonzero coupling."""
    upper = np.triu(problem.coeffs, k=1)
    return int(np.count_nonzero(upper))


def qubo_to_json(problem: QuboProblem) -> dict:
    q = problem.coeffs
    rows, cols = np.nonzero(np.triu(q))
    triplets = []
    for i, j in zip(rows.tolist(), cols.tolist()):
        value = q[i, j] if i == j else 2.0 * q[i, j]
        triplets.append([i, j, float(value)])
    return {"n": problem.n, "q": triplets, "offset": problem.offset}


def qubo_from_json(data: dict | str) -> QuboProblem:
    """Inverse of :func:`qubo_to_json`; off-diagonal triplet values are full pair weights."""
    if isinstance(data, str):
        data = json.loads(data)
    n = int(data["n"])
    upper = np.zeros((n, n))
    for i, j, value in data["q"]:
        i, j = int(i), int(j)
        if i > j:
            raise ValueError(f"triplet ({i}, {j}) is not upper-triangular")
        upper[i, j] += value
    return QuboProblem.from_upper(upper, data.get("offset", 0.0))


def constrained_to_json(problem: ConstrainedProblem) -> dict:
    return {
        "objective": qubo_to_json(problem.objective),
        "constraints": [qubo_to_json(c) for c in problem.constraints],
        "bounds": problem.bounds.tolist(),
        "senses": [s.value for s in problem.senses],
    }


def constrained_from_json(data: dict) -> ConstrainedProblem:
    return ConstrainedProblem(
        objective=qubo_from_json(data["objective"]),
        constraints=tuple(qubo_from_json(c) for c in data["constraints"]),
        bounds=np.asarray(data["bounds"], dtype=np.float64),
        senses=tuple(Sense(s) for s in data.get("senses", ["le"] * len(data["constraints"]))),
    )
