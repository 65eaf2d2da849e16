"""Quadratic knapsack instances, the greedy heuristic and an exact oracle."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import ConstrainedProblem, QuboProblem, Sense
from .samplers import enumerate_configs

MAX_ENUMERATION = 20
MAX_BRANCH_AND_BOUND = 40


class OracleUnavailable(RuntimeError):
    """The exact oracle cannot certify an instance of this size."""


@dataclass(frozen=True)
class QkpInstance:
    """Maximize ``x^T P x`` subject to ``w . x <= c``."""

    profits: np.ndarray
    weights: np.ndarray
    capacity: int
    density: float = 1.0
    seed: int | None = None
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        p = np.array(self.profits, dtype=np.int64)
        w = np.array(self.weights, dtype=np.int64)
        if p.ndim != 2 or p.shape[0] != p.shape[1] or w.shape != (p.shape[0],):
            raise ValueError("profits must be (n, n) and weights (n,)")
        if not np.array_equal(p, p.T):
            raise ValueError("profit matrix must be symmetric")
        if np.any(p < 0) or np.any(w < 1):
            raise ValueError("profits must be non-negative and weights positive")
        p.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "profits", p)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "capacity", int(self.capacity))

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def profit(self, config) -> int:
        x = np.asarray(config, dtype=np.int64)
        return int(x @ self.profits @ x)

    def weight(self, config) -> int:
        return int(np.asarray(config, dtype=np.int64) @ self.weights)

    def is_feasible(self, config) -> bool:
        return self.weight(config) <= self.capacity

    def to_json(self) -> dict:
        rows, cols = np.nonzero(np.triu(self.profits))
        return {
            "n": self.n,
            "delta": self.density,
            "seed": self.seed,
            "profits": [[int(i), int(j), int(self.profits[i, j])] for i, j in zip(rows, cols)],
            "weights": self.weights.tolist(),
            "capacity": self.capacity,
        }

    @classmethod
    def from_json(cls, data: dict | str) -> "QkpInstance":
        if isinstance(data, str):
            data = json.loads(data)
        n = int(data["n"])
        p = np.zeros((n, n), dtype=np.int64)
        for i, j, v in data["profits"]:
            p[i, j] = p[j, i] = v
        return cls(p, np.asarray(data["weights"]), int(data["capacity"]), float(data.get("delta", 1.0)), data.get("seed"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path: str | Path) -> "QkpInstance":
        return cls.from_json(Path(path).read_text())


def generate(n: int, delta: float, seed: int) -> QkpInstance:
    """Random instance in the Gallo et al. style.

    Diagonal profits are always nonzero, each off-diagonal pair is nonzero
    with probability ``delta``; nonzero profits are uniform on 1..100,
    weights uniform on 1..50 and capacity uniform on 50..sum(w).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    p = np.zeros((n, n), dtype=np.int64)
    p[np.diag_indices(n)] = rng.integers(1, 101, size=n)
    iu = np.triu_indices(n, k=1)
    present = rng.random(iu[0].shape[0]) < delta
    values = rng.integers(1, 101, size=iu[0].shape[0])
    p[iu] = np.where(present, values, 0)
    p = p + np.triu(p, k=1).T
    w = rng.integers(1, 51, size=n)
    total = int(w.sum())
    notes: tuple[str, ...] = ()
    low = 50
    if total < 50:
        low = total
        notes = (f"sum of weights {total} < 50; capacity drawn from [{total}, {total}]",)
        warnings.warn(notes[0], stacklevel=2)
    c = int(rng.integers(low, total + 1))
    return QkpInstance(p, w, c, float(delta), int(seed), notes)


def to_constrained(instance: QkpInstance) -> ConstrainedProblem:
    """Minimization form: objective ``-P``, one ``<=`` constraint ``w . x <= c``."""
    objective = QuboProblem(-instance.profits.astype(np.float64))
    constraint = QuboProblem.linear(instance.weights.astype(np.float64))
    return ConstrainedProblem(objective, (constraint,), np.array([instance.capacity], dtype=np.float64), (Sense.LESS_EQUAL,))


def _contributions(p: np.ndarray, selected: np.ndarray) -> np.ndarray:
    """Profit each item adds to (or takes from) the current selection."""
    off = p @ selected - np.diag(p) * selected
    return np.diag(p) + 2 * off


def greedy(instance: QkpInstance) -> tuple[np.ndarray, int]:
    """Remove-then-fill greedy heuristic.

    Start with every item; while overweight drop the selected item with the
    smallest contribution/weight ratio. Then try the unselected items in
    decreasing ratio order and add any that still fit. Ties go to the lower
    index.
    """
    p = instance.profits
    w = instance.weights
    x = np.ones(instance.n, dtype=np.int64)
    load = int(w.sum())
    while load > instance.capacity:
        ratio = _contributions(p, x) / w
        ratio = np.where(x == 1, ratio, np.inf)
        i = int(np.argmin(ratio))
        x[i] = 0
        load -= int(w[i])
    ratio = _contributions(p, x) / w
    candidates = [i for i in range(instance.n) if x[i] == 0]
    candidates.sort(key=lambda i: (-ratio[i], i))
    for i in candidates:
        if load + w[i] <= instance.capacity:
            x[i] = 1
            load += int(w[i])
    return x.astype(np.uint8), instance.profit(x)


def _enumerate(instance: QkpInstance) -> tuple[np.ndarray, int]:
    n = instance.n
    p = instance.profits
    w = instance.weights
    best_value = -1
    best_index = 0
    low = min(n, 16)
    high = n - low
    x_low = enumerate_configs(low).astype(np.int64)
    w_low = x_low @ w[high:]
    p_ll = np.einsum("ij,jk,ik->i", x_low, p[high:, high:], x_low)
    # high-order block first keeps the scan in lexicographic order
    for h_idx in range(2**high):
        xh = np.array([(h_idx >> (high - 1 - i)) & 1 for i in range(high)], dtype=np.int64)
        load = w_low + xh @ w[:high]
        value = p_ll + 2 * (x_low @ (p[high:, :high] @ xh)) + xh @ p[:high, :high] @ xh
        value = np.where(load <= instance.capacity, value, -1)
        k = int(np.argmax(value))
        if value[k] > best_value:
            best_value = int(value[k])
            best_index = (h_idx << low) | k
    x = np.array([(best_index >> (n - 1 - i)) & 1 for i in range(n)], dtype=np.uint8)
    return x, best_value


def _branch_and_bound(instance: QkpInstance) -> tuple[np.ndarray, int]:
    """Depth-first branch and bound in index order (1-branch first).

    Bound: each free item ``j`` is credited with ``P_jj + 2 sum_{fixed-in} P_ij
    + sum_{free} P_ij`` (every free pair split evenly between its items), then a
    fractional knapsack over those credits fills the residual capacity.  Ties
    between equal-profit solutions resolve to the lexicographically smallest.
    """
    n = instance.n
    p = instance.profits.astype(np.float64)
    w = instance.weights.astype(np.float64)
    cap = float(instance.capacity)
    diag = np.diag(p).copy()
    off = p - np.diag(diag)

    best_x, best_val = greedy(instance)
    best = {"x": best_x.astype(np.uint8), "val": float(best_val)}
    x = np.zeros(n, dtype=np.uint8)

    def bound(depth: int, inside_pull: np.ndarray, value: float, load: float) -> float:
        free = np.arange(depth, n)
        if free.size == 0:
            return value
        credit = diag[free] + 2.0 * inside_pull[free] + off[np.ix_(free, free)].sum(axis=1)
        fits = w[free] <= cap - load
        credit = np.where(fits, credit, 0.0)
        order = np.argsort(-credit / w[free], kind="stable")
        room = cap - load
        total = value
        for k in order:
            if credit[k] <= 0:
                break
            if w[free[k]] <= room:
                room -= w[free[k]]
                total += credit[k]
            else:
                total += credit[k] * room / w[free[k]]
                break
        return total

    def better(val: float) -> bool:
        if val > best["val"]:
            return True
        return val == best["val"] and tuple(x) < tuple(best["x"])

    def visit(depth: int, inside_pull: np.ndarray, value: float, load: float) -> None:
        if depth == n:
            if better(value):
                best["x"] = x.copy()
                best["val"] = value
            return
        if np.floor(bound(depth, inside_pull, value, load) + 1e-9) < best["val"]:
            return
        # 0-branch first so equal-profit solutions are met in lexicographic order
        x[depth] = 0
        visit(depth + 1, inside_pull, value, load)
        if load + w[depth] <= cap:
            x[depth] = 1
            gain = diag[depth] + 2.0 * inside_pull[depth]
            visit(depth + 1, inside_pull + off[depth], value + gain, load + w[depth])
            x[depth] = 0

    visit(0, np.zeros(n), 0.0, 0.0)
    return best["x"], int(round(best["val"]))


def exact_solve(instance: QkpInstance, method: str = "auto") -> tuple[np.ndarray, int]:
    """Provably optimal configuration and profit (lexicographically smallest among ties).

    ``method`` is ``"enumerate"``, ``"branch_and_bound"`` or ``"auto"``.
    Raises :class:`OracleUnavailable` beyond the supported size.
    """
    n = instance.n
    if method == "auto":
        method = "enumerate" if n <= MAX_ENUMERATION else "branch_and_bound"
    if method == "enumerate":
        if n > MAX_ENUMERATION:
            raise OracleUnavailable(f"enumeration supports n <= {MAX_ENUMERATION}, got {n}")
        return _enumerate(instance)
    if method == "branch_and_bound":
        if n > MAX_BRANCH_AND_BOUND:
            raise OracleUnavailable(f"branch and bound supports n <= {MAX_BRANCH_AND_BOUND}, got {n}")
        return _branch_and_bound(instance)
    raise ValueError(f"unknown method {method!r}")


def relative_error(value: float | None, optimum: float) -> float:
    """``|value - optimum| / |optimum|``; a missing value (no feasible solution) scores 1."""
    if optimum == 0:
        raise ValueError("relative error is undefined for a zero optimum")
    if value is None:
        return 1.0
    return abs(value - optimum) / abs(optimum)
