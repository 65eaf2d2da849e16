"""Slack-variable penalty QUBO for linear inequality constraints.

Only used to count quadratic terms against the multiplier relaxation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ConstrainedProblem, QuboProblem, Sense, build_relaxed_qubo, count_quadratic_terms
from .qkp import QkpInstance, to_constrained


class UnsupportedConstraint(ValueError):
    pass


@dataclass(frozen=True)
class SlackEncoding:
    bits_per_constraint: tuple[int, ...]
    bit_coefficients: tuple[tuple[int, ...], ...]
    penalty_weight: float

    @property
    def num_slack_bits(self) -> int:
        return sum(self.bits_per_constraint)


def slack_bits(bound: int) -> tuple[int, ...]:
    """Clipped binary coefficients covering ``[0, bound]`` exactly.

    ``1, 2, 4, ...`` with the last coefficient cut so the coefficients sum to
    ``bound``; ``ceil(log2(bound + 1))`` bits in total.
    """
    if bound < 0:
        raise ValueError("bound must be non-negative")
    m = math.ceil(math.log2(bound + 1)) if bound > 0 else 0
    if m == 0:
        return ()
    coeffs = [1 << i for i in range(m - 1)]
    coeffs.append(bound - (sum(coeffs)))
    return tuple(coeffs)


def _linear_weights(c: QuboProblem) -> np.ndarray:
    off = c.coeffs - np.diag(np.diag(c.coeffs))
    if np.any(off != 0):
        raise UnsupportedConstraint("slack encoding only supports constraints linear in x")
    weights = np.diag(c.coeffs)
    if np.any(weights != np.round(weights)) or c.offset != round(c.offset):
        raise UnsupportedConstraint("slack encoding needs integer constraint coefficients")
    return weights


def default_penalty(problem: ConstrainedProblem) -> float:
    # strictly above every |Q_ij| so penalty couplings never cancel objective ones
    return 1.0 + float(np.abs(problem.objective.coeffs).max())


def build_slack_qubo(problem: ConstrainedProblem, penalty_weight: float | None = None) -> tuple[QuboProblem, SlackEncoding]:
    """``f_0(x) + lam * sum_k (F_k(x) + z_k(b) - C_k)^2`` over ``x`` and slack bits ``b``.

    Slack bits for constraint ``k`` are appended after the original variables,
    in constraint order.
    """
    lam = default_penalty(problem) if penalty_weight is None else float(penalty_weight)
    if lam <= 0:
        raise ValueError("penalty weight must be positive")
    n = problem.n
    encodings = []
    rows = []
    for c, bound, sense in zip(problem.constraints, problem.bounds, problem.senses):
        if sense is not Sense.LESS_EQUAL:
            raise UnsupportedConstraint("slack encoding applies to <= constraints")
        weights = _linear_weights(c)
        if bound != round(bound):
            raise UnsupportedConstraint("slack encoding needs an integer bound")
        # slack covers C - F_min, here F_min = offset
        coeffs = slack_bits(int(round(bound - c.offset)))
        encodings.append(coeffs)
        rows.append((weights, c.offset - bound, coeffs))
    total = n + sum(len(e) for e in encodings)
    q = np.zeros((total, total))
    q[:n, :n] = problem.objective.coeffs
    offset = problem.objective.offset
    start = n
    for weights, const, coeffs in rows:
        a = np.zeros(total)
        a[:n] = weights
        a[start:start + len(coeffs)] = coeffs
        start += len(coeffs)
        # (a.y + const)^2 = sum_ij a_i a_j y_i y_j + 2 const sum_i a_i y_i + const^2, y_i^2 = y_i
        q += lam * (np.outer(a, a) + np.diag(2.0 * const * a))
        offset += lam * const**2
    encoding = SlackEncoding(tuple(len(e) for e in encodings), tuple(encodings), lam)
    return QuboProblem(q, offset), encoding


def count_comparison(instance: QkpInstance) -> tuple[int, int]:
    """Quadratic-term counts ``(multiplier relaxation, slack penalty)`` for a QKP instance."""
    problem = to_constrained(instance)
    om_terms = count_quadratic_terms(build_relaxed_qubo(problem, [1.0]))
    slack_qubo, _ = build_slack_qubo(problem)
    return om_terms, count_quadratic_terms(slack_qubo)
