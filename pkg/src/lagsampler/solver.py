"""Sampling-based projected subgradient ascent on the Lagrangian dual.

Each iteration samples the relaxed QUBO ``f_0 + sum_k mu_k F_k``, estimates
``<f_0>`` and ``<F_k>`` from the samples, and moves the multipliers along the
estimated subgradient ``<F_k> - C_k`` (projected onto ``mu >= 0`` for
inequality constraints).  Equality constraints use ``f_0 - sum_k nu_k F_k``
with ``nu_k <- nu_k + eta (C_k - <F_k>)``.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field

import numpy as np

from .model import ConstrainedProblem, Sense, build_relaxed_qubo
from .samplers import Sampler, SampleSet, SamplerConfig, all_energies, expectation, index_to_config

STOP_REASONS = ("t_max", "tau_min", "epsilon", "timeout")


class SubgradientVanished(ArithmeticError):
    """All constraint residuals are zero, so the step size is undefined."""


@dataclass(frozen=True)
class SolverConfig:
    tau_init: float = 0.5
    tau_min: float = 0.01
    t_max: int = 50
    epsilon: float = 0.001
    non_improve_window: int = 10
    mu_init: tuple[float, ...] | None = None
    upper_bound: float | None = None
    fisher_dual: bool = False
    time_limit: float | None = None

    def __post_init__(self):
        if not (self.tau_init > 0 and self.tau_min > 0 and self.epsilon > 0):
            raise ValueError("tau_init, tau_min and epsilon must be positive")
        if self.t_max < 1 or self.non_improve_window < 1:
            raise ValueError("t_max and non_improve_window must be >= 1")

    def replace(self, **changes) -> "SolverConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class IterationRecord:
    t: int
    mu: list[float]
    eta: float
    tau: float
    expectations: list[float]
    objective_mean: float
    violation_norm: float
    best_feasible_value: float | None
    dual_value: float

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class SolverState:
    mu: np.ndarray
    tau: float
    iteration: int = 0
    best_config: np.ndarray | None = None
    best_value: float | None = None
    non_improve_count: int = 0
    halvings: int = 0
    history: list[IterationRecord] = field(default_factory=list)

    @property
    def best_feasible(self) -> tuple[np.ndarray, float] | None:
        if self.best_config is None:
            return None
        return self.best_config, self.best_value


@dataclass
class SolveResult:
    best_config: np.ndarray | None
    best_value: float | None
    mu: np.ndarray
    stop_reason: str
    history: list[IterationRecord]
    iterations: int
    wall_time: float
    last_expectations: np.ndarray | None = None

    @property
    def feasible(self) -> bool:
        return self.best_config is not None

    def to_json(self) -> dict:
        return {
            "best_config": None if self.best_config is None else self.best_config.astype(int).tolist(),
            "best_value": self.best_value,
            "mu": self.mu.tolist(),
            "stop_reason": self.stop_reason,
            "iterations": self.iterations,
            "wall_time": self.wall_time,
            "history": [
                {
                    "t": h.t,
                    "mu": h.mu,
                    "eta": h.eta,
                    "tau": h.tau,
                    "expectations": h.expectations,
                    "objective_mean": h.objective_mean,
                    "violation_norm": h.violation_norm,
                    "best_feasible_value": h.best_feasible_value,
                    "dual_value": h.dual_value,
                }
                for h in self.history
            ],
        }


def _signs(senses) -> np.ndarray:
    return np.array([-1.0 if s is Sense.EQUAL else 1.0 for s in senses])


def step_size(
    tau: float,
    objective_mean: float,
    expectations,
    bounds,
    upper_bound: float,
    mu=None,
    senses=None,
) -> float:
    """Step size ``tau (UB - {<f_0> + sum_k (<F_k> - C_k)}) / sum_k (<F_k> - C_k)^2``.

    With ``mu`` given, the residual sum in the numerator is weighted by the
    signed multipliers, i.e. the numerator becomes ``UB - L(mu)``.
    Raises :class:`SubgradientVanished` if every residual is zero.
    """
    residual = np.asarray(expectations, dtype=np.float64) - np.asarray(bounds, dtype=np.float64)
    denom = float(residual @ residual)
    if denom == 0.0:
        raise SubgradientVanished("subgradient vanished")
    if mu is None:
        penalty = float(residual.sum())
    else:
        signs = np.ones(residual.shape[0]) if senses is None else _signs(senses)
        penalty = float((signs * np.asarray(mu, dtype=np.float64)) @ residual)
    return tau * (upper_bound - (objective_mean + penalty)) / denom


def update_multipliers(mu, eta: float, expectations, bounds, senses=None) -> np.ndarray:
    """One multiplier step.

    Inequality: ``mu_k <- max(0, mu_k + eta (<F_k> - C_k))``.
    Equality:   ``nu_k <- nu_k + eta (C_k - <F_k>)``.
    """
    mu = np.asarray(mu, dtype=np.float64)
    residual = np.asarray(expectations, dtype=np.float64) - np.asarray(bounds, dtype=np.float64)
    if senses is None:
        senses = (Sense.LESS_EQUAL,) * mu.shape[0]
    out = np.empty_like(mu)
    for k, sense in enumerate(senses):
        if sense is Sense.EQUAL:
            out[k] = mu[k] - eta * residual[k]
        else:
            out[k] = max(0.0, mu[k] + eta * residual[k])
    return out


def dual_value(objective_mean: float, expectations, bounds, mu, senses) -> float:
    """``<f_0> + sum_k mu_k (<F_k> - C_k)`` with equality multipliers entering negatively."""
    residual = np.asarray(expectations, dtype=np.float64) - np.asarray(bounds, dtype=np.float64)
    return float(objective_mean + (_signs(senses) * np.asarray(mu)) @ residual)


def _scan_feasible(problem: ConstrainedProblem, samples: SampleSet) -> tuple[np.ndarray, float] | None:
    """Lowest-objective feasible sample; ties go to the lexicographically smallest row."""
    mask = problem.feasible_mask(samples.configs)
    if not mask.any():
        return None
    configs = samples.configs[mask]
    values = problem.objective.energies(configs)
    best = values.min()
    tied = configs[values == best]
    order = np.lexsort(tied.T[::-1])
    return tied[order[0]].copy(), float(best)


def _iterate(problem, draw, config: SolverConfig, upper_bound: float) -> SolveResult:
    start = time.perf_counter()
    k = problem.num_constraints
    mu0 = np.zeros(k) if config.mu_init is None else np.asarray(config.mu_init, dtype=np.float64)
    if mu0.shape != (k,):
        raise ValueError(f"mu_init needs {k} entries")
    state = SolverState(mu=mu0.copy(), tau=config.tau_init)
    bounds = problem.bounds
    stop = None
    expectations = None
    t = 1
    while True:
        state.iteration = t
        relaxed = build_relaxed_qubo(problem, state.mu)
        samples = draw(relaxed, t, state.mu)
        objective_mean = expectation(samples, problem.objective)
        expectations = np.array([expectation(samples, c) for c in problem.constraints])
        residual = expectations - bounds
        violation = float(np.sqrt(residual @ residual))

        improved = False
        found = _scan_feasible(problem, samples)
        if found is not None and (state.best_value is None or found[1] < state.best_value):
            state.best_config, state.best_value = found
            improved = True

        mu_before = state.mu.copy()
        tau_used = state.tau
        try:
            eta = step_size(
                state.tau,
                objective_mean,
                expectations,
                bounds,
                upper_bound,
                mu=state.mu if config.fisher_dual else None,
                senses=problem.senses,
            )
        except SubgradientVanished:
            eta = 0.0
        # a negative step would move against the subgradient
        eta = abs(eta)
        if violation >= config.epsilon:
            state.mu = update_multipliers(state.mu, eta, expectations, bounds, problem.senses)

        state.history.append(
            IterationRecord(
                t=t,
                mu=mu_before.tolist(),
                eta=eta,
                tau=tau_used,
                expectations=expectations.tolist(),
                objective_mean=objective_mean,
                violation_norm=violation,
                best_feasible_value=state.best_value,
                dual_value=dual_value(objective_mean, expectations, bounds, mu_before, problem.senses),
            )
        )

        if violation < config.epsilon:
            stop = "epsilon"
            break

        if improved:
            state.non_improve_count = 0
        else:
            state.non_improve_count += 1
            if state.non_improve_count >= config.non_improve_window:
                state.tau *= 0.5
                state.halvings += 1
                state.non_improve_count = 0
        if state.tau < config.tau_min:
            stop = "tau_min"
            break
        if t + 1 > config.t_max:
            stop = "t_max"
            break
        if config.time_limit is not None and time.perf_counter() - start > config.time_limit:
            stop = "timeout"
            break
        t += 1

    return SolveResult(
        best_config=state.best_config,
        best_value=state.best_value,
        mu=state.mu,
        stop_reason=stop,
        history=state.history,
        iterations=t,
        wall_time=time.perf_counter() - start,
        last_expectations=expectations,
    )


def _resolve_upper_bound(problem: ConstrainedProblem, config: SolverConfig, instance=None) -> float:
    if config.upper_bound is not None:
        return float(config.upper_bound)
    if instance is not None:
        from .qkp import greedy

        return -float(greedy(instance)[1])
    raise ValueError("an upper bound on the objective is required (pass upper_bound or a QKP instance)")


def solve(
    problem: ConstrainedProblem,
    sampler: Sampler,
    sampler_config: SamplerConfig,
    config: SolverConfig = SolverConfig(),
    instance=None,
) -> SolveResult:
    """Run the sampling-based multiplier iteration.

    The sampler is reseeded each iteration from ``(sampler_config.seed, t)``.
    When ``config.upper_bound`` is None and ``instance`` is a QKP instance, the
    greedy solution supplies the bound.
    """
    upper_bound = _resolve_upper_bound(problem, config, instance)
    seeds = np.random.SeedSequence(int(sampler_config.seed)).generate_state(config.t_max + 1, dtype=np.uint32)

    def draw(relaxed, t, mu):
        return sampler(relaxed, sampler_config.replace(seed=int(seeds[t])))

    return _iterate(problem, draw, config, upper_bound)


def solve_naive(
    problem: ConstrainedProblem,
    config: SolverConfig = SolverConfig(),
    instance=None,
    minimizer: Sampler | None = None,
) -> SolveResult:
    """Same loop with expectations replaced by values at the exact relaxed minimizer."""
    upper_bound = _resolve_upper_bound(problem, config, instance)
    argmin = SamplerConfig(num_samples=1, exact_mode="argmin")
    if minimizer is not None:
        def draw(relaxed, t, mu):
            return minimizer(relaxed, argmin)
    else:
        # relaxed energies are affine in mu, so enumerate each form once
        base = all_energies(problem.objective)
        forms = np.stack([all_energies(c) for c in problem.constraints])
        signs = _signs(problem.senses)

        def draw(relaxed, t, mu):
            energies = base + (signs * mu) @ forms
            k = int(np.argmin(energies))
            return SampleSet(index_to_config(k, problem.n)[None, :], energies[k:k + 1], np.array([1]))

    return _iterate(problem, draw, config, upper_bound)


@dataclass
class KktReport:
    multiplier_ok: np.ndarray
    violation: np.ndarray
    slack: np.ndarray
    residual: np.ndarray

    @property
    def all_ok(self) -> bool:
        return bool(self.multiplier_ok.all())

    def to_json(self) -> dict:
        return {k: np.asarray(v).tolist() for k, v in dataclasses.asdict(self).items()}


def kkt_report(problem: ConstrainedProblem, mu, expectations) -> KktReport:
    """Complementary-slackness diagnostics at the final multipliers.

    Per constraint: sign check on ``mu_k``, primal violation
    ``max(0, <F_k> - C_k)``, slack ``xi_k = max(0, C_k - <F_k>)`` and the
    residual ``|mu_k (xi_k - C_k + <F_k>)|``.
    """
    mu = np.asarray(mu, dtype=np.float64)
    f = np.asarray(expectations, dtype=np.float64)
    c = problem.bounds
    ineq = np.array([s is Sense.LESS_EQUAL for s in problem.senses])
    slack = np.maximum(0.0, c - f)
    return KktReport(
        multiplier_ok=np.where(ineq, mu >= 0, True),
        violation=np.maximum(0.0, f - c),
        slack=slack,
        residual=np.abs(mu * (slack - c + f)),
    )


def tau_schedule_from_history(history: list[IterationRecord], tau_init: float, window: int) -> list[float]:
    """Replay the halving rule from best-feasible values alone (used for auditing runs)."""
    taus = []
    tau = tau_init
    count = 0
    best = None
    for rec in history:
        taus.append(tau)
        value = rec.best_feasible_value
        if value is not None and (best is None or value < best):
            best = value
            count = 0
        else:
            count += 1
            if count >= window:
                tau *= 0.5
                count = 0
    return taus
