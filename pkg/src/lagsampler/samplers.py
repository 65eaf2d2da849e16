"""Boltzmann samplers for QUBO problems.

Three backends share one signature, ``sampler(problem, config) -> SampleSet``:

* :func:`sample_mcmc`  -- independent single-flip Metropolis chains at fixed beta.
* :func:`sample_sqa`   -- simulated quantum annealing (path-integral Monte Carlo).
* :func:`sample_exact` -- enumeration; exact Boltzmann draws or the exact minimizer.
"""

from __future__ import annotations

import dataclasses
import functools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import _kernels
from .model import DimensionError, QuboProblem, qubo_to_ising

MAX_EXACT_VARIABLES = 25


class SamplerConfigError(ValueError):
    pass


class CapacityError(RuntimeError):
    """Problem is too large for an enumeration backend."""


@dataclass(frozen=True)
class SamplerConfig:
    beta: float = 0.1
    num_samples: int = 1000
    sweeps: int = 1000
    trotter: int = 2
    gamma_start: float = 10.0
    gamma_end: float = 0.1
    seed: int = 0
    # "random" slice readout keeps SQA a Boltzmann sampler; "best" is for optimization use.
    readout: str = "random"
    random_order: bool = False
    world_line: bool = True
    exact_mode: str = "boltzmann"

    def __post_init__(self):
        if not self.beta > 0:
            raise SamplerConfigError(f"beta must be positive, got {self.beta}")
        if self.num_samples < 1:
            raise SamplerConfigError("num_samples must be >= 1")
        if self.sweeps < 1:
            raise SamplerConfigError("sweeps must be >= 1")
        if self.trotter < 1:
            raise SamplerConfigError("trotter must be >= 1")
        if not (self.gamma_start > 0 and self.gamma_end > 0):
            raise SamplerConfigError("transverse field endpoints must be positive")
        if self.readout not in ("random", "best"):
            raise SamplerConfigError(f"unknown readout {self.readout!r}")
        if self.exact_mode not in ("boltzmann", "argmin"):
            raise SamplerConfigError(f"unknown exact mode {self.exact_mode!r}")

    def replace(self, **changes) -> "SamplerConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "SamplerConfig":
        """Load from a JSON or TOML file; ``overrides`` that are not None win."""
        path = Path(path)
        text = path.read_text()
        if path.suffix.lower() == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:  # Python < 3.11
                import tomli as tomllib
            data = tomllib.loads(text)
        else:
            data = json.loads(text)
        data = data.get("sampler", data)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise SamplerConfigError(f"unknown sampler settings: {sorted(unknown)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)


@dataclass(frozen=True)
class SampleSet:
    """Multiset of binary configurations with their energies and multiplicities."""

    configs: np.ndarray
    energies: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        configs = np.asarray(self.configs, dtype=np.uint8)
        if configs.ndim != 2:
            raise DimensionError("configs must be a 2-d array")
        energies = np.asarray(self.energies, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.int64)
        if energies.shape != (configs.shape[0],) or weights.shape != (configs.shape[0],):
            raise DimensionError("energies and weights need one entry per configuration")
        if np.any(weights < 1):
            raise ValueError("weights must be positive")
        object.__setattr__(self, "configs", configs)
        object.__setattr__(self, "energies", energies)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_configs(cls, problem: QuboProblem, configs: np.ndarray, weights=None) -> "SampleSet":
        configs = np.asarray(configs, dtype=np.uint8)
        if weights is None:
            weights = np.ones(configs.shape[0], dtype=np.int64)
        return cls(configs, problem.energies(configs), weights)

    @property
    def num_samples(self) -> int:
        return int(self.weights.sum())

    def __len__(self) -> int:
        return self.configs.shape[0]

    def aggregate(self) -> "SampleSet":
        """Merge duplicate rows; rows come back in lexicographic order."""
        uniq, inverse = np.unique(self.configs, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        weights = np.bincount(inverse, weights=self.weights, minlength=uniq.shape[0]).astype(np.int64)
        energies = np.zeros(uniq.shape[0])
        energies[inverse] = self.energies
        return SampleSet(uniq, energies, weights)

    def lowest(self) -> tuple[np.ndarray, float]:
        k = int(np.argmin(self.energies))
        return self.configs[k].copy(), float(self.energies[k])

    def to_json(self) -> dict:
        return {
            "configs": self.configs.astype(int).tolist(),
            "energies": self.energies.tolist(),
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "SampleSet":
        return cls(np.asarray(data["configs"]), np.asarray(data["energies"]), np.asarray(data["weights"]))


Sampler = Callable[[QuboProblem, SamplerConfig], SampleSet]


def chain_seeds(seed: int, count: int) -> np.ndarray:
    """Per-chain seeds derived from the base seed (chain ``c`` always gets the same value)."""
    return np.random.SeedSequence(int(seed)).generate_state(count, dtype=np.uint32).astype(np.int64)


def sample_mcmc(problem: QuboProblem, config: SamplerConfig) -> SampleSet:
    """Independent Metropolis chains, each recorded after ``config.sweeps`` sweeps."""
    configs = _kernels.metropolis_chains(
        np.ascontiguousarray(problem.coeffs),
        float(config.beta),
        int(config.sweeps),
        chain_seeds(config.seed, config.num_samples),
        bool(config.random_order),
    )
    return SampleSet.from_configs(problem, configs)


def gamma_schedule(config: SamplerConfig) -> np.ndarray:
    """Linear transverse-field ramp, one value per sweep."""
    if config.sweeps == 1:
        return np.array([config.gamma_end], dtype=np.float64)
    return np.linspace(config.gamma_start, config.gamma_end, config.sweeps)


def sample_sqa(problem: QuboProblem, config: SamplerConfig) -> SampleSet:
    """Simulated quantum annealing over ``config.trotter`` imaginary-time slices.

    The inter-slice coupling only drives the dynamics; reported energies are
    classical QUBO energies of the read-out slice.
    """
    ising = qubo_to_ising(problem)
    spins = _kernels.sqa_chains(
        np.ascontiguousarray(ising.couplings),
        np.ascontiguousarray(ising.fields),
        float(config.beta),
        int(config.trotter),
        gamma_schedule(config),
        chain_seeds(config.seed, config.num_samples),
        config.readout == "best",
        bool(config.world_line),
    )
    configs = ((spins.astype(np.int16) + 1) // 2).astype(np.uint8)
    return SampleSet.from_configs(problem, configs)


@functools.lru_cache(maxsize=8)
def enumerate_configs(n: int) -> np.ndarray:
    """All ``2^n`` binary rows in lexicographic order (variable 0 most significant)."""
    if n > 20:
        raise CapacityError(f"refusing to materialize 2^{n} configurations")
    idx = np.arange(2**n, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    out = ((idx[:, None] >> shifts[None, :]) & 1).astype(np.uint8)
    out.setflags(write=False)
    return out


def index_to_config(index: int, n: int) -> np.ndarray:
    return np.array([(index >> (n - 1 - i)) & 1 for i in range(n)], dtype=np.uint8)


def all_energies(problem: QuboProblem) -> np.ndarray:
    """Energy of every configuration, indexed like :func:`enumerate_configs`."""
    n = problem.n
    if n > MAX_EXACT_VARIABLES:
        raise CapacityError(f"exact enumeration supports n <= {MAX_EXACT_VARIABLES}, got {n}")
    if n <= 20:
        return problem.energies(enumerate_configs(n))
    # split into a fixed high block and an enumerated low block of 16 variables
    low = 16
    high = n - low
    x_low = enumerate_configs(low).astype(np.float64)
    q = problem.coeffs
    q_hh, q_hl, q_ll = q[:high, :high], q[:high, high:], q[high:, high:]
    e_low = np.einsum("ij,jk,ik->i", x_low, q_ll, x_low)
    out = np.empty(2**n)
    for h_idx in range(2**high):
        xh = index_to_config(h_idx, high).astype(np.float64)
        block = xh @ q_hh @ xh + 2.0 * (x_low @ (q_hl.T @ xh)) + e_low
        out[h_idx << low:(h_idx + 1) << low] = block
    return out + problem.offset


def boltzmann_probabilities(problem: QuboProblem, beta: float) -> np.ndarray:
    e = all_energies(problem)
    w = np.exp(-beta * (e - e.min()))
    return w / w.sum()


def sample_exact(problem: QuboProblem, config: SamplerConfig) -> SampleSet:
    """Enumeration backend.

    ``exact_mode="boltzmann"`` draws ``num_samples`` i.i.d. states from the exact
    Boltzmann distribution (returned aggregated); ``"argmin"`` returns the
    lexicographically smallest minimizer with weight ``num_samples``.
    """
    n = problem.n
    energies = all_energies(problem)
    if config.exact_mode == "argmin":
        k = int(np.argmin(energies))
        return SampleSet(index_to_config(k, n)[None, :], energies[k:k + 1], np.array([config.num_samples]))
    p = np.exp(-config.beta * (energies - energies.min()))
    p /= p.sum()
    rng = np.random.default_rng(config.seed)
    counts = rng.multinomial(config.num_samples, p)
    hit = np.flatnonzero(counts)
    configs = np.stack([index_to_config(int(k), n) for k in hit]) if n > 20 else enumerate_configs(n)[hit]
    return SampleSet(configs, energies[hit], counts[hit])


def expectation(samples: SampleSet, fn: QuboProblem) -> float:
    """Weight-averaged value of a quadratic form over the sample set."""
    if samples.configs.shape[1] != fn.n:
        raise DimensionError(f"samples have {samples.configs.shape[1]} variables, form has {fn.n}")
    values = fn.energies(samples.configs)
    return float(values @ samples.weights / samples.weights.sum())


def empirical_distribution(samples: SampleSet, n: int | None = None) -> np.ndarray:
    """Frequency vector over all ``2^n`` states, indexed like :func:`enumerate_configs`."""
    n = samples.configs.shape[1] if n is None else n
    powers = 1 << np.arange(n - 1, -1, -1, dtype=np.int64)
    idx = samples.configs.astype(np.int64) @ powers
    counts = np.bincount(idx, weights=samples.weights, minlength=2**n)
    return counts / counts.sum()


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return float(0.5 * np.abs(np.asarray(p) - np.asarray(q)).sum())


SAMPLERS: dict[str, Sampler] = {
    "mcmc": sample_mcmc,
    "sqa": sample_sqa,
    "exact": sample_exact,
}


def get_sampler(name: str) -> Sampler:
    try:
        return SAMPLERS[name]
    except KeyError:
        raise SamplerConfigError(f"unknown sampler {name!r}; choose from {sorted(SAMPLERS)}") from None
