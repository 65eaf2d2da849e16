"""Compiled Monte Carlo inner loops.

Every chain carries its own splitmix64 stream started from ``seeds[c]``, so
chain ``c`` depends only on its seed and results never depend on scheduling.
Reseeding numba's Mersenne Twister per chain cost more than the sweeps.
"""

import math

import numpy as np
from numba import njit, uint64

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_UNIT = 1.0 / 9007199254740992.0  # 2**-53


@njit(inline="always")
def _uniform(state):
    """Advance the stream; returns ``(state, u)`` with ``u`` uniform on [0, 1)."""
    state = state + _GOLDEN
    z = state
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    z = z ^ (z >> _S31)
    return state, (z >> _S11) * _UNIT


@njit(cache=True)
def metropolis_chains(q, beta, sweeps, seeds, random_order):
    num_chains = seeds.shape[0]
    n = q.shape[0]
    out = np.empty((num_chains, n), dtype=np.uint8)
    x = np.empty(n, dtype=np.float64)
    field = np.empty(n, dtype=np.float64)
    order = np.arange(n)
    for c in range(num_chains):
        st = uint64(seeds[c])
        for i in range(n):
            st, u = _uniform(st)
            x[i] = 1.0 if u < 0.5 else 0.0
        # field[i] = sum_{j != i} Q_ij x_j
        for i in range(n):
            acc = 0.0
            for j in range(n):
                if j != i:
                    acc += q[i, j] * x[j]
            field[i] = acc
        for _ in range(sweeps):
            if random_order:
                for k in range(n - 1, 0, -1):
                    st, u = _uniform(st)
                    m = int(u * (k + 1))
                    order[k], order[m] = order[m], order[k]
            for k in range(n):
                i = order[k]
                delta = (1.0 - 2.0 * x[i]) * (q[i, i] + 2.0 * field[i])
                st, u = _uniform(st)
                if delta <= 0.0 or u < math.exp(-beta * delta):
                    step = 1.0 - 2.0 * x[i]
                    x[i] = 1.0 - x[i]
                    for j in range(n):
                        if j != i:
                            field[j] += q[j, i] * step
        for i in range(n):
            out[c, i] = np.uint8(x[i])
    return out


@njit(cache=True)
def sqa_chains(j, h, beta, trotter, gammas, seeds, best_slice, world_line):
    """Discrete-time path-integral Monte Carlo on ``trotter`` coupled replicas.

    ``gammas`` holds the transverse field for each sweep.  Returns the
    read-out spins (+-1) per run.
    """
    num_runs = seeds.shape[0]
    n = h.shape[0]
    p = trotter
    out = np.empty((num_runs, n), dtype=np.int8)
    s = np.empty((p, n), dtype=np.float64)
    local = np.empty((p, n), dtype=np.float64)
    for r in range(num_runs):
        st = uint64(seeds[r])
        for a in range(p):
            for i in range(n):
                st, u = _uniform(st)
                s[a, i] = 1.0 if u < 0.5 else -1.0
        for a in range(p):
            for i in range(n):
                acc = h[i]
                for k in range(n):
                    acc += j[i, k] * s[a, k]
                local[a, i] = acc
        for g in gammas:
            if p > 1:
                # beta * J_perp / P with J_perp = -(P / (2 beta)) ln tanh(beta Gamma / P)
                bond = -0.5 * math.log(math.tanh(beta * g / p))
            else:
                bond = 0.0
            for a in range(p):
                up = (a + 1) % p
                down = (a - 1 + p) % p
                for i in range(n):
                    d_classical = -2.0 * s[a, i] * local[a, i]
                    d_bond = 0.0
                    if p > 1:
                        d_bond = 2.0 * bond * s[a, i] * (s[up, i] + s[down, i])
                    d_total = beta / p * d_classical + d_bond
                    st, u = _uniform(st)
                    if d_total <= 0.0 or u < math.exp(-d_total):
                        step = -2.0 * s[a, i]
                        s[a, i] = -s[a, i]
                        for k in range(n):
                            local[a, k] += j[k, i] * step
            if world_line and p > 1:
                for i in range(n):
                    d_classical = 0.0
                    for a in range(p):
                        d_classical += -2.0 * s[a, i] * local[a, i]
                    d_total = beta / p * d_classical
                    st, u = _uniform(st)
                    if d_total <= 0.0 or u < math.exp(-d_total):
                        for a in range(p):
                            step = -2.0 * s[a, i]
                            s[a, i] = -s[a, i]
                            for k in range(n):
                                local[a, k] += j[k, i] * step
        if best_slice:
            chosen = 0
            best = np.inf
            for a in range(p):
                e = 0.0
                for i in range(n):
                    e += s[a, i] * (h[i] + 0.5 * (local[a, i] - h[i]))
                if e < best:
                    best = e
                    chosen = a
        else:
            st, u = _uniform(st)
            chosen = min(int(u * p), p - 1)
        for i in range(n):
            out[r, i] = np.int8(s[chosen, i])
    return out
