import itertools
from math import ceil, comb, log2

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lagsampler import qkp
from lagsampler.model import ConstrainedProblem, QuboProblem
from lagsampler.samplers import SamplerConfig, sample_exact
from lagsampler.slack import UnsupportedConstraint, build_slack_qubo, count_comparison, slack_bits


class TestBits:
    def test_exact_cover_of_three(self):
        assert slack_bits(3) == (1, 2)

    @pytest.mark.parametrize("c", [1, 2, 5, 7, 50, 51, 64, 100, 1000])
    def test_cover_and_overshoot(self, c):
        bits = slack_bits(c)
        assert len(bits) == ceil(log2(c + 1))
        reachable = {sum(b * k for b, k in zip(combo, bits)) for combo in itertools.product((0, 1), repeat=len(bits))}
        assert set(range(c + 1)) <= reachable
        assert max(reachable) <= 2 * c
        assert all(b > 0 for b in bits)

    def test_qkp_variable_count(self):
        inst = qkp.QkpInstance(qkp.generate(8, 0.2, 1).profits, qkp.generate(8, 0.2, 1).weights, 50)
        q, enc = build_slack_qubo(qkp.to_constrained(inst))
        assert q.n == 14 and enc.num_slack_bits == 6


class TestPenaltyQubo:
    def test_energy_formula(self):
        inst = qkp.QkpInstance(np.array([[3, 1, 0], [1, 2, 2], [0, 2, 4]]), np.array([2, 3, 1]), 3)
        problem = qkp.to_constrained(inst)
        lam = 7.0
        q, enc = build_slack_qubo(problem, lam)
        coeffs = enc.bit_coefficients[0]
        for bits in itertools.product((0, 1), repeat=q.n):
            x, b = np.array(bits[:3]), np.array(bits[3:])
            expected = -inst.profit(x) + lam * (x @ inst.weights + b @ np.array(coeffs) - 3) ** 2
            assert q.energy(bits) == pytest.approx(expected)

    @pytest.mark.parametrize("seed", range(6))
    def test_large_penalty_minimizer_is_optimal(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.integers(0, 10, (3, 3))
        p = np.triu(a) + np.triu(a, 1).T
        np.fill_diagonal(p, rng.integers(1, 10, 3))
        inst = qkp.QkpInstance(p, rng.integers(1, 6, 3), int(rng.integers(2, 8)))
        lam = 1.0 + p.sum()
        q, _ = build_slack_qubo(qkp.to_constrained(inst), lam)
        x = sample_exact(q, SamplerConfig(exact_mode="argmin")).configs[0][:3]
        assert inst.is_feasible(x)
        assert inst.profit(x) == qkp.exact_solve(inst)[1]

    def test_quadratic_constraint_rejected(self):
        pair = QuboProblem.from_upper([[0, 1], [0, 0]])
        problem = ConstrainedProblem(QuboProblem(np.zeros((2, 2))), (pair,), [1])
        with pytest.raises(UnsupportedConstraint):
            build_slack_qubo(problem)


class TestCountComparison:
    def test_dense_om_terms(self):
        assert count_comparison(qkp.generate(8, 1.0, 2))[0] == 28

    def test_slack_terms_fixed_capacity(self):
        for seed in range(10):
            inst = qkp.generate(8, 0.2, seed)
            inst = qkp.QkpInstance(inst.profits, inst.weights, 50)
            assert count_comparison(inst)[1] == comb(14, 2)

    def test_sparse_average(self):
        om, sl = [], []
        for seed in range(200):
            inst = qkp.generate(8, 0.2, seed)
            inst = qkp.QkpInstance(inst.profits, inst.weights, 50)
            a, b = count_comparison(inst)
            om.append(a)
            sl.append(b)
        assert abs(np.mean(om) / 28 - 0.2) < 0.03
        assert set(sl) == {91}

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 24), st.sampled_from([0.2, 0.6, 1.0]), st.integers(0, 10**6))
    def test_slack_dominates(self, n, delta, seed):
        om, sl = count_comparison(qkp.generate(n, delta, seed))
        assert sl >= om

    @pytest.mark.parametrize("n", [8, 16])
    def test_slack_independent_of_density(self, n):
        counts = set()
        for delta in (0.2, 0.6, 1.0):
            inst = qkp.generate(n, delta, 3)
            counts.add(count_comparison(qkp.QkpInstance(inst.profits, inst.weights, 50))[1])
        assert len(counts) == 1
