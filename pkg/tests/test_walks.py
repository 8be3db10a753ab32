"""Ball-walk kernels: trajectory equivalence, draw accounting, soundness."""

import math

import numpy as np
import pytest

from volumetrica.bodies import Cube, Polytope
from volumetrica.rng import RngStream
from volumetrica.verify import random_polytope
from volumetrica.walks import (
    ConstraintLedger,
    ball_proposal,
    ball_walk,
    default_step_size,
    polytope_ball_walk_amortized,
    polytope_ball_walk_batched,
)


class TestDefaultStepSize:
    def test_values(self):
        assert default_step_size(1) == pytest.approx(1.0)
        assert default_step_size(4) == pytest.approx(0.5)
        assert default_step_size(100) == pytest.approx(0.1)

    def test_rejects_bad_dim(self):
        with pytest.raises(ValueError):
            default_step_size(0)


class TestBallWalkBasics:
    def test_huge_step_all_rejected(self):
        n = 3
        cube = Cube(n)
        state = ball_walk(cube, np.zeros(n), 10.0 * math.sqrt(n), 50, RngStream(0))
        assert np.array_equal(state.x, np.zeros(n))
        assert state.rejected == 50

    def test_zero_steps_identity(self):
        state = ball_walk(Cube(2), np.zeros(2), 0.4, 0, RngStream(1))
        assert np.array_equal(state.x, np.zeros(2))
        assert state.rejected == 0

    def test_start_outside_rejected(self):
        with pytest.raises(ValueError):
            ball_walk(Cube(2), np.array([2.0, 0.0]), 0.4, 10, RngStream(0))

    def test_draw_count_exact(self):
        n = 4
        for delta in (0.01, 0.5, 50.0):  # near-all-accept to all-reject
            rng = RngStream(7)
            ball_walk(Cube(n), np.zeros(n), delta, 123, rng)
            assert rng.draws == 123 * (n + 1)

    def test_feasible_after_every_step(self):
        cube = Cube(3)
        trace = []
        ball_walk(cube, np.zeros(3), 0.6, 500, RngStream(3), trace=trace)
        for _, _, x in trace:
            assert np.all(np.abs(x) <= 1.0)

    def test_stationary_covariance_cube2(self):
        # thinned trajectory moments against the analytic (1/3)I
        n, N, thin = 2, 100_000, 10
        rng = RngStream(42)
        cube = Cube(n)
        x = np.zeros(n)
        pts = []
        state = None
        for i in range(N // thin):
            state = ball_walk(cube, x, 0.4, thin, rng)
            x = state.x
            pts.append(x.copy())
        X = np.array(pts)
        assert np.linalg.norm(X.mean(axis=0)) <= 0.05
        C = np.cov(X.T)
        assert np.all(np.abs(C - np.eye(n) / 3.0) <= 0.15 / 3.0)


class TestBatchedEquivalence:
    def test_cube_accounting(self):
        state = polytope_ball_walk_batched(Cube(3), np.zeros(3), 0.1, 100, RngStream(5))
        assert state.steps_taken == 100
        assert state.accepted + state.rejected == 100
        assert np.all(Cube(3).A @ state.x <= Cube(3).b)

    def test_exact_match_with_naive(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            P, _ = random_polytope(int(rng.integers(2, 7)), rng)
            delta = default_step_size(P.dim)
            s1 = ball_walk(P, np.zeros(P.dim), delta, 400, RngStream(seed))
            s2 = polytope_ball_walk_batched(P, np.zeros(P.dim), delta, 400,
                                            RngStream(seed), block=64)
            assert np.array_equal(s1.x, s2.x)
            assert s1.rejected == s2.rejected

    def test_draw_count_exact(self):
        n = 5
        rng = RngStream(9)
        polytope_ball_walk_batched(Cube(n), np.zeros(n), 0.3, 77, rng)
        assert rng.draws == 77 * (n + 1)


class TestAmortized:
    def test_far_boundary_skips_checks(self):
        # one facet at distance 100, delta 0.01: no checks for ~1e4 steps
        P = Polytope(np.array([[1.0, 0.0]]), np.array([100.0]),
                     inner_radius=100.0, outer_radius=1000.0)
        N = 5000
        state = polytope_ball_walk_amortized(P, np.zeros(2), 0.01, 50.0, N,
                                             RngStream(0))
        assert state.checks_per_constraint[0] == 0

    def test_exact_match_with_capped_naive(self):
        for seed in range(10):
            rng = np.random.default_rng(100 + seed)
            P, r = random_polytope(int(rng.integers(2, 7)), rng)
            delta = default_step_size(P.dim)
            rho = 3.0 * r * math.sqrt(P.dim)
            s1 = ball_walk(P, np.zeros(P.dim), delta, 300, RngStream(seed),
                           radius_cap=rho)
            s2 = polytope_ball_walk_amortized(P, np.zeros(P.dim), delta, rho,
                                              300, RngStream(seed))
            s3 = polytope_ball_walk_amortized(P, np.zeros(P.dim), delta, rho,
                                              300, RngStream(seed),
                                              mode="probabilistic-slack")
            assert np.array_equal(s1.x, s2.x)
            assert np.array_equal(s1.x, s3.x)
            assert s1.rejected == s2.rejected == s3.rejected

    def test_draw_count_exact(self):
        n = 3
        rng = RngStream(4)
        polytope_ball_walk_amortized(Cube(n), np.zeros(n), 0.2, 5.0, 64, rng)
        assert rng.draws == 64 * (n + 1)

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            polytope_ball_walk_amortized(Cube(2), np.zeros(2), 0.1, -1.0, 5,
                                         RngStream(0))
        with pytest.raises(ValueError):
            polytope_ball_walk_amortized(Cube(2), np.zeros(2), 0.1, 5.0, 5,
                                         RngStream(0), mode="nonsense")

    def test_checks_trend_under_delta_halving(self):
        # halving delta should roughly halve the mean per-facet check
        # count (rate-limited schedule)
        rng = np.random.default_rng(2)
        A = rng.standard_normal((20, 10))
        A /= np.linalg.norm(A, axis=1, keepdims=True)
        P = Polytope(A, np.full(20, 2.0), inner_radius=2.0,
                     outer_radius=2.0 * math.sqrt(10) * 4)
        rho = 6.0
        N = 4000
        delta = default_step_size(10)
        means = []
        for d in (delta, delta / 2.0):
            s = polytope_ball_walk_amortized(P, np.zeros(10), d, rho, N,
                                             RngStream(11))
            means.append(s.checks_per_constraint.mean() / N)
        ratio = means[1] / means[0]
        assert 0.3 <= ratio <= 0.7

    def test_ledger_soundness_during_walk(self):
        # replay a short walk and assert the deterministic bound never
        # exceeds the true normalized slack
        rng = np.random.default_rng(8)
        P, r = random_polytope(4, rng)
        A_unit = P.A / P.row_norms[:, None]
        b_unit = P.b / P.row_norms
        delta = 0.2
        ledger = ConstraintLedger.build(A_unit, b_unit, np.zeros(4), delta)
        x = np.zeros(4)
        stream = RngStream(13)
        for i in range(500):
            z = ball_proposal(stream, 4, delta)
            y = x + z
            for j in ledger.due_constraints(i):
                slack = float(b_unit[j] - A_unit[j] @ y)
                ledger.checks[j] += 1
                if slack >= 0:
                    pass
            if np.all(A_unit @ y <= b_unit) and np.linalg.norm(y) < 3.0:
                x = y
            # soundness of the decayed bounds at the current point
            true_slack = b_unit - A_unit @ x
            for j in range(A_unit.shape[0]):
                assert ledger.bound(j, i + 1) <= true_slack[j] + 1e-9
