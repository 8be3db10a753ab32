"""Independent checking tools: rejection oracle, brute-force volume,
anti-concentration and min-eigenvalue sanity tests."""

import math

import numpy as np
import pytest

from volumetrica.bodies import Ball, Cube, Polytope, Simplex
from volumetrica.errors import NumericalError
from volumetrica.verify import (
    RejectionOracle,
    anti_concentration_test,
    brute_force_volume,
    min_eigenvalue_test,
    random_hyperplane,
    random_polytope,
    sampler_goodness,
)


class TestRejectionOracle:
    def test_samples_inside(self):
        body = Ball(3, 1.0)
        oracle = RejectionOracle.from_outer_radius(body)
        X = oracle.sample(2000, np.random.default_rng(0))
        assert X.shape == (2000, 3)
        assert body.contains_batch(X).all()

    def test_cube_box_is_tight(self):
        # a polytope with per-axis constraints gets its exact bounding box
        body = Cube(4, 1.5)
        oracle = RejectionOracle.from_outer_radius(body)
        assert np.allclose(oracle.lo, -1.5)
        assert np.allclose(oracle.hi, 1.5)
        # every proposal lands inside: acceptance is exactly 1
        oracle.sample(3000, np.random.default_rng(1))
        assert oracle.acceptance_rate == 1.0

    def test_moments_match_analytic(self):
        body = Simplex(3)
        oracle = RejectionOracle.from_outer_radius(body)
        X = oracle.sample(30_000, np.random.default_rng(2))
        assert np.allclose(X.mean(axis=0), 0.25, atol=0.01)

    def test_zero_acceptance_guard(self):
        class Never(Ball):
            def _inside(self, x):
                return False

            def _inside_batch(self, X):
                return np.zeros(len(X), dtype=bool)

        with pytest.raises(NumericalError):
            RejectionOracle.from_outer_radius(Never(2, 1.0)).sample(
                100, np.random.default_rng(3))


class TestBruteForceVolume:
    def test_ball2(self):
        v, se = brute_force_volume(Ball(2, 1.0), [-1, -1], [1, 1], 1_000_000,
                                   np.random.default_rng(4))
        assert abs(v - math.pi) <= 3.0 * se

    def test_cube_in_own_box_exact(self):
        v, se = brute_force_volume(Cube(3), [-1] * 3, [1] * 3, 10_000,
                                   np.random.default_rng(5))
        assert v == 8.0
        assert se == 0.0

    def test_simplex3(self):
        v, se = brute_force_volume(Simplex(3), [0, 0, 0], [1, 1, 1], 500_000,
                                   np.random.default_rng(6))
        assert abs(v - 1.0 / 6.0) <= 3.0 * se

    def test_small_n_rejected(self):
        with pytest.raises(ValueError):
            brute_force_volume(Ball(2), [-1, -1], [1, 1], 10,
                               np.random.default_rng(7))


class TestAntiConcentration:
    def test_uniform_cube_passes(self):
        rng = np.random.default_rng(8)
        a = np.array([1.0, 0.0, 0.0])
        # along an axis of the cube the slab mass is exactly eps (cube
        # half-width 1, axis marginal uniform on [-1, 1]); sd is 1/sqrt(3)
        rep = anti_concentration_test(
            lambda k: rng.uniform(-1, 1, size=(k, 3)), a, 0.0,
            sigma_floor=1.0 / math.sqrt(3.0), eps_grid=[0.01, 0.05, 0.1, 0.2])
        assert rep["pass"]
        assert not any(r["vacuous"] for r in rep["rows"])

    def test_vacuous_bound_flagged(self):
        rng = np.random.default_rng(9)
        a = np.array([1.0, 0.0])
        rep = anti_concentration_test(
            lambda k: rng.uniform(-1, 1, size=(k, 2)), a, 0.0,
            sigma_floor=0.1, eps_grid=[0.3])
        assert rep["rows"][0]["vacuous"]

    def test_concentrated_sampler_fails(self):
        # all mass on the hyperplane: p_hat = 1 at every eps
        a = np.array([1.0, 0.0])
        rep = anti_concentration_test(
            lambda k: np.zeros((k, 2)), a, 0.0,
            sigma_floor=1.0, eps_grid=[0.05])
        assert not rep["pass"]

    def test_non_unit_normal_rejected(self):
        with pytest.raises(ValueError):
            anti_concentration_test(lambda k: np.zeros((k, 2)),
                                    np.array([2.0, 0.0]), 0.0, 1.0, [0.1])


class TestMinEigenvalue:
    def test_cube_clears_bound(self):
        # cov of the cube is I/3; the certified bound r^2/(n+1)^2 = 1/16
        rep = min_eigenvalue_test(Cube(3), 1.0, np.random.default_rng(10))
        assert rep["pass"]
        assert rep["lambda_min"] == pytest.approx(1.0 / 3.0, rel=0.1)
        assert rep["bound"] == pytest.approx(1.0 / 16.0)

    def test_random_polytopes_clear_bound(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            body, r = random_polytope(4, rng)
            rep = min_eigenvalue_test(body, r, rng, N=10_000)
            assert rep["pass"]


class TestSamplerGoodness:
    def test_calibrated_sampler(self):
        rng = np.random.default_rng(12)
        rep = sampler_goodness(Cube(3), lambda k: rng.uniform(-1, 1, (k, 3)),
                               50_000, np.zeros(3), np.eye(3) / 3.0)
        assert rep["mean_norm_error"] <= 0.02
        assert rep["cov_entry_max_error"] <= 0.01

    def test_broken_sampler_shows_error(self):
        rng = np.random.default_rng(13)
        # half-cube sampler against full-cube truth: mean error ~ 0.5
        rep = sampler_goodness(Cube(3), lambda k: rng.uniform(0, 1, (k, 3)),
                               50_000, np.zeros(3), np.eye(3) / 3.0)
        assert rep["mean_norm_error"] >= 0.5


class TestRandomFixtures:
    def test_random_polytope_inner_ball_exact(self):
        rng = np.random.default_rng(14)
        for n in (2, 4, 8):
            body, r = random_polytope(n, rng)
            slack = body.b / body.row_norms
            assert np.min(slack) == pytest.approx(r)
            assert body.contains(np.zeros(n))
            assert body.inner_radius == r

    def test_random_polytope_bounded(self):
        rng = np.random.default_rng(15)
        body, r = random_polytope(3, rng)
        lo, hi = body.axis_bounds()
        assert np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))
        assert np.all(hi - lo <= 4.0 * r + 1e-12)

    def test_random_hyperplane_unit(self):
        rng = np.random.default_rng(16)
        a, b = random_hyperplane(5, rng)
        assert np.linalg.norm(a) == pytest.approx(1.0)
        assert abs(b) < 1.0
