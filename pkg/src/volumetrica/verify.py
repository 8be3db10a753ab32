"""Independent oracles and statistical verdicts.

Everything here is ground truth for the tests: brute-force rejection
sampling against an axis-aligned bounding box, analytic fixtures, and
the anti-concentration / minimum-eigenvalue checks.  Nothing in this
module feeds back into the estimators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from volumetrica.bodies import ConvexBody, Polytope
from volumetrica.errors import NumericalError


@dataclass
class RejectionOracle:
    """Exactly uniform samples on a body via box rejection.

    lo/hi bound the body per axis.  Restricted to n <= 8; acceptance
    rates below ~1e-4 make box rejection useless and the fixtures above
    that use analytic values instead.
    """

    body: ConvexBody
    lo: np.ndarray
    hi: np.ndarray
    batch: int = 8192
    accepted: int = 0
    proposed: int = 0

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        if np.any(self.hi <= self.lo):
            raise ValueError("degenerate bounding box")

    @classmethod
    def from_outer_radius(cls, body: ConvexBody, **kw) -> "RejectionOracle":
        """Tightest cheap box: per-axis bounds for polytopes, else the outer ball."""
        if isinstance(body, Polytope):
            lo, hi = body.axis_bounds()
            R = body.outer_radius
            lo = np.maximum(lo, -R)
            hi = np.minimum(hi, R)
            if np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)):
                return cls(body, lo, hi, **kw)
        R = body.outer_radius
        if not np.isfinite(R):
            raise NumericalError("body lacks a finite outer radius")
        return cls(body, -R * np.ones(body.dim), R * np.ones(body.dim), **kw)

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else float("nan")

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        out = np.empty((count, self.body.dim))
        have = 0
        while have < count:
            X = rng.uniform(self.lo, self.hi, size=(self.batch, self.body.dim))
            inside = self.body.contains_batch(X)
            self.proposed += self.batch
            hits = X[inside]
            self.accepted += hits.shape[0]
            take = min(count - have, hits.shape[0])
            out[have:have + take] = hits[:take]
            have += take
            if self.proposed > 200 * self.batch and self.accepted == 0:
                raise NumericalError(
                    "rejection oracle acceptance rate ~0; box far too large")
        return out


def brute_force_volume(body: ConvexBody, lo, hi, N: int,
                       rng: np.random.Generator):
    """Box-volume times hit fraction, with binomial standard error."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if N < 1000:
        raise ValueError("need N >= 1000 proposals")
    hits = 0
    done = 0
    while done < N:
        batch = min(65536, N - done)
        X = rng.uniform(lo, hi, size=(batch, body.dim))
        hits += int(body.contains_batch(X).sum())
        done += batch
    if hits == 0:
        raise NumericalError("zero acceptances; enlarge N or shrink the box")
    box_vol = float(np.prod(hi - lo))
    p = hits / N
    se = box_vol * math.sqrt(p * (1.0 - p) / N)
    return box_vol * p, se


def anti_concentration_test(sampler, a: np.ndarray, b: float, sigma_floor: float,
                            eps_grid, N: int = 20000) -> dict:
    """Check Pr[|a.x - b| <= eps] <= 2 eps / sigma + 3 stderr on a grid.

    sigma_floor must lower-bound the true std of a.x; a bound >= 1 is
    vacuous and flagged as such rather than counted as evidence.
    """
    a = np.asarray(a, dtype=float)
    if abs(np.linalg.norm(a) - 1.0) > 1e-9:
        raise ValueError("hyperplane normal must be unit length")
    X = np.asarray(sampler(N), dtype=float)
    d = np.abs(X @ a - b)
    rows = []
    ok = True
    for eps in eps_grid:
        p_hat = float(np.mean(d <= eps))
        bound = 2.0 * eps / sigma_floor
        se = math.sqrt(max(p_hat * (1.0 - p_hat), 1.0 / N) / N)
        vacuous = bound >= 1.0
        passed = vacuous or p_hat <= bound + 3.0 * se
        ok = ok and passed
        rows.append({"eps": float(eps), "p_hat": p_hat, "bound": bound,
                     "stderr": se, "vacuous": vacuous, "pass": passed})
    return {"N": N, "rows": rows, "pass": ok}


def min_eigenvalue_test(polytope: Polytope, r: float,
                        rng: np.random.Generator, N: int = 20000) -> dict:
    """Check lambda_min(cov) >= r^2/(n+1)^2 minus 3 estimation stderrs.

    r must be an exactly certified inner-ball radius.  The stderr proxy
    is the largest entrywise covariance standard error, which dominates
    the eigenvalue perturbation by Weyl's inequality.
    """
    n = polytope.dim
    oracle = RejectionOracle.from_outer_radius(polytope)
    X = oracle.sample(N, rng)
    D = X - X.mean(axis=0)
    C = (D.T @ D) / (X.shape[0] - 1)
    lam_min = float(np.linalg.eigvalsh(C).min())
    # entrywise se of a covariance entry ~ sqrt(Var(d_i d_j)/N); take the max
    prods = D[:, :, None] * D[:, None, :]
    se = float(np.max(prods.std(axis=0))) / math.sqrt(N)
    bound = r * r / (n + 1) ** 2
    passed = lam_min >= bound - 3.0 * se * n
    return {"lambda_min": lam_min, "bound": bound, "stderr": se,
            "N": N, "pass": passed}


def sampler_goodness(body: ConvexBody, sampler, N: int,
                     mean_true: np.ndarray, cov_true: np.ndarray) -> dict:
    """Moment deviations of a sampler against analytic fixture truth."""
    X = np.asarray(sampler(N), dtype=float)
    mean_err = float(np.linalg.norm(X.mean(axis=0) - mean_true))
    D = X - X.mean(axis=0)
    C = (D.T @ D) / (X.shape[0] - 1)
    cov_err = float(np.max(np.abs(C - cov_true)))
    # crude per-axis spread check against the implied standard deviation
    sd_true = np.sqrt(np.diag(cov_true))
    sd_err = float(np.max(np.abs(X.std(axis=0) - sd_true)))
    return {"N": N, "mean_norm_error": mean_err,
            "cov_entry_max_error": cov_err, "sd_max_error": sd_err}


def random_polytope(n: int, rng: np.random.Generator,
                    r_range=(0.5, 2.0)) -> tuple[Polytope, float]:
    """Random polytope with a known inner ball B(0, r), r returned.

    m in [2n, 8n] unit-normal facets tangent to the ball of random
    radius r, plus an enclosing box at 2r per axis so the body is
    always bounded regardless of how the normals fall.  The 2r closure
    keeps box-rejection acceptance above ~1e-4 through n = 8.
    """
    m = int(rng.integers(2 * n, 8 * n + 1))
    r = float(rng.uniform(*r_range))
    A = rng.standard_normal((m, n))
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    b = np.full(m, r)
    A = np.vstack([A, np.eye(n), -np.eye(n)])
    b = np.concatenate([b, np.full(2 * n, 2.0 * r)])
    return Polytope(A, b, inner_radius=r), r


def random_hyperplane(n: int, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    a = rng.standard_normal(n)
    a /= np.linalg.norm(a)
    return a, float(rng.normal(0.0, 0.1))
