"""Rounding a convex body to near-isotropic position.

Two nested loops.  The inner loop (isotropize) assumes a well-rounded
image, repeatedly estimates the covariance from warm uniform samples and
doubles the low-variance eigenspace, then whitens with a final fresh
covariance.  The outer loop (iterative_isotropization) applies the inner
loop to the body intersected with balls of doubling radius, so that each
slice the inner loop sees is already well-rounded by induction.

All transform bookkeeping lives in a single AffineMap from original to
working coordinates; mean shifts are pulled back through the map so the
working origin tracks the body's center of mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from volumetrica.annealing import AnnealConfig, UniformChainSampler
from volumetrica.bodies import (
    AffineMap,
    BallIntersectedBody,
    ConvexBody,
    Polytope,
    TransformedBody,
    certified_inner_radius,
)
from volumetrica.covariance import (
    final_isotropy_estimate,
    low_eigenspace_projection,
    split_sample_covariance,
)
from volumetrica.errors import InvariantViolationError

# Exact certificates invoke polytope facet arithmetic or the ellipsoid
# inradius; both are exact up to machine rounding, so the invariant
# assertion allows only a relative epsilon, never a statistical margin.
_CERT_RTOL = 1e-9


@dataclass
class IsotropizeConfig:
    """Knobs for the eigenvalue-scaling inner loop.

    practical mode clamps the schedule formulas so they stay meaningful
    at small n (the asymptotic forms are degenerate below n ~ 16) and
    uses a cube-log sample count; paper mode keeps the literal budgets.
    """

    c_samples: float = 64.0
    log_exponent: float = 3.0
    stop_constant: float = 2.0 ** 10
    eigen_alpha: float = 0.0          # eigen threshold lam = n / r**alpha
    r_init: float = 0.25
    c_N: float = 150.0
    c_mix: float = 0.05               # steps_per_sample = c_mix * n^2 * trace_proxy / r^2
    c_wr: float = 40.0
    # the whitening estimate is correlation-limited, not count-limited;
    # stretching the final harvest thinning buys accuracy cheaply
    final_thin_scale: float = 8.0
    log_floor: float = 16.0
    growth_min: float = 1.5
    growth_max: float = 1.999
    max_iterations: int = 200
    mode: str = "practical"
    # rounding leans on covariance accuracy more than ratio variance, so
    # it defaults to a wider ensemble than the volume stage
    anneal: AnnealConfig = field(default_factory=lambda: AnnealConfig(chains=256))

    def __post_init__(self):
        if self.c_samples <= 0:
            raise ValueError("sample constant must be positive")
        if not 0.0 <= self.eigen_alpha <= 2.0:
            raise ValueError("eigen threshold exponent out of range [0, 2]")
        if self.mode == "paper":
            self.log_exponent = 5.0
            self.log_floor = 1.0 + 1e-9

    def log_n(self, n: int) -> float:
        return math.log(max(float(n), self.log_floor))

    def growth_factor(self, n: int) -> float:
        g = 2.0 * (1.0 - 1.0 / self.log_n(n))
        return min(max(g, self.growth_min), self.growth_max)

    def sample_count(self, n: int, r: float) -> int:
        k = math.ceil(self.c_samples * r * r * self.log_n(n) ** self.log_exponent)
        return max(int(k), 8)

    def keep_going(self, n: int, r: float) -> bool:
        return self.stop_constant * r * r * self.log_n(n) ** 2 <= n

    def mix_thin(self, n: int, r: float, trace_proxy: float) -> int:
        base = self.anneal.thin(n)
        budget = math.ceil(self.c_mix * n * n * trace_proxy / (r * r))
        return max(base, int(budget))


def paper_config(**overrides) -> IsotropizeConfig:
    return IsotropizeConfig(mode="paper", **overrides)


@dataclass
class TraceRow:
    phase: int
    t: float
    iteration: int
    r: float
    k: int
    rank_p: int
    trace_cov: float
    cert_r: float
    queries: int

    def format(self) -> str:
        return (f"{self.phase} {self.t:.12g} {self.iteration} {self.r:.12g} "
                f"{self.k} {self.rank_p} {self.trace_cov:.12g} {self.queries}")


@dataclass
class RoundingTrace:
    rows: list = field(default_factory=list)
    phase_ts: list = field(default_factory=list)
    log_det_factors: list = field(default_factory=list)  # (label, value)

    def add_row(self, row: TraceRow):
        if self.rows and row.phase == self.rows[-1].phase:
            if row.r <= self.rows[-1].r:
                raise InvariantViolationError("inner radius must strictly increase",
                                              trace=self)
            if row.queries < self.rows[-1].queries:
                raise InvariantViolationError("query counter went backwards",
                                              trace=self)
        self.rows.append(row)

    def add_log_det(self, label: str, value: float):
        self.log_det_factors.append((label, float(value)))

    @property
    def total_log_det(self) -> float:
        return float(sum(v for _, v in self.log_det_factors))

    def format_rows(self) -> str:
        return "\n".join(row.format() for row in self.rows)


def _root_body(body: ConvexBody) -> ConvexBody:
    while isinstance(body, (BallIntersectedBody, TransformedBody)):
        body = body.base
    return body


def _is_polytope_chain(body: ConvexBody) -> bool:
    """True when every layer of the body admits an exact inradius certificate."""
    while isinstance(body, (BallIntersectedBody, TransformedBody)):
        body = body.base
    return isinstance(body, Polytope)


def _assert_inner_ball(body: ConvexBody, amap: AffineMap, r: float,
                       trace: RoundingTrace) -> float:
    cert = certified_inner_radius(body, amap)
    if _is_polytope_chain(body) and cert < r * (1.0 - _CERT_RTOL):
        raise InvariantViolationError(
            f"inner-ball invariant violated: certified radius {cert:.6g} "
            f"below claimed {r:.6g}", trace=trace)
    return cert


def isotropize(body: ConvexBody, T0: AffineMap, cfg: IsotropizeConfig | None,
               gen: np.random.Generator, trace: RoundingTrace | None = None,
               phase: int = 0, t_value: float = 0.0):
    """Map a well-rounded body to 2-isotropic position.

    Requires B(0, 1/4) inside T0(body); checked exactly for polytope
    inputs.  Returns (x_hat, amap, trace) where amap extends T0 by the
    loop's eigenvalue-doubling factors, the mean recentering, and the
    final whitening, so amap(body) is 2-isotropic up to estimation error.
    """
    cfg = cfg or IsotropizeConfig()
    trace = trace or RoundingTrace()
    n = body.dim
    amap = T0
    r = cfg.r_init
    _assert_inner_ball(body, amap, r, trace)

    root = _root_body(body)
    handle = TransformedBody(amap, body)
    # first point via Gaussian cooling; the sampler keeps the warm chains
    sampler = UniformChainSampler(handle, gen, cfg.anneal)
    trace_proxy = 1.0
    iteration = 0
    while cfg.keep_going(n, r):
        if iteration >= cfg.max_iterations:
            raise InvariantViolationError(
                f"isotropize failed to terminate in {cfg.max_iterations} iterations",
                trace=trace)
        k = cfg.sample_count(n, r)
        thin = cfg.mix_thin(n, r, trace_proxy)
        X = sampler.draw(2 * k, thin=thin)
        est = split_sample_covariance(X)
        lam = float(n) / r ** cfg.eigen_alpha
        proj = low_eigenspace_projection(est.A_hat, lam)
        M = np.eye(n) + proj.P
        amap = amap.compose(M)
        handle = TransformedBody(amap, body)
        sampler.apply_linear(M, handle)
        r = cfg.growth_factor(n) * r
        iteration += 1
        trace_proxy = float(np.trace(est.A_hat)) / n
        cert = _assert_inner_ball(body, amap, r, trace)
        trace.add_log_det(f"phase{phase}-iter{iteration}-doubling",
                          proj.rank * math.log(2.0))
        trace.add_row(TraceRow(phase=phase, t=t_value, iteration=iteration,
                               r=r, k=k, rank_p=proj.rank,
                               trace_cov=float(np.trace(est.A_hat)),
                               cert_r=cert, queries=root.query_counter))

    final_thin = math.ceil(cfg.final_thin_scale *
                           max(2 * n, cfg.mix_thin(n, max(r, 1.0), trace_proxy)))
    x_hat, W, est = final_isotropy_estimate(
        lambda count: sampler.draw(count, thin=final_thin), n, cfg.c_N)
    amap = amap.recenter(x_hat).compose(W)
    sign, logdet_w = np.linalg.slogdet(W)
    trace.add_log_det(f"phase{phase}-whitening", logdet_w)
    return x_hat, amap, trace


def iterative_isotropization(body: ConvexBody, r: float, R: float,
                             cfg: IsotropizeConfig | None,
                             gen: np.random.Generator):
    """Round an (r, R)-rounded body via ball slices of doubling radius.

    The slice radius t runs over r, 2r, 4r, ... up to the first value
    >= R (that last slice is the whole body).  Each slice is handed to
    isotropize with the map accumulated so far; a fresh cooling run
    supplies the warm start per slice.  Returns (x, amap, trace) with x
    the final center estimate in original coordinates.
    """
    cfg = cfg or IsotropizeConfig()
    if r <= 0 or R < r:
        raise ValueError("need 0 < r <= R")
    n = body.dim
    x_init = body.inner_center
    if isinstance(body, Polytope):
        slack = body.b - body.A @ x_init
        if np.min(slack / body.row_norms) < r * (1.0 - _CERT_RTOL):
            raise InvariantViolationError(
                f"declared inner ball B(center, {r:.6g}) is not inside the polytope")

    trace = RoundingTrace()
    amap = AffineMap(np.eye(n) / r, x0=x_init)
    trace.add_log_det("initial-scaling", -n * math.log(r))

    t = r
    phase = 0
    while True:
        slice_body = BallIntersectedBody(body, t, center=x_init) if t < R else body
        _, amap, trace = isotropize(slice_body, amap, cfg, gen, trace,
                                    phase=phase, t_value=t)
        trace.phase_ts.append(t)
        if t >= R:
            break
        t *= 2.0
        phase += 1
    return amap.x0.copy(), amap, trace


def well_roundedness_check(sampler, n: int, c_wr: float = 40.0):
    """Estimate E||x - x_bar||^2 from 10n samples; pass iff <= c_wr * n."""
    X = np.asarray(sampler(10 * n), dtype=float)
    D = X - X.mean(axis=0)
    r2_hat = float(np.einsum("ij,ij->i", D, D).mean())
    return r2_hat, r2_hat <= c_wr * n
