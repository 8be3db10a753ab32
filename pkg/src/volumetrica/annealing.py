"""Gaussian-cooling sampling and volume estimation for well-rounded bodies.

A sequence of Gaussians N(0, sigma^2 I) restricted to the body, starting
from a variance small enough that the Gaussian essentially lives inside
the body's inner ball, flattening towards the uniform distribution.
Consecutive phase ratios telescope into the volume; the first phase has
a closed form (2 pi sigma0^2)^(n/2) corrected by the measured
rejection acceptance.

Sampling runs many independent chains in lock-step on (C, n) arrays;
phase-to-phase warm starts keep per-phase burn-in short.  Ratio standard
errors are computed across chains, which are genuinely independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from volumetrica.bodies import ConvexBody
from volumetrica.errors import SamplingFailureError


@dataclass
class GaussianPhase:
    sigma2: float                 # math.inf marks the terminal uniform phase
    step_budget: int
    delta: float


@dataclass
class CoolingSchedule:
    phases: list

    @property
    def gaussian_phases(self):
        return [p for p in self.phases if math.isfinite(p.sigma2)]


@dataclass
class RatioEstimate:
    ratio: float
    samples_used: int
    phase_index: int
    rel_stderr: float


@dataclass
class AnnealConfig:
    chains: int = 64
    c_delta: float = 1.2
    burn_base: int = 16
    burn_per_dim: int = 4
    thin_divisor: int = 2          # thin = max(1, n // thin_divisor)
    samples_per_phase: int | None = None   # default 8/eps^2 * sqrt(n)
    sample_cap: int = 200_000
    max_phases: int = 5000
    init_draw_batch: int = 4096
    min_init_draws: int = 4096
    sigma0_shrink: float = 1.0     # extra shrink on r^2/(4n) for tests

    def burn_steps(self, n: int) -> int:
        return self.burn_base + self.burn_per_dim * n

    def thin(self, n: int) -> int:
        return max(1, n // self.thin_divisor)


def build_schedule(n: int, r_in: float, R_out: float,
                   cfg: AnnealConfig | None = None) -> CoolingSchedule:
    """Variance ladder from r_in^2/(4n) to the uniform target.

    Growth factor 1 + sigma/sqrt(n) while sigma^2 < 1, then
    1 + 1/sqrt(n), then plain doubling once sigma^2 >= R_out^2; the
    uniform phase starts at sigma^2 >= 4 R_out^2.  This keeps the
    per-phase log-weight spread at ~1/2 or below throughout.
    """
    cfg = cfg or AnnealConfig()
    if r_in <= 0 or R_out < r_in:
        raise ValueError(f"bad rounding bounds r={r_in}, R={R_out}")
    sqn = math.sqrt(n)
    sigma2 = (r_in * r_in) / (4.0 * n) * cfg.sigma0_shrink
    target = 4.0 * R_out * R_out
    phases = []
    while True:
        delta = cfg.c_delta * min(math.sqrt(sigma2), 1.0) / sqn
        phases.append(GaussianPhase(sigma2=sigma2, step_budget=0, delta=delta))
        if sigma2 >= target:
            break
        if len(phases) > cfg.max_phases:
            raise SamplingFailureError(
                f"cooling schedule exceeded {cfg.max_phases} phases",
                phase_log=[p.sigma2 for p in phases[:50]])
        if sigma2 < 1.0:
            factor = 1.0 + math.sqrt(sigma2) / sqn
        elif sigma2 < R_out * R_out:
            factor = 1.0 + 1.0 / sqn
        else:
            factor = 2.0
        sigma2 = min(sigma2 * factor, target)
    phases.append(GaussianPhase(sigma2=math.inf, step_budget=0,
                                delta=cfg.c_delta / sqn))
    return CoolingSchedule(phases=phases)


class ChainEnsemble:
    """C independent ball-walk chains advanced in lock-step."""

    def __init__(self, body: ConvexBody, chains: int, gen: np.random.Generator,
                 cfg: AnnealConfig):
        self.body = body
        self.C = chains
        self.gen = gen
        self.cfg = cfg
        self.X = None
        self.sq = None            # cached squared norms of X rows
        self.init_acceptance = None

    def init_gaussian(self, sigma2: float):
        """Rejection-sample chain states from N(0, sigma2 I) restricted to the body.

        Also records the overall acceptance fraction, which corrects the
        closed-form first-phase integral.
        """
        n = self.body.dim
        sd = math.sqrt(sigma2)
        accepted = []
        total = 0
        hits = 0
        need_draws = max(self.cfg.min_init_draws, 4 * self.C)
        while len(accepted) < self.C or total < need_draws:
            batch = self.cfg.init_draw_batch
            Y = self.gen.standard_normal((batch, n)) * sd
            inside = self.body.contains_batch(Y)
            total += batch
            hits += int(inside.sum())
            for y in Y[inside]:
                if len(accepted) < self.C:
                    accepted.append(y)
            if total > 10_000_000:
                raise SamplingFailureError(
                    "initial Gaussian rejection never hits the body; "
                    "inner-ball declaration is likely wrong")
        self.X = np.array(accepted)
        self.sq = np.einsum("ij,ij->i", self.X, self.X)
        self.init_acceptance = (hits, total)
        return hits / total

    def step(self, sigma2: float, delta: float, steps: int):
        """Vectorized Metropolis ball-walk steps towards the phase target."""
        n = self.body.dim
        inv2s = 0.0 if math.isinf(sigma2) else 1.0 / (2.0 * sigma2)
        for _ in range(steps):
            G = self.gen.standard_normal((self.C, n))
            u = self.gen.random(self.C)
            norms = np.linalg.norm(G, axis=1)
            Y = self.X + G * (delta * u[:, None] ** (1.0 / n) / norms[:, None])
            inside = self.body.contains_batch(Y)
            if inv2s > 0.0:
                sq_y = np.einsum("ij,ij->i", Y, Y)
                logu = np.log(self.gen.random(self.C))
                accept = inside & (logu <= (self.sq - sq_y) * inv2s)
            else:
                sq_y = np.einsum("ij,ij->i", Y, Y)
                accept = inside
            self.X[accept] = Y[accept]
            self.sq[accept] = sq_y[accept]

    def harvest(self, sigma2: float, delta: float, count: int, thin: int):
        """Collect ``count`` thinned states (C per round, thin steps apart)."""
        rounds = int(math.ceil(count / self.C))
        out = np.empty((rounds * self.C, self.body.dim))
        for r in range(rounds):
            self.step(sigma2, delta, thin)
            out[r * self.C:(r + 1) * self.C] = self.X
        return out[:count] if count < out.shape[0] else out


def run_cooling(body: ConvexBody, gen: np.random.Generator,
                cfg: AnnealConfig | None = None,
                phase_hook=None):
    """Advance an ensemble through all Gaussian phases.

    ``phase_hook(i, phase, ensemble)`` runs after each phase's burn-in
    (the volume estimator harvests ratio samples there).  Returns the
    ensemble positioned at the last Gaussian phase.
    """
    cfg = cfg or AnnealConfig()
    schedule = build_schedule(body.dim, body.inner_radius, body.outer_radius, cfg)
    ens = ChainEnsemble(body, cfg.chains, gen, cfg)
    gphases = schedule.gaussian_phases
    ens.init_gaussian(gphases[0].sigma2)
    burn = cfg.burn_steps(body.dim)
    for i, phase in enumerate(gphases):
        ens.step(phase.sigma2, phase.delta, burn)
        if phase_hook is not None:
            phase_hook(i, phase, ens)
    return ens, schedule


def sample_well_rounded(body: ConvexBody, n_samples: int,
                        gen: np.random.Generator,
                        cfg: AnnealConfig | None = None,
                        return_ensemble: bool = False):
    """Approximately uniform samples on a well-rounded body.

    The first point costs a full cooling run; the remaining points reuse
    the warm chains at the terminal uniform phase.
    """
    cfg = cfg or AnnealConfig()
    ens, schedule = run_cooling(body, gen, cfg)
    uniform = schedule.phases[-1]
    ens.step(uniform.sigma2, uniform.delta, cfg.burn_steps(body.dim))
    samples = ens.harvest(uniform.sigma2, uniform.delta, n_samples, cfg.thin(body.dim))
    if return_ensemble:
        return samples, ens, uniform
    return samples


class UniformChainSampler:
    """Warm uniform chains that hand out batches of thinned samples."""

    def __init__(self, body: ConvexBody, gen: np.random.Generator,
                 cfg: AnnealConfig | None = None):
        self.cfg = cfg or AnnealConfig()
        self.body = body
        _, self.ens, self.phase = sample_well_rounded(
            body, self.cfg.chains, gen, self.cfg, return_ensemble=True)

    def draw(self, count: int, thin: int | None = None) -> np.ndarray:
        return self.ens.harvest(self.phase.sigma2, self.phase.delta, count,
                                self.cfg.thin(self.body.dim) if thin is None else thin)

    def apply_linear(self, M: np.ndarray, new_body: ConvexBody):
        """Retarget the warm chains after the body is transformed by y -> My.

        Uniformity is preserved exactly: mapping uniform samples on the old
        image through M gives uniform samples on the new image.
        """
        self.body = new_body
        self.ens.body = new_body
        self.ens.X = self.ens.X @ np.asarray(M, dtype=float).T
        self.ens.sq = np.einsum("ij,ij->i", self.ens.X, self.ens.X)

    @property
    def state(self) -> np.ndarray:
        return self.ens.X.copy()


def _phase_ratio(samples: np.ndarray, sigma2_cur: float, sigma2_next: float,
                 chains: int):
    """Telescoping ratio E[exp(||x||^2/2 (1/s_i^2 - 1/s_{i+1}^2))].

    For the terminal handoff to the flat target pass sigma2_next=inf.
    stderr is computed across per-chain means (samples are harvested
    round-by-round, C chains per round).
    """
    sq = np.einsum("ij,ij->i", samples, samples)
    rate = 0.5 * (1.0 / sigma2_cur - (0.0 if math.isinf(sigma2_next) else 1.0 / sigma2_next))
    w = np.exp(sq * rate)
    mean = float(w.mean())
    rounds = len(w) // chains
    if rounds >= 2:
        chain_means = w[:rounds * chains].reshape(rounds, chains).mean(axis=0)
        stderr = float(chain_means.std(ddof=1) / math.sqrt(chains))
    else:
        stderr = float(w.std(ddof=1) / math.sqrt(len(w)))
    return mean, stderr / max(mean, np.finfo(float).tiny)


def volume_well_rounded(body: ConvexBody, eps: float,
                        gen: np.random.Generator,
                        cfg: AnnealConfig | None = None):
    """Volume estimate with target relative standard deviation <= eps/2.

    Returns (volume, report dict).  Log-domain arithmetic throughout.
    """
    cfg = cfg or AnnealConfig()
    n = body.dim
    schedule = build_schedule(n, body.inner_radius, body.outer_radius, cfg)
    gphases = schedule.gaussian_phases
    P = len(gphases)
    m0 = cfg.samples_per_phase or int(math.ceil(8.0 / (eps * eps) * math.sqrt(n)))
    target_rel = (eps / 2.0) / math.sqrt(P)
    thin = cfg.thin(n)

    ens = ChainEnsemble(body, cfg.chains, gen, cfg)
    p_accept = ens.init_gaussian(gphases[0].sigma2)
    log_volume = 0.5 * n * math.log(2.0 * math.pi * gphases[0].sigma2) + math.log(p_accept)
    burn = cfg.burn_steps(n)
    phase_log = []
    ratios = []
    total_rel_var = 0.0
    for i, phase in enumerate(gphases):
        sigma2_next = gphases[i + 1].sigma2 if i + 1 < P else math.inf
        ens.step(phase.sigma2, phase.delta, burn)
        m = m0
        samples = ens.harvest(phase.sigma2, phase.delta, m, thin)
        ratio, rel_se = _phase_ratio(samples, phase.sigma2, sigma2_next, cfg.chains)
        while rel_se > target_rel and m < cfg.sample_cap:
            extra = ens.harvest(phase.sigma2, phase.delta, m, thin)
            samples = np.vstack([samples, extra])
            m = samples.shape[0]
            ratio, rel_se = _phase_ratio(samples, phase.sigma2, sigma2_next, cfg.chains)
        if rel_se > 4.0 * target_rel:
            raise SamplingFailureError(
                f"phase {i} ratio stderr {rel_se:.3g} above threshold at the "
                f"sample cap", phase_log=phase_log)
        log_volume += math.log(ratio)
        ratios.append(RatioEstimate(ratio=ratio, samples_used=m, phase_index=i,
                                    rel_stderr=rel_se))
        total_rel_var += rel_se * rel_se
        phase_log.append({"phase": i, "sigma2": phase.sigma2, "samples": m,
                          "ratio": ratio, "stderr": rel_se * ratio,
                          "queries": body.query_counter})
    report = {
        "log_volume": log_volume,
        "phases": P,
        "ratios": ratios,
        "phase_log": phase_log,
        "rel_stderr_total": math.sqrt(total_rel_var),
        "init_acceptance": p_accept,
        "queries": body.query_counter,
    }
    return math.exp(log_volume), report
