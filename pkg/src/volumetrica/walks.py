"""Ball-walk Markov chains over convex bodies.

Three trajectory-equivalent kernels over polytopes: the naive oracle
walk, a batched variant that precomputes AZ for a block of proposals,
and an amortized variant that skips constraint checks while certified
facet-distance lower bounds stay positive.  All variants consume draws
in the pinned order (n normals, then one uniform per step), so for a
fixed (seed, stream_id) they visit identical point sequences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from volumetrica.bodies import ConvexBody, Polytope
from volumetrica.errors import DimensionMismatchError
from volumetrica.rng import RngStream


def default_step_size(n: int, c_delta: float = 1.0) -> float:
    """Step size c/sqrt(n); the mixing bounds pin the 1/sqrt(n) scaling."""
    if n < 1:
        raise ValueError("dimension must be positive")
    return c_delta / math.sqrt(n)


def ball_proposal(rng: RngStream, n: int, delta: float) -> np.ndarray:
    """Uniform point in B(0, delta): normalized Gaussian direction
    scaled by delta * u^(1/n).  This exact construction is shared by all
    walk variants; changing it would break cross-variant equivalence."""
    g = rng.normals(n)
    u = rng.uniform()
    return g * (delta * u ** (1.0 / n) / np.linalg.norm(g))


@dataclass
class WalkState:
    x: np.ndarray
    delta: float
    steps_taken: int = 0
    rejected: int = 0
    checks_per_constraint: np.ndarray | None = None

    @property
    def accepted(self) -> int:
        return self.steps_taken - self.rejected


def ball_walk(body: ConvexBody, x0: np.ndarray, delta: float, N: int,
              rng: RngStream, radius_cap: float | None = None,
              trace=None) -> WalkState:
    """N Metropolis steps of the uniform ball walk; rejected proposals stay put."""
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (body.dim,):
        raise DimensionMismatchError("start point dimension mismatch")
    if delta <= 0:
        raise ValueError("step size must be positive")
    if not body.contains(x):
        raise ValueError("start point outside body")
    state = WalkState(x, delta)
    cap2 = None if radius_cap is None else radius_cap * radius_cap
    for i in range(N):
        y = x + ball_proposal(rng, body.dim, delta)
        ok = (cap2 is None or float(y @ y) <= cap2) and body.contains(y)
        if ok:
            x = y
            state.x = x
        else:
            state.rejected += 1
        state.steps_taken += 1
        if trace is not None:
            trace.append((i, "accepted" if ok else "rejected", x.copy()))
    return state


def polytope_ball_walk_batched(P: Polytope, x0: np.ndarray, delta: float,
                               k: int, rng: RngStream,
                               block: int = 4096) -> WalkState:
    """k ball-walk steps with proposals batched through one matrix multiply.

    Precomputes Z (n x block) and Y = AZ, then replays acceptance with
    running products y = Ax updated incrementally.  Identical trajectory
    to ball_walk on the same stream.
    """
    x = np.asarray(x0, dtype=float).copy()
    if delta <= 0:
        raise ValueError("step size must be positive")
    if not np.all(P.A @ x <= P.b):
        raise ValueError("start point outside polytope")
    if k < 1:
        raise ValueError("need at least one step")
    state = WalkState(x, delta)
    y = P.A @ x
    n = P.dim
    done = 0
    while done < k:
        kb = min(block, k - done)
        # Proposals drawn one step at a time to preserve draw order.
        Z = np.empty((kb, n))
        for i in range(kb):
            Z[i] = ball_proposal(rng, n, delta)
        Y = Z @ P.A.T
        for i in range(kb):
            if np.all(y + Y[i] <= P.b):
                x = x + Z[i]
                y = y + Y[i]
            else:
                state.rejected += 1
            state.steps_taken += 1
        done += kb
    state.x = x
    return state


@dataclass
class ConstraintLedger:
    """Per-facet lower bounds on the normalized slack (b_j - a_j^T x)/||a_j||.

    Lazy form: bound at step i is d[j] - rate * (i - refreshed_at[j]),
    where rate bounds the per-step slack decrease.  A bucket queue keyed
    by the first step a facet could need checking gives O(1) scheduling.
    """

    d: np.ndarray
    refreshed_at: np.ndarray
    rate: float
    buckets: dict = field(default_factory=dict)
    checks: np.ndarray | None = None

    @classmethod
    def build(cls, A_unit: np.ndarray, b_unit: np.ndarray, x0: np.ndarray, rate: float):
        d = b_unit - A_unit @ x0
        led = cls(d=d.copy(), refreshed_at=np.zeros(len(d), dtype=np.int64),
                  rate=rate, checks=np.zeros(len(d), dtype=np.int64))
        for j in range(len(d)):
            led._schedule(j, 0)
        return led

    def _due(self, j: int, now: int) -> int:
        # First step i at which (i - refreshed + 1) * rate >= d[j].
        steps_safe = max(0, int(math.ceil(self.d[j] / self.rate)) - 1)
        return now + steps_safe

    def _schedule(self, j: int, now: int):
        due = self._due(j, now)
        self.buckets.setdefault(due, []).append(j)

    def due_constraints(self, i: int) -> list[int]:
        out = []
        stale = [key for key in self.buckets if key <= i]
        for key in stale:
            out.extend(self.buckets.pop(key))
        return out

    def refresh(self, j: int, slack: float, i: int):
        self.d[j] = slack
        self.refreshed_at[j] = i
        self._schedule(j, i)

    def bound(self, j: int, i: int) -> float:
        return float(self.d[j] - self.rate * (i - self.refreshed_at[j]))


def polytope_ball_walk_amortized(P: Polytope, x0: np.ndarray, delta: float,
                                 rho: float, N: int, rng: RngStream,
                                 mode: str = "deterministic-slack",
                                 alpha: float | None = None,
                                 eps_fail: float = 1e-6) -> WalkState:
    """Ball walk restricted to B(0, rho), with amortized constraint checks.

    deterministic-slack: every step moves at most delta, so a facet with
    certified slack bound >= delta cannot be violated; exact with no
    failure probability.  probabilistic-slack: facets are scheduled with
    the alpha*delta/sqrt(n) rate, but any unchecked facet whose
    deterministic bound would go negative is force-rechecked, so both
    modes produce identical trajectories.
    """
    if mode not in ("deterministic-slack", "probabilistic-slack"):
        raise ValueError(f"unknown mode {mode!r}")
    if rho <= 0:
        raise ValueError("radius cap must be positive")
    x = np.asarray(x0, dtype=float).copy()
    n = P.dim
    m = P.A.shape[0]
    A_unit = P.A / P.row_norms[:, None]
    b_unit = P.b / P.row_norms
    if not np.all(A_unit @ x <= b_unit):
        raise ValueError("start point outside polytope")
    if float(np.linalg.norm(x)) >= rho:
        raise ValueError("start point outside the cap ball")
    if alpha is None:
        alpha = 4.0 * math.log(2.0 * m * max(N, 1) / eps_fail)
    sched_rate = delta if mode == "deterministic-slack" else alpha * delta / math.sqrt(n)
    # A tiny refresh margin keeps the stored bounds strictly conservative
    # against float round-off in the slack arithmetic.
    margin = 1e-9 * max(1.0, rho)
    ledger = ConstraintLedger.build(A_unit, b_unit - margin, x, sched_rate)
    det_rate = delta

    state = WalkState(x, delta)
    rho2 = rho * rho
    for i in range(N):
        z = ball_proposal(rng, n, delta)
        y = x + z
        due = ledger.due_constraints(i)
        if float(y @ y) > rho2:
            # Rejected by the cap; facet bounds still decay, so refresh
            # whatever came due at the *current* point.
            for j in due:
                slack = float(b_unit[j] - A_unit[j] @ x)
                ledger.checks[j] += 1
                ledger.refresh(j, slack - margin, i + 1)
            state.rejected += 1
            state.steps_taken += 1
            continue
        ok = True
        checked = {}
        for j in due:
            slack = float(b_unit[j] - A_unit[j] @ y)
            ledger.checks[j] += 1
            checked[j] = slack
            if slack < 0:
                ok = False
        if ok and mode == "probabilistic-slack":
            # Mandatory safety recheck: any facet whose deterministic
            # bound cannot certify this acceptance gets a full distance
            # evaluation before we move.
            elapsed = (i + 1) - ledger.refreshed_at
            det_bound = ledger.d - det_rate * elapsed
            for j in np.flatnonzero(det_bound < 0):
                j = int(j)
                if j in checked:
                    continue
                slack = float(b_unit[j] - A_unit[j] @ y)
                ledger.checks[j] += 1
                checked[j] = slack
                if slack < 0:
                    ok = False
        if ok:
            x = y
            state.x = x
            for j, slack in checked.items():
                ledger.refresh(j, slack - margin, i + 1)
        else:
            state.rejected += 1
            for j in checked:
                slack = float(b_unit[j] - A_unit[j] @ x)
                ledger.refresh(j, slack - margin, i + 1)
        state.steps_taken += 1
    state.checks_per_constraint = ledger.checks.copy()
    return state
