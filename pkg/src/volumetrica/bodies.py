"""Convex bodies, membership oracles, and affine maps.

Bodies are immutable after construction except for the membership
query counter, which is telemetry only and excluded from equality.
Boundary points count as inside (Ax <= b, not <).
"""

from __future__ import annotations

import math

import numpy as np

from volumetrica.errors import BodyFormatError, DimensionMismatchError, NumericalError


class AffineMap:
    """Invertible map y = T(x - x0) with exact log|det T| accounting.

    T_inv is recomputed from scratch at every composition; compositions
    are rare (O(log n * log(R/r)) per run), so the cost is negligible
    and conditioning drift never accumulates.
    """

    def __init__(self, T: np.ndarray, x0: np.ndarray | None = None,
                 log_abs_det: float | None = None):
        T = np.asarray(T, dtype=float)
        n = T.shape[0]
        if T.shape != (n, n):
            raise DimensionMismatchError(f"T must be square, got {T.shape}")
        self.T = T
        self.x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
        try:
            self.T_inv = np.linalg.inv(T)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"singular transform (cond~inf): {exc}") from exc
        sign, logdet = np.linalg.slogdet(T)
        if sign == 0 or not np.isfinite(logdet):
            raise NumericalError("transform has zero determinant")
        self.log_abs_det = logdet if log_abs_det is None else float(log_abs_det)
        resid = np.linalg.norm(self.T @ self.T_inv - np.eye(n), 2)
        if resid > 1e-8:
            cond = np.linalg.cond(T)
            raise NumericalError(f"ill-conditioned transform: ||T T^-1 - I|| = {resid:.2e}, cond(T) ~ {cond:.2e}")

    @property
    def dim(self) -> int:
        return self.T.shape[0]

    @classmethod
    def identity(cls, n: int) -> "AffineMap":
        return cls(np.eye(n))

    @classmethod
    def scaling(cls, n: int, s: float) -> "AffineMap":
        return cls(float(s) * np.eye(n))

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.T @ (np.asarray(x, dtype=float) - self.x0)

    def apply_batch(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.x0) @ self.T.T

    def invert(self, y: np.ndarray) -> np.ndarray:
        return self.T_inv @ np.asarray(y, dtype=float) + self.x0

    def invert_batch(self, Y: np.ndarray) -> np.ndarray:
        return np.asarray(Y, dtype=float) @ self.T_inv.T + self.x0

    def compose(self, M: np.ndarray) -> "AffineMap":
        """New map with T' = M T; log|det| accumulates exactly."""
        M = np.asarray(M, dtype=float)
        sign, logdet_m = np.linalg.slogdet(M)
        if sign == 0 or not np.isfinite(logdet_m):
            cond = np.linalg.cond(M)
            raise NumericalError(f"singular composition factor (cond ~ {cond:.2e})")
        return AffineMap(M @ self.T, self.x0, self.log_abs_det + logdet_m)

    def recenter(self, x_hat: np.ndarray) -> "AffineMap":
        """Shift so the working-coordinate point x_hat maps to the new origin."""
        return AffineMap(self.T, self.x0 + self.T_inv @ np.asarray(x_hat, dtype=float),
                         self.log_abs_det)

    def __repr__(self):
        return f"AffineMap(dim={self.dim}, log_abs_det={self.log_abs_det:.6g})"


def compose(amap: AffineMap, M: np.ndarray) -> AffineMap:
    return amap.compose(M)


class ConvexBody:
    """Membership oracle plus (r, R) rounding bounds.

    Subclasses implement ``_inside`` (single point) and ``_inside_batch``.
    ``inner_radius``/``inner_center`` declare a ball guaranteed inside;
    ``outer_radius`` a ball around the origin guaranteed to contain the body.
    """

    kind = "body"

    def __init__(self, dim: int, inner_radius: float, outer_radius: float,
                 inner_center: np.ndarray | None = None):
        self.dim = int(dim)
        self.inner_radius = float(inner_radius)
        self.outer_radius = float(outer_radius)
        self.inner_center = (np.zeros(dim) if inner_center is None
                             else np.asarray(inner_center, dtype=float).copy())
        if self.inner_radius > self.outer_radius:
            raise ValueError("inner radius exceeds outer radius")
        self.query_counter = 0

    def contains(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise DimensionMismatchError(f"point has shape {x.shape}, body dim {self.dim}")
        if not np.all(np.isfinite(x)):
            raise DimensionMismatchError("non-finite query point")
        self.query_counter += 1
        return self._inside(x)

    def contains_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise DimensionMismatchError(f"batch has shape {X.shape}, body dim {self.dim}")
        self.query_counter += X.shape[0]
        return self._inside_batch(X)

    def _inside(self, x: np.ndarray) -> bool:
        raise NotImplementedError

    def _inside_batch(self, X: np.ndarray) -> np.ndarray:
        return np.array([self._inside(x) for x in X], dtype=bool)


class Polytope(ConvexBody):
    """{x : Ax <= b} with cached row norms.

    Boundedness (m >= n+1) is the caller's responsibility and is not
    enforced here.
    """

    kind = "polytope"

    def __init__(self, A: np.ndarray, b: np.ndarray, inner_radius: float | None = None,
                 outer_radius: float | None = None, inner_center: np.ndarray | None = None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).ravel()
        m, n = A.shape
        if b.shape != (m,):
            raise DimensionMismatchError("b length does not match A rows")
        self.A = A
        self.b = b
        self.row_norms = np.linalg.norm(A, axis=1)
        if np.any(self.row_norms <= 0):
            raise ValueError("zero constraint row")
        center = np.zeros(n) if inner_center is None else np.asarray(inner_center, dtype=float)
        if inner_radius is None:
            # Largest ball around the declared center: exact polytope arithmetic.
            inner_radius = float(np.min((b - A @ center) / self.row_norms))
        if outer_radius is None:
            outer_radius = self._bounding_radius()
        super().__init__(n, inner_radius, outer_radius, center)

    def axis_bounds(self):
        """Per-axis (lo, hi) from single-variable constraints only.

        Axes not pinned by any axis-aligned constraint come back infinite;
        this is a sound outer box, not a solved LP.
        """
        m, n = self.A.shape
        lo = np.full(n, -np.inf)
        hi = np.full(n, np.inf)
        for j in range(m):
            a = self.A[j]
            nz = np.flatnonzero(np.abs(a) > 1e-14)
            if len(nz) == 1:
                i = nz[0]
                if a[i] > 0:
                    hi[i] = min(hi[i], self.b[j] / a[i])
                else:
                    lo[i] = max(lo[i], self.b[j] / a[i])
        return lo, hi

    def _bounding_radius(self) -> float:
        # Cheap per-axis bound: max |x_i| s.t. Ax <= b is not solved here
        # (no LP dependency); callers with tighter knowledge may override.
        lo, hi = self.axis_bounds()
        reach = np.maximum(np.abs(lo), np.abs(hi))
        if np.all(np.isfinite(reach)):
            return float(np.linalg.norm(reach))
        # Tangent-to-ball generators and file inputs declare their own radius.
        return float("inf")

    def _inside(self, x: np.ndarray) -> bool:
        return bool(np.all(self.A @ x <= self.b))

    def _inside_batch(self, X: np.ndarray) -> np.ndarray:
        return np.all(X @ self.A.T <= self.b, axis=1)

    def verify_inner_ball(self) -> bool:
        """Exact check that the declared ball B(center, r) is inside."""
        slack = self.b - self.A @ self.inner_center
        return bool(np.all(slack >= self.inner_radius * self.row_norms - 1e-12))


class Cube(Polytope):
    """Axis-aligned cube [-h, h]^n as an explicit polytope."""

    kind = "cube"

    def __init__(self, n: int, half_width: float = 1.0):
        h = float(half_width)
        A = np.vstack([np.eye(n), -np.eye(n)])
        b = np.full(2 * n, h)
        super().__init__(A, b, inner_radius=h, outer_radius=h * math.sqrt(n))
        self.half_width = h

    def analytic_volume(self) -> float:
        return (2.0 * self.half_width) ** self.dim


class Simplex(Polytope):
    """Standard simplex {x >= 0, sum x <= 1}; analytic volume 1/n!."""

    kind = "simplex"

    def __init__(self, n: int):
        A = np.vstack([-np.eye(n), np.ones((1, n))])
        b = np.concatenate([np.zeros(n), [1.0]])
        center = np.full(n, 1.0 / (2.0 * n))
        r = float(np.min((b - A @ center) / np.linalg.norm(A, axis=1)))
        super().__init__(A, b, inner_radius=r, outer_radius=1.0, inner_center=center)

    def analytic_volume(self) -> float:
        return 1.0 / math.factorial(self.dim)


class Ball(ConvexBody):
    """Euclidean ball of given radius centered at the origin."""

    kind = "ball"

    def __init__(self, n: int, radius: float = 1.0):
        super().__init__(n, radius, radius)
        self.radius = float(radius)

    def _inside(self, x: np.ndarray) -> bool:
        return bool(x @ x <= self.radius * self.radius)

    def _inside_batch(self, X: np.ndarray) -> np.ndarray:
        return np.einsum("ij,ij->i", X, X) <= self.radius * self.radius

    def analytic_volume(self) -> float:
        n = self.dim
        return math.pi ** (n / 2) / math.gamma(n / 2 + 1) * self.radius ** n


class BallIntersectedBody(ConvexBody):
    """base ∩ B(center, t): the doubling-radius slices of the outer loop.

    Membership queries are delegated through the base oracle's counter,
    so the root body's counter totals all queries made anywhere above it.
    """

    kind = "intersection-with-ball"

    def __init__(self, base: ConvexBody, t: float, center: np.ndarray | None = None):
        t = float(t)
        c_ball = np.zeros(base.dim) if center is None else np.asarray(center, dtype=float)
        c = base.inner_center
        r = min(base.inner_radius, t - float(np.linalg.norm(c - c_ball)))
        super().__init__(base.dim, max(r, 0.0),
                         min(base.outer_radius, t + float(np.linalg.norm(c_ball))), c)
        self.base = base
        self.t = t
        self.center = c_ball

    def _inside(self, x: np.ndarray) -> bool:
        d = x - self.center
        return bool(d @ d <= self.t * self.t) and self.base.contains(x)

    def _inside_batch(self, X: np.ndarray) -> np.ndarray:
        D = X - self.center
        return (np.einsum("ij,ij->i", D, D) <= self.t * self.t) & self.base.contains_batch(X)


class TransformedBody(ConvexBody):
    """Image amap(base); membership checks T_inv y + x0 against the base oracle."""

    kind = "transformed"

    def __init__(self, amap: AffineMap, base: ConvexBody):
        if amap.dim != base.dim:
            raise DimensionMismatchError("map and body dimension differ")
        r = certified_inner_radius(base, amap)
        R = certified_outer_radius(base, amap)
        super().__init__(base.dim, max(r, 0.0), R)
        self.amap = amap
        self.base = base

    def _inside(self, x: np.ndarray) -> bool:
        return self.base.contains(self.amap.invert(x))

    def _inside_batch(self, X: np.ndarray) -> np.ndarray:
        return self.base.contains_batch(self.amap.invert_batch(X))


def transformed_membership(amap: AffineMap, body: ConvexBody, y: np.ndarray) -> bool:
    """Membership of y in amap(body); one base-oracle query."""
    return body.contains(amap.invert(y))


def inner_ball_radius_exact(polytope: Polytope, amap: AffineMap) -> float:
    """Exact largest origin-centered ball inside amap(polytope).

    The preimage of the working origin is x0; row j of the transformed
    polytope is (a_j^T T_inv) y <= b_j - a_j^T x0, so the distance from
    the origin to facet j is (b_j - a_j^T x0) / ||T_inv^T a_j||.
    Negative return means the origin image is outside the polytope.
    """
    slack = polytope.b - polytope.A @ amap.x0
    norms = np.linalg.norm(polytope.A @ amap.T_inv, axis=1)
    return float(np.min(slack / norms))


def ellipsoid_origin_inradius(B: np.ndarray, d: np.ndarray, t: float) -> float:
    """Exact radius of the largest origin-centered ball inside {y : ||By - d|| <= t}.

    Equivalent to the distance from the origin to the ellipsoid boundary,
    found by solving the stationarity condition Q(y - m) = sigma*y of
    max_{||y||=r} (y-m)^T Q (y-m) with Q = B^T B / t^2 and center m = B^{-1} d.
    The multiplier sigma > lambda_max(Q) is bisected until the quadratic
    hits 1; the degenerate case (m orthogonal to the top eigenspace) adds
    the leftover budget along those directions.  Returns 0.0 when the
    origin is not strictly inside.
    """
    B = np.asarray(B, dtype=float)
    d = np.asarray(d, dtype=float)
    if float(np.linalg.norm(d)) >= t:
        return 0.0
    Q = (B.T @ B) / (t * t)
    lams, V = np.linalg.eigh(Q)
    m = np.linalg.solve(B, d)
    w = V.T @ m
    lam_max = lams[-1]
    top = lams >= lam_max * (1.0 - 1e-12)
    lw2 = lams * w * w

    def f_and_r2(sigma):
        g = lams - sigma
        val = float(np.sum(lw2 * (sigma / g) ** 2))
        r2 = float(np.sum(lams * lw2 / (g * g)))
        return val, r2

    if float(np.sum(np.abs(w[top]))) < 1e-14 * max(1.0, float(np.linalg.norm(w))):
        # top-eigenspace component of the center vanishes; the binding
        # direction is a top eigenvector, solved at sigma = lam_max
        rest = ~top
        g = lams[rest] - lam_max
        f_hat = float(np.sum(lw2[rest] * (lam_max / g) ** 2)) if rest.any() else 0.0
        r2_hat = float(np.sum(lams[rest] * lw2[rest] / (g * g))) if rest.any() else 0.0
        if f_hat >= 1.0:
            pass  # fall through to bisection on the remaining spectrum
        else:
            return math.sqrt(r2_hat + (1.0 - f_hat) / lam_max)
    lo = lam_max * (1.0 + 1e-14) + 1e-300
    hi = lam_max + 1.0
    while f_and_r2(hi)[0] >= 1.0:
        hi = lam_max + 2.0 * (hi - lam_max)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f_and_r2(mid)[0] >= 1.0:
            lo = mid
        else:
            hi = mid
    return math.sqrt(f_and_r2(hi)[1])


def certified_inner_radius(body: ConvexBody, amap: AffineMap) -> float:
    """Certified lower bound on the origin-centered inradius of amap(body).

    Exact for polytopes (facet distances), balls and ball slices
    (ellipsoid origin-inradius), and compositions of those.
    """
    if isinstance(body, Polytope):
        return inner_ball_radius_exact(body, amap)
    if isinstance(body, Ball):
        return ellipsoid_origin_inradius(amap.T_inv, -amap.x0, body.radius)
    if isinstance(body, BallIntersectedBody):
        cap = ellipsoid_origin_inradius(amap.T_inv, body.center - amap.x0, body.t)
        return min(certified_inner_radius(body.base, amap), cap)
    if isinstance(body, TransformedBody):
        inner = body.amap
        T = amap.T @ inner.T
        x0 = inner.x0 + inner.T_inv @ amap.x0
        flat = AffineMap(T, x0, amap.log_abs_det + inner.log_abs_det)
        return certified_inner_radius(body.base, flat)
    raise NotImplementedError(f"no certificate for body kind {body.kind!r}")


def certified_outer_radius(body: ConvexBody, amap: AffineMap) -> float:
    """Upper bound on sup ||y|| over amap(body) from the declared outer ball."""
    R = body.outer_radius
    if not np.isfinite(R):
        raise NumericalError("body has no declared outer radius")
    return float(np.linalg.norm(amap.T, 2)) * (R + float(np.linalg.norm(amap.x0)))


def sampled_inner_radius(body: ConvexBody, directions: int | None = None,
                         rng: np.random.Generator | None = None) -> float:
    """Sampled lower bound on the origin-centered inradius.

    Minimum exit distance over 64*n random directions (bisection against
    the oracle).  Diagnostic only; never used in control flow.
    """
    rng = rng or np.random.default_rng(0)
    k = directions or 64 * body.dim
    best = np.inf
    for _ in range(k):
        u = rng.standard_normal(body.dim)
        u /= np.linalg.norm(u)
        lo, hi = 0.0, body.outer_radius + 1.0
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            if body.contains(mid * u):
                lo = mid
            else:
                hi = mid
        best = min(best, lo)
    return float(best)


def parse_body_file(path: str) -> ConvexBody:
    """Read the UTF-8 body file format (see package README)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise BodyFormatError("empty body file", line=1)
    kind = lines[0].lower()
    inner = None
    if lines and lines[-1].startswith("inner"):
        parts = lines[-1].split()
        try:
            vals = [float(v) for v in parts[1:]]
        except ValueError as exc:
            raise BodyFormatError(f"bad inner-ball declaration: {exc}", line=len(lines)) from exc
        inner = (np.array(vals[:-1]), vals[-1])
        lines = lines[:-1]
    try:
        if kind == "polytope":
            m, n = (int(v) for v in lines[1].split())
            if len(lines) < 2 + m:
                raise BodyFormatError(f"expected {m} constraint rows", line=len(lines) + 1)
            rows = []
            for i, ln in enumerate(lines[2:2 + m]):
                vals = [float(v) for v in ln.split()]
                if len(vals) != n + 1:
                    raise BodyFormatError(f"expected {n + 1} numbers", line=3 + i)
                rows.append(vals)
            arr = np.array(rows)
            body = Polytope(arr[:, :n], arr[:, n])
        elif kind in ("ball", "cube"):
            n_s, rad_s = lines[1].split()
            n, rad = int(n_s), float(rad_s)
            body = Ball(n, rad) if kind == "ball" else Cube(n, rad)
        elif kind == "simplex":
            body = Simplex(int(lines[1]))
        else:
            raise BodyFormatError(f"unknown body kind {kind!r}", line=1)
    except BodyFormatError:
        raise
    except (ValueError, IndexError) as exc:
        raise BodyFormatError(str(exc), line=2) from exc
    if inner is not None:
        center, r = inner
        if center.shape != (body.dim,):
            raise BodyFormatError("inner-ball center has wrong dimension", line=None)
        body.inner_center = center
        body.inner_radius = float(r)
    return body
