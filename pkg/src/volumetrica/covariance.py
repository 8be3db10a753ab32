"""Split-sample covariance estimation and low-eigenvalue projections.

The mean comes from an independent half of the sample, exactly as the
inner rounding loop requires: the independence between the centering
point and the outer products is what the concentration argument uses,
so the more common pooled estimator is deliberately not used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from volumetrica.errors import NumericalError


@dataclass
class CovarianceEstimate:
    mean: np.ndarray
    A_hat: np.ndarray
    k: int


@dataclass
class EigenProjection:
    P: np.ndarray
    rank: int
    threshold: float


def split_sample_covariance(samples: np.ndarray) -> CovarianceEstimate:
    """Mean from the second half, covariance of the first half about it."""
    X = np.asarray(samples, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2 or X.shape[0] % 2 != 0:
        raise ValueError("need an even number (>= 2) of sample rows")
    k = X.shape[0] // 2
    x_hat = X[k:].mean(axis=0)
    D = X[:k] - x_hat
    A_hat = (D.T @ D) / k
    A_hat = 0.5 * (A_hat + A_hat.T)
    return CovarianceEstimate(mean=x_hat, A_hat=A_hat, k=k)


def low_eigenspace_projection(A_hat: np.ndarray, lam: float) -> EigenProjection:
    """Projection onto eigenvectors with eigenvalue <= lam (ties included)."""
    A_hat = np.asarray(A_hat, dtype=float)
    try:
        w, V = np.linalg.eigh(A_hat)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    keep = w <= lam * (1.0 + 1e-12)
    Vk = V[:, keep]
    P = Vk @ Vk.T
    P = 0.5 * (P + P.T)
    return EigenProjection(P=P, rank=int(np.sum(keep)), threshold=float(lam))


def inverse_sqrt(A_hat: np.ndarray, clamp_rel: float = 1e-12):
    """Symmetric A^(-1/2); eigenvalues clamped below at clamp_rel * trace.

    Raises if any eigenvalue actually needs the clamp: a numerically
    singular covariance means the sample was rank deficient, and the
    caller should see which direction collapsed rather than a silently
    exploding whitening matrix.
    """
    A_hat = np.asarray(A_hat, dtype=float)
    w, V = np.linalg.eigh(A_hat)
    floor = clamp_rel * max(np.trace(A_hat), np.finfo(float).tiny)
    if np.any(w < floor):
        i = int(np.argmin(w))
        raise NumericalError(
            f"covariance numerically singular: eigenvalue {w[i]:.3e} below "
            f"clamp {floor:.3e}; null direction {np.round(V[:, i], 4)}")
    W = (V / np.sqrt(w)) @ V.T
    return 0.5 * (W + W.T)


def final_isotropy_estimate(sampler, n: int, c_N: float = 50.0):
    """Terminal whitening: x_hat and W = A_hat^(-1/2) from fresh samples.

    ``sampler(count)`` must return near-uniform points on the current
    body.  Uses ceil(c_N * n * max(log n, 1)) samples, rounded up to an
    even count for the split.
    """
    N = int(math.ceil(c_N * n * max(math.log(n), 1.0)))
    N += N % 2
    X = np.asarray(sampler(N), dtype=float)
    if X.shape[0] < N:
        raise NumericalError(f"sampler returned {X.shape[0]} < {N} points")
    est = split_sample_covariance(X[:N])
    W = inverse_sqrt(est.A_hat)
    return est.mean, W, est


def spectral_violation(A_hat: np.ndarray, A_true: np.ndarray, eps: float) -> float:
    """Smallest additive c >= 0 with (1-eps)A - cI <= A_hat <= (1+eps)A + cI."""
    hi = float(np.linalg.eigvalsh(A_hat - (1.0 + eps) * A_true).max())
    lo = float(np.linalg.eigvalsh((1.0 - eps) * A_true - A_hat).max())
    return max(0.0, hi, lo)


def bernstein_error_check(A_true: np.ndarray, sample_fn, ks, trials: int,
                          eps: float, rng: np.random.Generator):
    """Trend of the additive spectral violation versus sample count.

    ``sample_fn(count, rng)`` yields independent rows from the fixture
    distribution.  Returns per-k medians and the fitted log-log slope
    over the strictly positive medians (nan if fewer than three).
    Diagnostic only: no exception paths.
    """
    ks = list(ks)
    medians = []
    for k in ks:
        vs = [spectral_violation(split_sample_covariance(sample_fn(2 * k, rng)).A_hat,
                                 A_true, eps)
              for _ in range(trials)]
        medians.append(float(np.median(vs)))
    med = np.array(medians)
    mask = med > 0
    if mask.sum() >= 3:
        slope = float(np.polyfit(np.log(np.array(ks, dtype=float)[mask]),
                                 np.log(med[mask]), 1)[0])
    else:
        slope = float("nan")
    return {"ks": ks, "median_violation": medians, "slope": slope, "eps": eps}
