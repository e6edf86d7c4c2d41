"""Gaussian-KDE score estimates and synthetic one-step pairs for static data."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dictionary import median_heuristic
from .errors import ContractError, FarQueryError
from .pairs import SnapshotPairs
from .systems import make_rng

# exp(-700) is about the smallest weight a double can hold relative to 1
_UNDERFLOW_EXPONENT = 700.0


@dataclass(frozen=True)
class ScoreEstimate:
    """Fitted KDE; immutable, so concurrent ``score`` calls are safe."""

    samples: np.ndarray
    bandwidth: float
    include_diagonal: bool = False

    def score(self, X):
        """``grad log pi_hat`` at each row of ``X``: ``(centroid(x) - x) / h^2``.

        Weights are shifted by the largest exponent before exponentiating, so
        queries far from the data keep a well-defined nearest-sample centroid
        until the shift itself underflows.
        """
        X = np.atleast_2d(np.asarray(X, float))
        Z = self.samples
        if X.shape[1] != Z.shape[1]:
            raise ContractError(f"query dimension {X.shape[1]} != sample dimension {Z.shape[1]}")
        h2 = self.bandwidth**2
        sx = np.einsum("ij,ij->i", X, X)
        sz = np.einsum("ij,ij->i", Z, Z)
        D2 = np.maximum(sx[:, None] + sz[None, :] - 2.0 * X @ Z.T, 0.0)
        E = -D2 / (2.0 * h2)
        top = E.max(axis=1, keepdims=True)
        if np.any(top < -_UNDERFLOW_EXPONENT):
            raise FarQueryError("query lies outside the support of the KDE samples")
        W = np.exp(E - top)
        centroid = (W @ Z) / W.sum(axis=1, keepdims=True)
        return (centroid - X) / h2

    def log_density(self, X):
        """Unnormalized ``log sum_j exp(-||x - z_j||^2 / 2h^2)``."""
        X = np.atleast_2d(np.asarray(X, float))
        diff = X[:, None, :] - self.samples[None, :, :]
        E = -np.sum(diff**2, axis=2) / (2.0 * self.bandwidth**2)
        top = E.max(axis=1)
        return top + np.log(np.exp(E - top[:, None]).sum(axis=1))

    def __call__(self, X):
        return self.score(X)


def fit_kde_score(samples, include_diagonal=False, bandwidth=None):
    samples = np.asarray(samples, float)
    if samples.ndim == 1:
        samples = samples[:, None]
    if samples.shape[0] < 2:
        raise ContractError("KDE needs at least two samples")
    h = median_heuristic(samples, include_diagonal) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise ContractError("bandwidth must be positive")
    return ScoreEstimate(samples.copy(), h, include_diagonal)


def score_at(est, x):
    x = np.asarray(x, float)
    return est.score(x.reshape(1, -1))[0]


def synthesize_pairs_static(samples, dt, seed, minus_drift=False, noise_scale=1.0,
                            estimate=None):
    """One Langevin step from every sample, driven by the KDE score.

    ``z' = z + dt * score(z) + sqrt(2 dt) * xi``.  ``minus_drift=True`` flips
    the drift to ``-dt * score(z)``.
    """
    if not dt > 0:
        raise ContractError("dt must be positive")
    Z = np.asarray(samples, float)
    if Z.ndim == 1:
        Z = Z[:, None]
    est = fit_kde_score(Z) if estimate is None else estimate
    sign = -1.0 if minus_drift else 1.0
    rng = make_rng(seed)
    xi = rng.standard_normal(Z.shape)
    Y = Z + sign * dt * est.score(Z) + noise_scale * np.sqrt(2.0 * dt) * xi
    return SnapshotPairs(Z.copy(), Y, dt)
