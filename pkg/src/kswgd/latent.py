"""Latent-space Koopman prediction with a polynomial lift.

A linear principal-subspace projection stands in for a learned encoder.  In
latent coordinates a Koopman matrix is fitted in row convention,
``Phi(z') ~ Phi(z) K``, and trajectories are rolled out by lifting, applying
``K`` and reading the degree-one block back out.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dictionary import MonomialDictionary
from .errors import ContractError, DivergenceError
from .koopman import fit_edmd
from .pairs import SnapshotPairs


@dataclass(frozen=True)
class LatentMap:
    mean: np.ndarray
    projection: np.ndarray

    @property
    def d_latent(self):
        return self.projection.shape[1]

    def encode(self, X):
        X = np.asarray(X, float)
        return (X - self.mean) @ self.projection

    def decode(self, Z):
        Z = np.asarray(Z, float)
        return self.mean + Z @ self.projection.T


def fit_latent_map(snapshots, d_latent):
    """Leading principal directions of the mean-centred snapshots."""
    S = np.asarray(snapshots, float)
    m, D = S.shape
    if not 1 <= d_latent <= D:
        raise ContractError(f"d_latent must lie in [1, {D}]")
    if m <= d_latent:
        raise ContractError("need more snapshots than latent dimensions")
    mean = S.mean(axis=0)
    _, s, Vt = np.linalg.svd(S - mean, full_matrices=False)
    tol = s[0] * max(m, D) * np.finfo(float).eps if s.size else 0.0
    rank = int(np.sum(s > tol))
    if rank < d_latent and d_latent < D:
        raise ContractError(f"snapshot matrix has rank {rank} < d_latent = {d_latent}")
    if d_latent == D:
        # complete the basis so the round trip is lossless even when rank-deficient
        Q, _ = np.linalg.qr(np.vstack([Vt, np.eye(D)]).T)
        return LatentMap(mean, Q[:, :D])
    return LatentMap(mean, Vt[:d_latent].T.copy())


def lift_polynomial(z, p):
    """Monomials of ``z`` up to degree ``p``; entries 1..d are ``z`` itself."""
    if p < 1:
        raise ContractError("lift degree must be at least 1")
    z = np.asarray(z, float)
    single = z.ndim == 1
    Z = z[None, :] if single else z
    Phi = MonomialDictionary(Z.shape[1], p).features(Z)
    return Phi[0] if single else Phi


@dataclass(frozen=True)
class LatentKoopman:
    K: np.ndarray
    degree: int
    d_latent: int
    dt: float

    def lift(self, Z):
        return lift_polynomial(Z, self.degree)


def fit_koopman_latent(pairs, p=2, reg=1e-4):
    """Ridge least squares for ``Phi(Y) ~ Phi(X) K`` (normal equations scaled by 1/N)."""
    if not isinstance(pairs, SnapshotPairs):
        X, Y, dt = pairs
        pairs = SnapshotPairs(X, Y, dt)
    est = fit_edmd(pairs, MonomialDictionary(pairs.dim, p), reg)
    return LatentKoopman(est.matrix, p, pairs.dim, pairs.dt)


def predict_latent(model, z0, n_steps, power_k=False):
    """Roll latent states forward ``n_steps`` steps.

    Default: re-lift after every step.  ``power_k=True`` instead lifts once,
    multiplies by ``K`` n times and extracts the coordinates at the end.
    ``z0`` may be a single vector or an (m, d) ensemble.
    """
    if n_steps < 0:
        raise ContractError("n_steps must be non-negative")
    z = np.array(z0, dtype=float)
    single = z.ndim == 1
    Z = z[None, :] if single else z
    if Z.shape[1] != model.d_latent:
        raise ContractError("latent dimension mismatch")
    d = model.d_latent
    if power_k:
        Phi = model.lift(Z)
        for k in range(n_steps):
            Phi = Phi @ model.K
            if not np.all(np.isfinite(Phi)):
                raise DivergenceError(f"lifted state became non-finite at step {k + 1}", step=k + 1)
        Z = Phi[:, 1:d + 1]
    else:
        for k in range(n_steps):
            Z = (model.lift(Z) @ model.K)[:, 1:d + 1]
            if not np.all(np.isfinite(Z)):
                raise DivergenceError(f"latent state became non-finite at step {k + 1}", step=k + 1)
    return Z[0] if single else Z
