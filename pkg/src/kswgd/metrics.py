"""Distribution-level diagnostics for particle ensembles."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.optimize
import scipy.stats

from .errors import ContractError


@dataclass(frozen=True)
class GaussianOracle:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, float))
        cov = np.atleast_2d(np.asarray(self.covariance, float))
        if cov.shape != (mean.size, mean.size):
            raise ContractError("covariance shape does not match the mean")
        if not np.allclose(cov, cov.T) or np.linalg.eigvalsh(cov).min() <= 0:
            raise ContractError("covariance must be symmetric positive definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)


def gaussian_kl(m1, S1, m0, S0):
    """``KL(N(m1, S1) || N(m0, S0))`` in closed form."""
    d = m0.size
    S0_inv = np.linalg.inv(S0)
    diff = m0 - m1
    _, logdet0 = np.linalg.slogdet(S0)
    _, logdet1 = np.linalg.slogdet(S1)
    return 0.5 * (np.trace(S0_inv @ S1) + diff @ S0_inv @ diff - d + logdet0 - logdet1)


def gaussian_kl_proxy(particles, oracle, return_flag=False):
    """KL between the moment-matched Gaussian of the particles and the oracle.

    A singular sample covariance gets ``1e-9 I`` of jitter; ``return_flag``
    additionally reports whether that happened.
    """
    P = np.asarray(particles, float)
    if P.ndim == 1:
        P = P[:, None]
    M, d = P.shape
    if d != oracle.mean.size:
        raise ContractError("particle dimension does not match the oracle")
    if M <= d:
        raise ContractError("need more particles than dimensions")
    m = P.mean(axis=0)
    S = np.atleast_2d(np.cov(P, rowvar=False, bias=True))
    jittered = False
    if np.linalg.eigvalsh(S).min() <= 1e-12 * max(1.0, np.trace(S)):
        S = S + 1e-9 * np.eye(d)
        jittered = True
    kl = max(float(gaussian_kl(m, S, oracle.mean, oracle.covariance)), 0.0)
    return (kl, jittered) if return_flag else kl


def circular_uniformity(particles):
    """Resultant length and KS distance of the angles from Uniform[-pi, pi)."""
    P = np.asarray(particles, float)
    if P.ndim != 2 or P.shape[1] != 2:
        raise ContractError("circle particles must be an (M, 2) array")
    norms = np.linalg.norm(P, axis=1)
    dev = np.max(np.abs(norms - 1.0))
    if dev > 1e-6:
        if dev > 1e-3:
            warnings.warn(f"particles off the unit circle by up to {dev:.3g}; projecting",
                          RuntimeWarning, stacklevel=2)
        P = P / norms[:, None]
    R = float(np.linalg.norm(P.mean(axis=0)))
    theta = np.arctan2(P[:, 1], P[:, 0])
    ks = scipy.stats.kstest(theta, scipy.stats.uniform(loc=-np.pi, scale=2 * np.pi).cdf).statistic
    return min(R, 1.0), float(ks)


@dataclass
class DecayFit:
    rate: float
    floor: float
    poor_fit: bool
    residual_fraction: float

    def __iter__(self):
        return iter((self.rate, self.floor))


def decay_fit(kl_series, window=(5, 200)):
    """Fit ``kl_t ~ b + (kl_0 - b) rho^t`` over ``window`` (inclusive start, exclusive end).

    ``kl_0`` is the first value of the window and ``t`` counts from there.
    The fit is poor when the residual exceeds half the variance of the window.
    """
    y = np.asarray(kl_series, float).ravel()
    if y.size < 20:
        raise ContractError("decay_fit needs at least 20 values")
    if np.any(y < 0):
        raise ContractError("KL values must be non-negative")
    lo, hi = window
    seg = y[lo:min(hi, y.size)]
    if seg.size < 3:
        seg = y
    t = np.arange(seg.size, dtype=float)
    y0 = seg[0]
    var = float(np.var(seg))
    if var <= (1e-12 * max(1.0, abs(y0))) ** 2:
        return DecayFit(1.0, float(seg.mean()), False, 0.0)

    def resid(params):
        rho, b = params
        return b + (y0 - b) * rho**t - seg

    # coarse scan on rho seeds the local solve; b is linear given rho
    best = None
    for rho in np.linspace(0.01, 0.999, 200):
        basis = 1.0 - rho**t
        denom = basis @ basis
        b = ((seg - y0 * rho**t) @ basis) / denom if denom > 0 else seg.mean()
        sse = float(np.sum(resid((rho, b)) ** 2))
        if best is None or sse < best[0]:
            best = (sse, rho, b)
    sol = scipy.optimize.least_squares(resid, x0=[best[1], best[2]],
                                       bounds=([1e-12, -np.inf], [1.0, np.inf]),
                                       xtol=1e-15, ftol=1e-15, gtol=1e-15)
    rho, b = sol.x
    sse = float(np.sum(sol.fun**2))
    if sse > best[0]:
        _, rho, b = best
        sse = best[0]
    frac = sse / (var * seg.size)
    return DecayFit(float(rho), float(max(b, 0.0)), frac > 0.5, float(frac))
