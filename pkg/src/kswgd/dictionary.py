"""Feature maps and kernels used by the Koopman regressions.

Two dictionary families are provided, monomials up to a total degree and
Gaussian bumps at landmark centers, plus a kernel-induced feature map
(``KernelFeatures``) that turns a reproducing kernel and a set of centers into
a dictionary.  All of them expose the same pair of methods::

    features(X)  -> (m, n)        psi_k(x_i)
    gradients(X) -> (m, n, d)     d psi_k / d x_l at x_i

so the spectral code never needs to know which one it is holding.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DegenerateBandwidthError

__all__ = [
    "MonomialDictionary",
    "RBFDictionary",
    "GaussianKernel",
    "PolynomialKernel",
    "KernelFeatures",
    "eval_dictionary",
    "eval_dictionary_grad",
    "gram",
    "monomial_exponents",
    "pairwise_sq_dists",
    "median_heuristic",
    "select_centers",
    "dictionary_from_dict",
    "kernel_from_dict",
]


def _as_2d(X, dim, name="X"):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :] if dim is None or X.shape[0] == dim else X[:, None]
    if X.ndim != 2:
        raise ContractError(f"{name} must be a 2-d array, got shape {X.shape}")
    if dim is not None and X.shape[1] != dim:
        raise ContractError(f"{name} has {X.shape[1]} columns, expected {dim}")
    return X


def pairwise_sq_dists(X, Y=None):
    """Squared Euclidean distances, clipped at zero against round-off."""
    X = np.asarray(X, dtype=float)
    Y = X if Y is None else np.asarray(Y, dtype=float)
    sx = np.einsum("ij,ij->i", X, X)
    sy = np.einsum("ij,ij->i", Y, Y)
    D2 = sx[:, None] + sy[None, :] - 2.0 * (X @ Y.T)
    np.maximum(D2, 0.0, out=D2)
    if Y is X:
        np.fill_diagonal(D2, 0.0)
    return D2


def median_heuristic(X, include_diagonal=False):
    """Bandwidth ``sqrt(median ||x_i - x_j||^2)``.

    By default the median runs over off-diagonal pairs only; with
    ``include_diagonal=True`` the N zero self-distances enter the median too.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2:
        raise ContractError("median heuristic needs at least two samples")
    D2 = pairwise_sq_dists(X)
    if include_diagonal:
        vals = D2.ravel()
    else:
        vals = D2[~np.eye(D2.shape[0], dtype=bool)]
    h = math.sqrt(float(np.median(vals)))
    if not h > 0.0:
        raise DegenerateBandwidthError(
            "median pairwise distance is zero; samples are (mostly) identical"
        )
    return h


def select_centers(X, max_centers=2000, seed=0):
    """Landmark centers: all of ``X`` when small, k-means++ seeding otherwise."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if n <= max_centers:
        return X.copy()
    rng = np.random.Generator(np.random.Philox(seed))
    idx = [int(rng.integers(n))]
    d2 = np.sum((X - X[idx[0]]) ** 2, axis=1)
    for _ in range(max_centers - 1):
        total = d2.sum()
        if total <= 0:
            break
        j = int(rng.choice(n, p=d2 / total))
        idx.append(j)
        d2 = np.minimum(d2, np.sum((X - X[j]) ** 2, axis=1))
    return X[np.sort(idx)].copy()


def monomial_exponents(dim, degree):
    """Exponent table in graded-lex order, constant first.

    >>> monomial_exponents(2, 2).tolist()
    [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]]
    """
    rows = []
    for k in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(dim), k):
            e = [0] * dim
            for v in combo:
                e[v] += 1
            rows.append(e)
    return np.array(rows, dtype=int).reshape(-1, dim)


@dataclass(frozen=True)
class MonomialDictionary:
    dim: int
    degree: int
    exponents: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dim < 1 or self.degree < 0:
            raise ContractError("monomial dictionary needs dim >= 1, degree >= 0")
        object.__setattr__(self, "exponents", monomial_exponents(self.dim, self.degree))

    @property
    def n_features(self):
        return math.comb(self.dim + self.degree, self.degree)

    def _powers(self, X):
        # P[i, l, k] = x_il ** k for k = 0..degree
        return X[:, :, None] ** np.arange(self.degree + 1)

    def features(self, X):
        X = _as_2d(X, self.dim)
        P = self._powers(X)
        out = np.ones((X.shape[0], self.n_features))
        for l in range(self.dim):
            out *= P[:, l, self.exponents[:, l]]
        return out

    def gradients(self, X):
        X = _as_2d(X, self.dim)
        m = X.shape[0]
        P = self._powers(X)
        E = self.exponents
        G = np.empty((m, self.n_features, self.dim))
        for l in range(self.dim):
            g = np.ones((m, self.n_features))
            for q in range(self.dim):
                if q == l:
                    e = E[:, q]
                    g *= e * P[:, q, np.maximum(e - 1, 0)]
                else:
                    g *= P[:, q, E[:, q]]
            G[:, :, l] = g
        return G

    def to_dict(self):
        return {"kind": "monomial", "dim": self.dim, "degree": self.degree}


@dataclass(frozen=True)
class GaussianKernel:
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ContractError("gaussian kernel bandwidth must be positive")

    def __call__(self, X, Y):
        return np.exp(-pairwise_sq_dists(X, Y) / (2.0 * self.sigma**2))

    def grad1(self, X, Y):
        """Gradient in the first argument, shape (m, m', d)."""
        K = self(X, Y)
        diff = X[:, None, :] - Y[None, :, :]
        return -diff / self.sigma**2 * K[:, :, None]

    def to_dict(self):
        return {"kind": "gaussian_rbf", "sigma": self.sigma}


@dataclass(frozen=True)
class PolynomialKernel:
    degree: int
    offset: float = 1.0

    def __post_init__(self):
        if self.degree < 1 or self.offset < 0:
            raise ContractError("polynomial kernel needs degree >= 1, offset >= 0")

    def __call__(self, X, Y):
        return (X @ Y.T + self.offset) ** self.degree

    def grad1(self, X, Y):
        base = (X @ Y.T + self.offset) ** (self.degree - 1)
        return self.degree * base[:, :, None] * Y[None, :, :]

    def to_dict(self):
        return {"kind": "polynomial", "degree": self.degree, "offset": self.offset}


class KernelFeatures:
    """Dictionary ``psi_j(x) = k(x, c_j)`` induced by a kernel and centers."""

    def __init__(self, kernel, centers):
        self.kernel = kernel
        self.centers = np.array(_as_2d(centers, None, "centers"), dtype=float)
        if not np.all(np.isfinite(self.centers)):
            raise ContractError("centers must be finite")
        self.dim = self.centers.shape[1]

    @property
    def n_features(self):
        return self.centers.shape[0]

    def features(self, X):
        return self.kernel(_as_2d(X, self.dim), self.centers)

    def gradients(self, X):
        return self.kernel.grad1(_as_2d(X, self.dim), self.centers)

    def to_dict(self):
        return {
            "kind": "kernel_features",
            "kernel": self.kernel.to_dict(),
            "centers": self.centers.tolist(),
        }


class RBFDictionary(KernelFeatures):
    """Gaussian bumps ``exp(-||x - c_k||^2 / (2 sigma^2))`` at fixed centers."""

    def __init__(self, centers, bandwidth):
        super().__init__(GaussianKernel(float(bandwidth)), centers)

    @property
    def bandwidth(self):
        return self.kernel.sigma

    def to_dict(self):
        return {"kind": "rbf", "bandwidth": self.bandwidth, "centers": self.centers.tolist()}


def eval_dictionary(spec, X):
    return spec.features(X)


def eval_dictionary_grad(spec, x):
    """Rows are the gradients of each dictionary function at the single point x."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return spec.gradients(x)[0]


def gram(kernel, X, Y=None):
    X = _as_2d(X, None)
    Y = X if Y is None else _as_2d(Y, X.shape[1], "Y")
    return kernel(X, Y)


def kernel_from_dict(d):
    kind = d["kind"]
    if kind == "gaussian_rbf":
        return GaussianKernel(float(d["sigma"]))
    if kind == "polynomial":
        return PolynomialKernel(int(d["degree"]), float(d.get("offset", 1.0)))
    raise ContractError(f"unknown kernel kind {kind!r}")


def dictionary_from_dict(d):
    kind = d["kind"]
    if kind == "monomial":
        return MonomialDictionary(int(d["dim"]), int(d["degree"]))
    if kind == "rbf":
        return RBFDictionary(np.asarray(d["centers"], dtype=float), float(d["bandwidth"]))
    if kind == "kernel_features":
        return KernelFeatures(kernel_from_dict(d["kernel"]), np.asarray(d["centers"], dtype=float))
    raise ContractError(f"unknown dictionary kind {kind!r}")
