"""Koopman regression, generator spectra and the truncated inverse kernel.

The convention throughout is column-vector coefficients over a dictionary
``psi``: an observable ``f = psi . c`` is advanced by ``T f ~ psi . (K c)``,
where ``K`` solves the (ridge) normal equations ``(C0 + gamma I) K = C1`` with
``C0 = Psi_X^T Psi_X / N`` and ``C1 = Psi_X^T Psi_Y / N``.

Generator eigenpairs are reported for ``L = -A``, so eigenvalues are positive
and sorted ascending; the near-zero constant mode is discarded.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .dictionary import KernelFeatures, dictionary_from_dict
from .errors import (
    ConditioningError,
    ContractError,
    RankDeficiencyError,
    RegularizationRequiredError,
)

__all__ = [
    "KoopmanEstimate",
    "SpectralModel",
    "fit_edmd",
    "fit_kernel_edmd",
    "generator_spectrum",
    "eval_eigenfunctions",
    "eval_eigenfunction_grads",
    "kernel_value",
    "kernel_grad1",
    "projection_residual",
]


@dataclass
class KoopmanEstimate:
    """A fitted transfer-operator matrix together with what produced it."""

    matrix: np.ndarray
    features: object
    psi_x: np.ndarray
    psi_y: np.ndarray
    X: np.ndarray
    dt: float
    reg_matrix: np.ndarray
    method: str = "edmd"

    @property
    def n_features(self):
        return self.matrix.shape[0]


def _check_features(pairs, features):
    dim = getattr(features, "dim", None)
    if dim is not None and pairs.dim != dim:
        raise ContractError(f"pairs have dimension {pairs.dim}, dictionary expects {dim}")


def fit_edmd(pairs, dictionary, reg=0.0):
    """Ridge EDMD: ``(Psi_X^T Psi_X / N + reg I) K = Psi_X^T Psi_Y / N``."""
    if reg < 0:
        raise ContractError("regularization must be non-negative")
    _check_features(pairs, dictionary)
    N = pairs.n_pairs
    psi_x = dictionary.features(pairs.X)
    psi_y = dictionary.features(pairs.Y)
    n = psi_x.shape[1]
    C0 = psi_x.T @ psi_x / N
    C1 = psi_x.T @ psi_y / N
    R = reg * np.eye(n)
    A = C0 + R
    if reg == 0:
        s = np.linalg.svd(A, compute_uv=False)
        if s[-1] <= s[0] * n * np.finfo(float).eps:
            raise RegularizationRequiredError(
                f"normal matrix is singular (sigma_min/sigma_max = {s[-1] / s[0]:.3g}); use reg > 0"
            )
    K = np.linalg.solve(A, C1)
    if not np.all(np.isfinite(K)):
        raise RegularizationRequiredError("EDMD solve produced non-finite entries")
    return KoopmanEstimate(K, dictionary, psi_x, psi_y, pairs.X, pairs.dt, R, "edmd")


def fit_kernel_edmd(pairs, kernel, reg):
    """Kernel EDMD in Gram coordinates, ``K = (G + reg N I)^{-1} k(Y, X)``.

    Equivalent to EDMD over the features ``k(., x_j)`` with an RKHS-norm
    penalty; eigenfunctions are ``phi(x) = k(x, X) . v``.
    """
    if not reg > 0:
        raise ContractError("kernel EDMD needs reg > 0")
    features = KernelFeatures(kernel, pairs.X)
    N = pairs.n_pairs
    G = features.features(pairs.X)
    G = 0.5 * (G + G.T)
    psi_y = features.features(pairs.Y)
    try:
        cho = scipy.linalg.cho_factor(G + reg * N * np.eye(N))
    except np.linalg.LinAlgError:
        lam_min = float(np.linalg.eigvalsh(G).min())
        raise ConditioningError(
            f"Gram factorization failed; smallest Gram eigenvalue {lam_min:.3g}", lam_min
        ) from None
    K = scipy.linalg.cho_solve(cho, psi_y)
    return KoopmanEstimate(K, features, G, psi_y, pairs.X, pairs.dt, reg * G, "kernel_edmd")


def _whitened_eigh(A, B, rcond):
    """Solve ``A v = w B v`` for symmetric A and PSD B on the range of B."""
    b, U = np.linalg.eigh(0.5 * (B + B.T))
    keep = b > rcond * b.max()
    T = U[:, keep] / np.sqrt(b[keep])
    w, Q = np.linalg.eigh(T.T @ (0.5 * (A + A.T)) @ T)
    return w, T @ Q


@dataclass
class SpectralModel:
    """Leading generator eigenpairs over a dictionary.

    Column ``i`` of ``coefficients`` expresses ``phi_i`` over ``features``.
    ``X_train``/``weights`` define the empirical measure used for the
    normalization and for projections.
    """

    eigenvalues: np.ndarray
    coefficients: np.ndarray
    features: object
    dt: float
    X_train: np.ndarray
    weights: np.ndarray = None
    norms: np.ndarray = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.eigenvalues = np.asarray(self.eigenvalues, float).ravel()
        self.coefficients = np.asarray(self.coefficients, float)
        if self.coefficients.ndim == 1:
            self.coefficients = self.coefficients[:, None]
        r = self.eigenvalues.size
        if r < 1:
            raise ContractError("a spectral model needs at least one eigenpair")
        if self.coefficients.shape[1] != r:
            raise ContractError("one coefficient column per eigenvalue is required")
        if np.any(self.eigenvalues <= 0):
            raise ContractError("retained eigenvalues must be positive")
        self.X_train = np.atleast_2d(np.asarray(self.X_train, float))
        if self.weights is None:
            n = self.X_train.shape[0]
            self.weights = np.full(n, 1.0 / n)
        self.weights = np.asarray(self.weights, float)
        if self.norms is None:
            self.norms = np.ones(r)
        self._support_radius = float(np.max(np.linalg.norm(self.X_train, axis=1)))

    @classmethod
    def from_eigenpairs(cls, features, coefficients, eigenvalues, X_train, weights=None,
                        dt=1.0, normalize=False):
        """Build a model from externally supplied (e.g. analytic) eigenpairs."""
        model = cls(eigenvalues, coefficients, features, dt, X_train, weights)
        if normalize:
            model._normalize()
        return model

    @property
    def rank(self):
        return self.eigenvalues.size

    @property
    def dim(self):
        return self.X_train.shape[1]

    @property
    def support_radius(self):
        return self._support_radius

    def _normalize(self):
        F = self.features.features(self.X_train) @ self.coefficients
        norms = np.sqrt(self.weights @ F**2)
        if np.any(norms == 0):
            raise RankDeficiencyError("an eigenfunction vanishes on the training set")
        self.coefficients = self.coefficients / norms
        F = F / norms
        idx = np.argmax(np.abs(F), axis=0)
        signs = np.sign(F[idx, np.arange(F.shape[1])])
        self.coefficients = self.coefficients * signs
        self.norms = norms

    def _points(self, X):
        X = np.asarray(X, float)
        if X.ndim == 1:
            X = X.reshape(1, -1) if X.shape[0] == self.dim else X[:, None]
        if X.shape[1] != self.dim:
            raise ContractError(f"points have dimension {X.shape[1]}, model expects {self.dim}")
        return X

    def eval(self, X):
        """``(m, r)`` matrix of ``phi_i(x_j)``."""
        return self.features.features(self._points(X)) @ self.coefficients

    def grads(self, X):
        """``(m, r, d)`` array of ``grad phi_i(x_j)``."""
        J = self.features.gradients(self._points(X))
        return np.einsum("mnd,nr->mrd", J, self.coefficients)

    def eval_and_grads(self, X):
        X = self._points(X)
        return self.eval(X), self.grads(X)

    def inner_products(self, f_values):
        """Empirical ``<f, phi_i>`` over the training measure."""
        f = np.asarray(f_values, float).ravel()
        if f.size != self.X_train.shape[0]:
            raise ContractError("f_values must have one entry per training point")
        return self.eval(self.X_train).T @ (self.weights * f)

    def truncated_inverse(self, f_values):
        """Dictionary coefficients of ``K_r f = sum_i <f, phi_i> phi_i / lambda_i``."""
        return self.coefficients @ (self.inner_products(f_values) / self.eigenvalues)

    def projection(self, f_values):
        """Dictionary coefficients of ``sum_i <f, phi_i> phi_i``."""
        return self.coefficients @ self.inner_products(f_values)

    def to_dict(self):
        return {
            "r": self.rank,
            "eigenvalues": self.eigenvalues.tolist(),
            "dt": self.dt,
            "dictionary": self.features.to_dict(),
            "normalization": {"norms_before": self.norms.tolist()},
            "diagnostics": {k: v for k, v in self.diagnostics.items() if _jsonable(v)},
        }

    def save(self, path):
        """``<path>`` JSON header plus ``.coef.csv``, ``.train.csv`` and ``.weights.csv``."""
        path = Path(path)
        header = self.to_dict()
        stem = path.with_suffix("")
        files = {"coefficients": stem.name + ".coef.csv", "X_train": stem.name + ".train.csv",
                 "weights": stem.name + ".weights.csv"}
        header["files"] = files
        path.write_text(json.dumps(header, indent=2) + "\n")
        np.savetxt(path.parent / files["coefficients"], self.coefficients, delimiter=",", fmt="%.17g")
        np.savetxt(path.parent / files["X_train"], self.X_train, delimiter=",", fmt="%.17g")
        np.savetxt(path.parent / files["weights"], self.weights, delimiter=",", fmt="%.17g")

    @classmethod
    def load(cls, path):
        path = Path(path)
        header = json.loads(path.read_text())
        files = header["files"]
        r = int(header["r"])
        coef = np.loadtxt(path.parent / files["coefficients"], delimiter=",", ndmin=2)
        if coef.shape[1] != r:
            coef = coef.reshape(-1, r)
        X = np.loadtxt(path.parent / files["X_train"], delimiter=",", ndmin=2)
        w = np.loadtxt(path.parent / files["weights"], delimiter=",", ndmin=1)
        features = dictionary_from_dict(header["dictionary"])
        if X.shape[1] != getattr(features, "dim", X.shape[1]):
            X = X.reshape(-1, features.dim)
        return cls(np.asarray(header["eigenvalues"]), coef, features, float(header["dt"]), X, w,
                   np.asarray(header["normalization"]["norms_before"]),
                   dict(header.get("diagnostics", {})))


def _jsonable(v):
    try:
        json.dumps(v)
        return True
    except TypeError:
        return False


def generator_spectrum(estimate, r=None, lam_floor=1e-6, tol_imag=0.05, symmetrize=False,
                       log_generator=False, rcond=1e-12, lam_max=None, const_tol=1e-3):
    """Leading eigenpairs of the generator ``L = -A`` estimated from ``estimate``.

    ``A = (K - I) / dt`` by default or ``log(K) / dt`` with ``log_generator``.
    With ``symmetrize`` the regression is replaced by its time-reversal
    symmetric counterpart, a generalized symmetric eigenproblem whose spectrum
    is real by construction.  Modes at or below ``lam_floor`` and complex modes
    with ``|Im lambda| > tol_imag |lambda|`` are dropped; the ``r`` smallest
    survivors are kept (all of them, up to ``lam_max``, when ``r`` is None).

    Dictionaries that do not contain the constants (RBF bumps) reproduce the
    constant mode only approximately, so its eigenvalue can land above
    ``lam_floor``.  Modes whose training evaluations have variance below
    ``const_tol`` times their mean square are dropped as well.
    """
    dt = estimate.dt
    if r is not None and r < 1:
        raise ContractError("r must be at least 1")
    n_complex = 0
    if symmetrize:
        N = estimate.psi_x.shape[0]
        dpsi = estimate.psi_y - estimate.psi_x
        R = estimate.reg_matrix
        # C0_sym - C1_sym = dPsi^T dPsi / 2N, formed directly to avoid cancellation
        A = dpsi.T @ dpsi / (2.0 * N) + R
        B = (estimate.psi_x.T @ estimate.psi_x + estimate.psi_y.T @ estimate.psi_y) / (2.0 * N) + R
        one_minus_mu, V = _whitened_eigh(A, B, rcond)
        mu = 1.0 - one_minus_mu
        if log_generator:
            with np.errstate(divide="ignore", invalid="ignore"):
                lam = np.where(mu > 0, -np.log(np.where(mu > 0, mu, 1.0)) / dt, np.inf)
        else:
            lam = one_minus_mu / dt
        all_lam = lam.astype(complex)
        valid = np.isfinite(lam) & (lam > lam_floor)
        lam, V = lam[valid], V[:, valid]
    else:
        mu, W = np.linalg.eig(estimate.matrix)
        if log_generator:
            lam_c = -np.log(mu.astype(complex)) / dt
        else:
            lam_c = (1.0 - mu) / dt
        all_lam = lam_c
        ok = np.isfinite(lam_c) & (lam_c.real > lam_floor)
        complex_bad = np.abs(lam_c.imag) > tol_imag * np.abs(lam_c)
        n_complex = int(np.count_nonzero(ok & complex_bad & (lam_c.imag > 0)))
        lam_list, vec_list = [], []
        for k in np.flatnonzero(ok & ~complex_bad):
            if lam_c[k].imag < 0 and np.abs(lam_c[k].imag) > 0:
                continue  # conjugate partner handled with its Im > 0 twin
            v = W[:, k]
            lam_list.append(lam_c[k].real)
            vec_list.append(v.real)
            if lam_c[k].imag > 0:
                lam_list.append(lam_c[k].real)
                vec_list.append(v.imag)
        lam = np.array(lam_list)
        V = np.array(vec_list).T if vec_list else np.zeros((estimate.n_features, 0))
        if n_complex:
            warnings.warn(f"discarded {n_complex} complex eigenvalue pair(s) beyond tol_imag",
                          RuntimeWarning, stacklevel=2)

    order = np.argsort(lam, kind="stable")
    lam, V = lam[order], V[:, order]
    n_constant = 0
    if lam.size and const_tol > 0:
        F = estimate.psi_x @ V
        ms = np.mean(F * F, axis=0)
        flat = F.var(axis=0) <= const_tol * np.where(ms > 0, ms, 1.0)
        n_constant = int(np.count_nonzero(flat))
        lam, V = lam[~flat], V[:, ~flat]
    if lam_max is not None:
        keep = lam <= lam_max
        lam, V = lam[keep], V[:, keep]
    found = lam.size
    if r is None:
        if found == 0:
            raise RankDeficiencyError("no generator eigenvalue above the floor", found=0, requested=1)
        r_used = found
    else:
        if found < r:
            raise RankDeficiencyError(
                f"only {found} valid generator eigenpairs above the floor, {r} requested",
                found=found, requested=r,
            )
        r_used = r
    lam, V = lam[:r_used], V[:, :r_used]

    full_sorted = all_lam[np.argsort(all_lam.real, kind="stable")]
    diagnostics = {
        "n_discarded_complex": n_complex,
        "n_discarded_constant": n_constant,
        "n_valid": int(found),
        "symmetrized": bool(symmetrize),
        "method": estimate.method,
        "spectrum_real": full_sorted.real.tolist(),
        "spectrum_imag": full_sorted.imag.tolist(),
    }
    model = SpectralModel(lam, V, estimate.features, dt, estimate.X, diagnostics=diagnostics)
    model._normalize()
    return model


def eval_eigenfunctions(model, X):
    return model.eval(X)


def eval_eigenfunction_grads(model, x):
    """``(r, d)`` matrix whose row ``k`` is ``grad phi_k(x)``."""
    x = np.asarray(x, float).reshape(1, -1)
    return model.grads(x)[0]


def kernel_value(model, x, y):
    """``K_r(x, y) = sum_i phi_i(x) phi_i(y) / lambda_i``."""
    fx = model.eval(np.asarray(x, float).reshape(1, -1))[0]
    fy = model.eval(np.asarray(y, float).reshape(1, -1))[0]
    return float(np.sum(fx * fy / model.eigenvalues))


def kernel_grad1(model, x, y):
    """Gradient of ``K_r`` in its first argument."""
    gx = eval_eigenfunction_grads(model, x)
    fy = model.eval(np.asarray(y, float).reshape(1, -1))[0]
    return (fy / model.eigenvalues) @ gx


def projection_residual(model, f_values):
    """``||(I - Pi_r) f||`` in the empirical L2 norm of the training measure.

    ``Pi_r`` is the weighted least-squares projector onto the span of the
    retained eigenfunctions, which coincides with the spectral projector when
    they are orthonormal.
    """
    f = np.asarray(f_values, float).ravel()
    w = model.weights
    if f.size != w.size:
        raise ContractError("f_values must have one entry per training point")
    F = model.eval(model.X_train)
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(F * sw[:, None], f * sw, rcond=None)
    resid = f - F @ coef
    return float(np.sqrt(w @ resid**2))
