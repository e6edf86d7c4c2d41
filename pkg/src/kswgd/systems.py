"""Ground-truth data generators: Langevin trajectories and potentials.

All randomness goes through ``make_rng``, which wraps numpy's counter-based
Philox bit generator keyed by an integer seed.  Two calls with the same
arguments therefore return bitwise-identical arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DivergenceError, InsufficientDataError, RenormalizationError

DIVERGENCE_BOUND = 1e6
QUADRUPLE_WELL_MINIMA = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]])


def make_rng(seed):
    """Philox4x64 generator; the only RNG used across the package."""
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True)
class PotentialSpec:
    """Either the 2-d quadruple well or a Gaussian (Ornstein-Uhlenbeck) target."""

    kind: str
    dim: int
    mean: np.ndarray = field(default=None, repr=False)
    precision: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind == "quadruple_well":
            if self.dim != 2:
                raise ContractError("quadruple_well is two-dimensional")
        elif self.kind == "ou_gaussian":
            mean = np.zeros(self.dim) if self.mean is None else np.asarray(self.mean, float)
            prec = np.eye(self.dim) if self.precision is None else np.asarray(self.precision, float)
            mean = mean.reshape(self.dim)
            prec = prec.reshape(self.dim, self.dim)
            if not np.allclose(prec, prec.T):
                raise ContractError("precision matrix must be symmetric")
            if np.linalg.eigvalsh(prec).min() <= 0:
                raise ContractError("precision matrix must be positive definite")
            object.__setattr__(self, "mean", mean)
            object.__setattr__(self, "precision", prec)
        else:
            raise ContractError(f"unknown potential kind {self.kind!r}")

    @classmethod
    def quadruple_well(cls):
        return cls("quadruple_well", 2)

    @classmethod
    def ou_gaussian(cls, mean=None, precision=None, dim=None):
        if dim is None:
            dim = len(np.atleast_1d(mean)) if mean is not None else np.atleast_2d(precision).shape[0]
        return cls("ou_gaussian", dim, mean, precision)

    def potential(self, X):
        X = np.atleast_2d(np.asarray(X, float))
        if self.kind == "quadruple_well":
            return np.sum((X**2 - 1.0) ** 2, axis=1)
        Z = X - self.mean
        return 0.5 * np.einsum("ij,jk,ik->i", Z, self.precision, Z)

    def grad(self, X):
        """Gradient of the potential, row-wise for a batch of points."""
        X = np.asarray(X, float)
        if X.shape[-1] != self.dim:
            raise ContractError(f"expected points of dimension {self.dim}, got {X.shape[-1]}")
        if self.kind == "quadruple_well":
            return 4.0 * X * (X**2 - 1.0)
        return (X - self.mean) @ self.precision

    def to_dict(self):
        d = {"kind": self.kind, "dim": self.dim}
        if self.kind == "ou_gaussian":
            d["mean"] = self.mean.tolist()
            d["precision"] = self.precision.tolist()
        return d


def potential_grad(spec, x):
    x = np.asarray(x, float)
    if x.ndim != 1 or x.shape[0] != spec.dim:
        raise ContractError(f"x must be a {spec.dim}-vector, got shape {x.shape}")
    return spec.grad(x)


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray
    dt: float
    seed: int | None = None

    def __post_init__(self):
        s = np.asarray(self.states, float)
        if s.ndim != 2 or s.shape[0] < 2:
            raise InsufficientDataError("a trajectory needs at least two states")
        if not np.all(np.isfinite(s)):
            raise ContractError("trajectory contains non-finite states")
        object.__setattr__(self, "states", s)

    @property
    def times(self):
        return self.dt * np.arange(self.states.shape[0])


def _check_divergence(x, step):
    if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > DIVERGENCE_BOUND:
        raise DivergenceError(
            f"Euler-Maruyama iterate left the bounded region at step {step}; reduce dt",
            step=step,
        )


def simulate_langevin(spec, x0, dt, n_steps, seed, noise_scale=1.0, substeps=1):
    """Euler-Maruyama for ``dX = -grad V dt + sqrt(2) dW``.

    ``x0`` may be a single point (returns a ``Trajectory``) or an (M, d) batch
    of independent chains (returns an array of shape (n_steps + 1, M, d)).
    With ``substeps > 1`` each recorded step of length ``dt`` is integrated
    as ``substeps`` Euler-Maruyama steps of length ``dt / substeps``; the
    explicit scheme on the quartic well is unstable at ``dt = 0.1`` once a
    state wanders past ``|x| ~ 2.4``.  ``noise_scale`` exists for testing
    the deterministic limit.
    """
    if not dt > 0:
        raise ContractError("dt must be positive")
    if n_steps < 1:
        raise ContractError("n_steps must be at least 1")
    if substeps < 1:
        raise ContractError("substeps must be at least 1")
    x = np.array(x0, dtype=float)
    batched = x.ndim == 2
    if x.shape[-1] != spec.dim:
        raise ContractError(f"x0 has dimension {x.shape[-1]}, potential has {spec.dim}")
    rng = make_rng(seed)
    h = dt / substeps
    amp = noise_scale * np.sqrt(2.0 * h)
    out = np.empty((n_steps + 1,) + x.shape)
    out[0] = x
    for k in range(n_steps):
        for _ in range(substeps):
            xi = rng.standard_normal(x.shape)
            x = x - h * spec.grad(x) + amp * xi
        _check_divergence(x, k + 1)
        out[k + 1] = x
    if batched:
        return out
    return Trajectory(out, float(dt), seed)


def sphere_langevin_step(X, dt, score_fn, rng, noise_scale=1.0):
    """One projected Euler-Maruyama step on the unit circle for a batch of points."""
    X = np.asarray(X, float)
    drift = np.zeros_like(X) if score_fn is None else np.asarray(score_fn(X), float).reshape(X.shape)
    xi = rng.standard_normal(X.shape)
    disp = dt * drift + noise_scale * np.sqrt(2.0 * dt) * xi
    # drop the radial part of the displacement
    disp -= np.sum(disp * X, axis=1, keepdims=True) * X
    Y = X + disp
    norms = np.linalg.norm(Y, axis=1, keepdims=True)
    if np.any(norms == 0.0) or not np.all(np.isfinite(norms)):
        raise RenormalizationError("zero-norm point during circle renormalization")
    return Y / norms


def simulate_sphere_langevin(x0, dt, n_steps, seed, score_fn=None, noise_scale=1.0):
    """Tangent-projected Langevin on S^1 with renormalization after every step.

    ``score_fn`` maps an (m, 2) array of points to the drift ``grad log pi``;
    ``None`` means the uniform target (zero score).  Like
    ``simulate_langevin``, a batch ``x0`` of shape (M, 2) is advanced jointly.
    """
    if not dt > 0:
        raise ContractError("dt must be positive")
    if n_steps < 1:
        raise ContractError("n_steps must be at least 1")
    x = np.array(x0, dtype=float)
    batched = x.ndim == 2
    X = np.atleast_2d(x)
    if X.shape[1] != 2:
        raise ContractError("S^1 points live in R^2")
    if np.max(np.abs(np.linalg.norm(X, axis=1) - 1.0)) > 1e-9:
        raise ContractError("x0 must lie on the unit circle")
    rng = make_rng(seed)
    out = np.empty((n_steps + 1,) + X.shape)
    out[0] = X
    for k in range(n_steps):
        X = sphere_langevin_step(X, dt, score_fn, rng, noise_scale)
        out[k + 1] = X
    if batched:
        return out
    return Trajectory(out[:, 0, :], float(dt), seed)


def sample_ou_stationary(spec, n, seed):
    """Exact draws from the Gaussian invariant law of an OU potential."""
    if spec.kind != "ou_gaussian":
        raise ContractError("stationary sampling is closed-form only for ou_gaussian")
    cov = np.linalg.inv(spec.precision)
    L = np.linalg.cholesky(cov)
    rng = make_rng(seed)
    return spec.mean + rng.standard_normal((n, spec.dim)) @ L.T


def uniform_circle(n, seed):
    rng = make_rng(seed)
    theta = rng.uniform(-np.pi, np.pi, size=n)
    return np.column_stack([np.cos(theta), np.sin(theta)])


def make_pairs_timeseries(traj):
    """Consecutive-state pairs ``(states[j], states[j+1])`` of a trajectory."""
    from .pairs import SnapshotPairs

    states = np.asarray(traj.states if isinstance(traj, Trajectory) else traj, float)
    if states.ndim != 2 or states.shape[0] < 2:
        raise InsufficientDataError("need at least two states to form a pair")
    return SnapshotPairs(states[:-1], states[1:], traj.dt)


def trajectory_to_csv(traj, path):
    """CSV with header ``t,x1,...,xd`` and 17 significant digits."""
    d = traj.states.shape[1]
    header = ",".join(["t"] + [f"x{i + 1}" for i in range(d)])
    table = np.column_stack([traj.times, traj.states])
    np.savetxt(path, table, delimiter=",", header=header, comments="", fmt="%.17g")
