"""Deterministic KSWGD particle flow.

Every particle moves along ``-(h / M) sum_j grad_1 K_r(x_i, x_j)`` with all
terms evaluated at the pre-step positions.  The double sum factorizes,

    sum_j grad_1 K_r(x_i, x_j) = sum_k grad phi_k(x_i) * S_k / lambda_k,
    S_k = sum_j phi_k(x_j),

so a step costs one evaluation of the eigenfunctions and their gradients at
the M particles instead of M^2 kernel gradients.
"""
from __future__ import annotations

import csv
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import BlowupError, ContractError

RUN_RECORD_COLUMNS = ("iter", "movement_rate", "coverage", "kl_proxy", "max_velocity")


def _particles(model, P):
    P = np.asarray(P, float)
    if P.ndim == 1:
        P = P[:, None] if model.dim == 1 else P[None, :]
    if P.shape[1] != model.dim:
        raise ContractError(f"particles have dimension {P.shape[1]}, model expects {model.dim}")
    if P.shape[0] < 1:
        raise ContractError("need at least one particle")
    return P


def velocities(model, particles, include_self=True):
    """``(M, d)`` array of ``sum_j grad_1 K_r(x_i, x_j)`` for every particle."""
    P = _particles(model, particles)
    F, G = model.eval_and_grads(P)
    inv_lam = 1.0 / model.eigenvalues
    V = np.einsum("mkd,k->md", G, F.sum(axis=0) * inv_lam)
    if not include_self:
        V -= np.einsum("mkd,mk->md", G, F * inv_lam)
    bad = ~np.all(np.isfinite(V), axis=1)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise BlowupError(f"non-finite velocity for particle {i}", particle=i)
    return V


def velocity(model, particles, i, include_self=True):
    """Velocity sum for the single particle ``i`` (same convention as ``velocities``)."""
    P = _particles(model, particles)
    F = model.eval(P)
    g = model.grads(P[i:i + 1])[0]
    w = F.sum(axis=0)
    if not include_self:
        w = w - F[i]
    v = (w / model.eigenvalues) @ g
    if not np.all(np.isfinite(v)):
        raise BlowupError(f"non-finite velocity for particle {i}", particle=i)
    return v


@dataclass
class ParticleEnsemble:
    positions: np.ndarray
    h: float
    iteration: int = 0

    def __post_init__(self):
        self.positions = np.array(self.positions, dtype=float)
        if self.positions.ndim == 1:
            self.positions = self.positions[:, None]
        if not np.all(np.isfinite(self.positions)):
            raise ContractError("particle positions must be finite")
        if not self.h > 0:
            raise ContractError("step size h must be positive")


def kswgd_step(particles, model, h, include_self=True):
    """One synchronous update ``x_i <- x_i - (h / M) v_i``.

    Accepts a raw ``(M, d)`` array (returns the new array) or a
    ``ParticleEnsemble`` (returns a new ensemble with the counter advanced).
    """
    if not h > 0:
        raise ContractError("step size h must be positive")
    if isinstance(particles, ParticleEnsemble):
        P = particles.positions
        new = P - (h / P.shape[0]) * velocities(model, P, include_self)
        return ParticleEnsemble(new, particles.h, particles.iteration + 1)
    P = _particles(model, particles)
    return P - (h / P.shape[0]) * velocities(model, P, include_self)


def movement_rate(prev, nxt):
    prev = np.asarray(prev, float)
    nxt = np.asarray(nxt, float)
    if prev.shape != nxt.shape:
        raise ContractError(f"shape mismatch {prev.shape} vs {nxt.shape}")
    if prev.ndim == 1:
        prev, nxt = prev[:, None], nxt[:, None]
    return float(np.mean(np.linalg.norm(nxt - prev, axis=1)))


def well_coverage(particles, minima, radius):
    if not radius > 0:
        raise ContractError("radius must be positive")
    minima = np.atleast_2d(np.asarray(minima, float))
    if minima.size == 0:
        raise ContractError("at least one minimum is required")
    P = np.atleast_2d(np.asarray(particles, float))
    d = np.linalg.norm(P[:, None, :] - minima[None, :, :], axis=2).min(axis=1)
    return float(np.mean(d <= radius))


def nearest_minimum_distance(particles, minima):
    P = np.atleast_2d(np.asarray(particles, float))
    minima = np.atleast_2d(np.asarray(minima, float))
    return np.linalg.norm(P[:, None, :] - minima[None, :, :], axis=2).min(axis=1)


@dataclass
class StopRule:
    """Stop when movement rate and coverage thresholds are both met.

    Either threshold may be None (ignored).  With both None only ``T_max``
    ends the run.
    """

    movement_max: float = None
    coverage_min: float = None

    @classmethod
    def max_iterations(cls):
        return cls()

    @classmethod
    def movement_and_coverage(cls, movement_max=0.01, coverage_min=0.95):
        return cls(movement_max, coverage_min)

    def active(self):
        return self.movement_max is not None or self.coverage_min is not None

    def __call__(self, row):
        if not self.active():
            return False
        if self.movement_max is not None and not row["movement_rate"] <= self.movement_max:
            return False
        if self.coverage_min is not None:
            cov = row.get("coverage")
            if cov is None or np.isnan(cov) or not cov >= self.coverage_min:
                return False
        return True


@dataclass
class Probes:
    """Optional per-iteration measurements."""

    minima: np.ndarray = None
    radius: float = 0.4
    kl_oracle: object = None


@dataclass
class RunRecord:
    rows: list = field(default_factory=list)
    wall_time: float = 0.0
    converged_at: int = None
    support_warnings: int = 0
    snapshots: list = field(default_factory=list)
    error: str = None

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(RUN_RECORD_COLUMNS)
            for r in self.rows:
                w.writerow([r["iter"]] + [_fmt(r[c]) for c in RUN_RECORD_COLUMNS[1:]])

    def snapshots_to_csv(self, path):
        if not self.snapshots:
            raise ContractError("no particle snapshots were recorded")
        d = self.snapshots[0][1].shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "particle_id"] + [f"x{i + 1}" for i in range(d)])
            for it, P in self.snapshots:
                for pid, x in enumerate(P):
                    w.writerow([it, pid] + [_fmt(v) for v in x])


def _fmt(v):
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return "nan"
    return format(float(v), ".17g")


def run_kswgd(particles0, model, h, T_max, stop=None, probes=None, include_self=True,
              projection=None, snapshot_stride=0, support_factor=3.0):
    """Iterate ``kswgd_step`` and collect a ``RunRecord``.

    ``projection`` is an optional map applied to the positions after every
    step (e.g. renormalization onto a manifold).  Snapshots of the positions
    are kept every ``snapshot_stride`` iterations (and at the start and end)
    when the stride is positive.  On a numerical failure the partial record is
    attached to the raised exception as ``exc.record``.
    """
    if T_max < 1:
        raise ContractError("T_max must be at least 1")
    if not h > 0:
        raise ContractError("step size h must be positive")
    stop = stop or StopRule()
    probes = probes or Probes()
    P = _particles(model, particles0).copy()
    M = P.shape[0]
    record = RunRecord()
    if snapshot_stride > 0:
        record.snapshots.append((0, P.copy()))
    limit = support_factor * model.support_radius
    warned = False
    t0 = time.perf_counter()
    for t in range(1, T_max + 1):
        try:
            V = velocities(model, P, include_self)
        except BlowupError as exc:
            record.wall_time = time.perf_counter() - t0
            record.error = str(exc)
            exc.record = record
            raise
        new = P - (h / M) * V
        if projection is not None:
            new = projection(new)
        row = {
            "iter": t,
            "movement_rate": movement_rate(P, new),
            "coverage": np.nan,
            "kl_proxy": np.nan,
            "max_velocity": float(np.max(np.linalg.norm(V, axis=1)) / M),
        }
        if probes.minima is not None:
            row["coverage"] = well_coverage(new, probes.minima, probes.radius)
        if probes.kl_oracle is not None:
            from .metrics import gaussian_kl_proxy

            row["kl_proxy"] = gaussian_kl_proxy(new, probes.kl_oracle)
        P = new
        record.rows.append(row)
        if np.max(np.linalg.norm(P, axis=1)) > limit:
            record.support_warnings += 1
            if not warned:
                warnings.warn(
                    f"particles left {support_factor:g}x the training support radius at iteration {t}",
                    RuntimeWarning, stacklevel=2,
                )
                warned = True
        if snapshot_stride > 0 and t % snapshot_stride == 0:
            record.snapshots.append((t, P.copy()))
        if stop(row):
            record.converged_at = t
            break
    if snapshot_stride > 0 and record.snapshots[-1][0] != len(record.rows):
        record.snapshots.append((len(record.rows), P.copy()))
    record.wall_time = time.perf_counter() - t0
    return P, record
