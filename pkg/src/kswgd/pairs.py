"""Snapshot pairs, the training set for every Koopman fit."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError


@dataclass(frozen=True)
class SnapshotPairs:
    """N ordered pairs ``(X[j], Y[j])`` one step ``dt`` apart."""

    X: np.ndarray
    Y: np.ndarray
    dt: float

    def __post_init__(self):
        X = np.asarray(self.X, float)
        Y = np.asarray(self.Y, float)
        if X.ndim == 1:
            X = X[:, None]
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.shape != Y.shape:
            raise ContractError(f"X and Y shapes differ: {X.shape} vs {Y.shape}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ContractError("snapshot pairs must be finite")
        if not self.dt > 0:
            raise ContractError("dt must be positive")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def n_pairs(self):
        return self.X.shape[0]

    @property
    def dim(self):
        return self.X.shape[1]

    def to_csv(self, path):
        """Write ``x1..xd,y1..yd`` rows plus a JSON sidecar ``<path>.json``."""
        path = Path(path)
        d = self.dim
        header = ",".join([f"x{i + 1}" for i in range(d)] + [f"y{i + 1}" for i in range(d)])
        np.savetxt(path, np.hstack([self.X, self.Y]), delimiter=",", header=header,
                   comments="", fmt="%.17g")
        sidecar = {"n_pairs": self.n_pairs, "dim": d, "dt": self.dt}
        Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2) + "\n")

    @classmethod
    def from_csv(cls, path):
        path = Path(path)
        meta = json.loads(Path(str(path) + ".json").read_text())
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        d = int(meta["dim"])
        if data.shape != (int(meta["n_pairs"]), 2 * d):
            raise ContractError(f"{path}: table shape {data.shape} disagrees with sidecar")
        return cls(data[:, :d], data[:, d:], float(meta["dt"]))
