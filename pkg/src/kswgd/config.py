"""Experiment configuration: presets, schema checks and ``--set`` overrides.

A config file is YAML.  The only required key is ``preset``; everything else
defaults to the preset values and may be overridden section by section::

    preset: quadruple_well
    seed: 3
    sampler:
      h: 0.5

``validate_config`` collects every problem it finds (unknown keys, type and
range violations, missing files) and reports each with a dotted path into the
document.  A run manifest (``manifest.json``) is itself a valid config: its
``config`` entry is read back verbatim.
"""
from __future__ import annotations

import copy
import difflib
import json
import os
import re
from dataclasses import dataclass

import yaml

from .errors import ConfigError



class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e-6`` (no decimal point) as a float."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"),
    list("-+0123456789"),
)

PRESET_NAMES = ("ou_oracle", "s1_uniform", "quadruple_well", "latent_prediction")

_COMMON = {
    "preset": None,
    "seed": 0,
    "output": {"dir": None},
}

PRESETS = {
    "ou_oracle": {
        "data": {"n_pairs": 5000, "dt": 0.01, "pairs_file": None},
        "dictionary": {"kind": "monomial", "degree": 6},
        "spectral": {"source": "edmd", "r": 4, "reg": 0.0, "lam_floor": 1e-6, "tol_imag": 0.05,
                     "symmetrize": True, "log_generator": False},
        "sampler": {"n_particles": 200, "h": 0.1, "T_max": 300, "include_self": True,
                    "snapshot_stride": 0,
                    "stop": {"movement_max": None, "coverage_min": None},
                    "init": {"kind": "gaussian", "mean": [2.0], "std": 0.5}},
        "probes": {"kl_oracle": True},
    },
    "s1_uniform": {
        "data": {"n_pairs": 500, "dt": 0.05, "pairs_file": None, "score": "kde",
                 "minus_drift": False, "noise_scale": 1.0},
        "dictionary": {"kind": "gaussian_kernel", "bandwidth": 0.25},
        "spectral": {"r": 6, "reg": 1e-6, "lam_floor": 1e-6, "tol_imag": 0.05,
                     "symmetrize": True, "log_generator": False},
        "sampler": {"n_particles": 700, "h": 2.0, "T_max": 1000, "include_self": True,
                    "snapshot_stride": 0, "project": True,
                    "stop": {"movement_max": None, "coverage_min": None},
                    "init": {"kind": "circle_cap", "y_min": 0.7}},
        "probes": {},
    },
    "quadruple_well": {
        "data": {"n_pairs": 2500, "dt": 0.1, "pairs_file": None, "x0": [0.9, 0.9],
                 "discard": 500, "substeps": 10},
        "dictionary": {"kind": "monomial", "degree": 4},
        "spectral": {"r": None, "reg": 0.0, "lam_floor": 1e-6, "tol_imag": 0.05,
                     "symmetrize": True, "log_generator": False},
        "sampler": {"n_particles": 500, "h": 1.0, "T_max": 1000, "include_self": True,
                    "snapshot_stride": 0,
                    "stop": {"movement_max": 0.01, "coverage_min": 0.95},
                    "init": {"kind": "langevin", "burn_in": 500, "dt": 0.01,
                             "exclusion_radius": 0.4}},
        "probes": {"radius": 0.4},
    },
    "latent_prediction": {
        "data": {"ambient_dim": 20, "n_trajectories": 400, "n_steps": 20, "dt": 0.1,
                 "slow_rates": [0.3, 0.5, 0.8, 1.2], "fast_rate": 20.0,
                 "slow_noise": 0.3, "fast_noise": 0.3, "initial_offset": 3.0,
                 "initial_std": 0.1},
        "latent": {"d_latent": 4, "degree": 2, "reg": 1e-4, "horizons": [1, 2, 5],
                   "n_test": 2000},
    },
}

# dotted path -> (types, check, description).  ``None`` in types allows null.
_NUM = (int, float)
SCHEMA = {
    "preset": ((str,), None, "one of " + ", ".join(PRESET_NAMES)),
    "seed": ((int,), lambda v: v >= 0, "master seed, >= 0"),
    "output.dir": ((str, None), None, "output directory (overridden by --out)"),
    "data.n_pairs": ((int,), lambda v: v >= 2, "number of snapshot pairs, >= 2"),
    "data.dt": (_NUM, lambda v: v > 0, "time step, > 0"),
    "data.pairs_file": ((str, None), None, "load pairs from this CSV instead of simulating"),
    "data.score": ((str,), lambda v: v in ("kde", "zero"), "drift for static pairs: kde or zero"),
    "data.minus_drift": ((bool,), None, "use the minus-sign drift for static pairs"),
    "data.noise_scale": (_NUM, lambda v: v >= 0, "noise multiplier, >= 0"),
    "data.x0": ((list,), None, "initial state of the training trajectory"),
    "data.substeps": ((int,), lambda v: v >= 1, "integrator substeps per recorded step, >= 1"),
    "data.discard": ((int,), lambda v: v >= 0, "leading trajectory steps dropped, >= 0"),
    "data.ambient_dim": ((int,), lambda v: v >= 2, "ambient dimension, >= 2"),
    "data.n_trajectories": ((int,), lambda v: v >= 2, "training ensemble size, >= 2"),
    "data.n_steps": ((int,), lambda v: v >= 1, "steps per training trajectory, >= 1"),
    "data.slow_rates": ((list,), lambda v: len(v) >= 1 and all(x > 0 for x in v),
                        "relaxation rates of the slow directions, > 0"),
    "data.fast_rate": (_NUM, lambda v: v > 0, "relaxation rate of the fast directions, > 0"),
    "data.slow_noise": (_NUM, lambda v: v >= 0, "noise amplitude in slow directions, >= 0"),
    "data.fast_noise": (_NUM, lambda v: v >= 0, "noise amplitude in fast directions, >= 0"),
    "data.initial_offset": (_NUM, None, "initial mean along the slow directions"),
    "data.initial_std": (_NUM, lambda v: v >= 0, "initial spread, >= 0"),
    "dictionary.kind": ((str,), lambda v: v in ("monomial", "rbf", "gaussian_kernel",
                                                 "polynomial_kernel"),
                        "monomial, rbf, gaussian_kernel or polynomial_kernel"),
    "dictionary.degree": ((int,), lambda v: v >= 1, "polynomial degree, >= 1"),
    "dictionary.bandwidth": ((str, int, float),
                             lambda v: v == "median" if isinstance(v, str) else v > 0,
                             "'median' or a positive number"),
    "dictionary.max_centers": ((int,), lambda v: v >= 1, "cap on RBF centers, >= 1"),
    "dictionary.offset": (_NUM, lambda v: v >= 0, "polynomial kernel offset, >= 0"),
    "spectral.source": ((str,), lambda v: v in ("edmd", "exact"),
                        "edmd or exact (closed-form Hermite pairs)"),
    "spectral.r": ((int, None), lambda v: v >= 1, "truncation rank >= 1, or null for all"),
    "spectral.reg": (_NUM, lambda v: v >= 0, "ridge parameter, >= 0"),
    "spectral.lam_floor": (_NUM, lambda v: v >= 0, "eigenvalue floor, >= 0"),
    "spectral.tol_imag": (_NUM, lambda v: v >= 0, "relative imaginary-part tolerance, >= 0"),
    "spectral.symmetrize": ((bool,), None, "time-reversal symmetric estimator"),
    "spectral.log_generator": ((bool,), None, "use log(K)/dt instead of (K - I)/dt"),
    "sampler.n_particles": ((int,), lambda v: v >= 2, "number of particles, >= 2"),
    "sampler.h": (_NUM, lambda v: v > 0, "step size, > 0"),
    "sampler.T_max": ((int,), lambda v: v >= 1, "iteration cap, >= 1"),
    "sampler.include_self": ((bool,), None, "keep the j = i term"),
    "sampler.snapshot_stride": ((int,), lambda v: v >= 0, "snapshot every k iterations (0 = off)"),
    "sampler.project": ((bool,), None, "renormalize onto the circle after each step"),
    "sampler.stop.movement_max": ((int, float, None), lambda v: v > 0, "movement threshold, > 0"),
    "sampler.stop.coverage_min": ((int, float, None), lambda v: 0 <= v <= 1,
                                  "coverage threshold in [0, 1]"),
    "sampler.init.kind": ((str,), lambda v: v in ("gaussian", "circle_cap", "langevin"),
                          "gaussian, circle_cap or langevin"),
    "sampler.init.mean": ((list,), None, "mean of the initial particles"),
    "sampler.init.std": (_NUM, lambda v: v > 0, "spread of the initial particles, > 0"),
    "sampler.init.y_min": (_NUM, lambda v: -1 < v < 1, "lower bound of the cap, in (-1, 1)"),
    "sampler.init.burn_in": ((int,), lambda v: v >= 0, "Langevin burn-in steps, >= 0"),
    "sampler.init.dt": (_NUM, lambda v: v > 0, "burn-in time step, > 0"),
    "sampler.init.exclusion_radius": (_NUM, lambda v: v > 0, "well exclusion radius, > 0"),
    "probes.kl_oracle": ((bool,), None, "record the Gaussian KL proxy"),
    "probes.radius": (_NUM, lambda v: v > 0, "well coverage radius, > 0"),
    "latent.d_latent": ((int,), lambda v: v >= 1, "latent dimension, >= 1"),
    "latent.degree": ((int,), lambda v: v >= 1, "lift degree, >= 1"),
    "latent.reg": (_NUM, lambda v: v >= 0, "ridge parameter, >= 0"),
    "latent.horizons": ((list,), lambda v: len(v) >= 1 and all(isinstance(x, int) and x >= 1 for x in v),
                        "prediction horizons in steps, >= 1"),
    "latent.n_test": ((int,), lambda v: v >= 2, "test ensemble size, >= 2"),
}

OPTIONAL_KEYS = {"dictionary.degree", "dictionary.bandwidth", "dictionary.max_centers",
                 "dictionary.offset"}


@dataclass
class ExperimentConfig:
    """Resolved configuration: a nested dict plus convenience accessors."""

    data: dict

    @property
    def preset(self):
        return self.data["preset"]

    @property
    def seed(self):
        return self.data["seed"]

    def get(self, path, default=None):
        node = self.data
        for part in path.split("."):
            if not isinstance(node, dict) or part not in node:
                return default
            node = node[part]
        return node

    def section(self, name):
        return self.data.get(name, {})

    def to_dict(self):
        return copy.deepcopy(self.data)


def preset_defaults(name):
    out = copy.deepcopy(_COMMON)
    out.update(copy.deepcopy(PRESETS[name]))
    out["preset"] = name
    return out


def suggest_preset(name):
    match = difflib.get_close_matches(str(name), PRESET_NAMES, n=1, cutoff=0.0)
    return match[0] if match else None


def parse_override(text):
    """``"sampler.h=0.5"`` -> ``("sampler.h", 0.5)`` with the value parsed as YAML."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value",
                          [f"{text}: expected key=value"])
    key, value = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError("override has an empty key", [f"{text}: empty key"])
    return key, yaml.load(value, Loader=_Loader) if value.strip() else None


def set_path(doc, path, value):
    node = doc
    parts = path.split(".")
    for part in parts[:-1]:
        if not isinstance(node.get(part), dict):
            node[part] = {}
        node = node[part]
    node[parts[-1]] = value


def _merge(base, over, prefix, errors):
    for key, value in over.items():
        path = f"{prefix}{key}"
        if key not in base:
            if path in OPTIONAL_KEYS:
                base[key] = value
            else:
                close = difflib.get_close_matches(key, list(base), n=1)
                hint = f" (did you mean {prefix}{close[0]}?)" if close else ""
                errors.append(f"{path}: unknown key{hint}")
            continue
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                errors.append(f"{path}: expected a mapping")
            else:
                _merge(base[key], value, path + ".", errors)
        else:
            base[key] = value


def _check_leaves(doc, prefix, errors):
    for key, value in doc.items():
        path = f"{prefix}{key}"
        if isinstance(value, dict):
            _check_leaves(value, path + ".", errors)
            continue
        if path not in SCHEMA:
            errors.append(f"{path}: unknown key")
            continue
        types, check, desc = SCHEMA[path]
        if value is None:
            if None not in types:
                errors.append(f"{path}: must not be null ({desc})")
            continue
        allowed = tuple(t for t in types if t is not None)
        # bool is an int subclass; accept it only where bool is declared
        if isinstance(value, bool) and bool not in allowed:
            errors.append(f"{path}: expected {desc}, got {value!r}")
            continue
        if not isinstance(value, allowed):
            errors.append(f"{path}: expected {desc}, got {value!r}")
            continue
        try:
            ok = check is None or check(value)
        except TypeError:
            ok = False
        if not ok:
            errors.append(f"{path}: out of range, expected {desc}, got {value!r}")


def resolve(doc, overrides=(), seed=None, out=None, base_dir="."):
    """Merge a parsed document with its preset and apply overrides.

    Returns ``(ExperimentConfig or None, errors)``; never raises on bad input.
    """
    errors = []
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        return None, ["<root>: expected a mapping of keys to values"]
    if "config" in doc and "versions" in doc:
        doc = doc["config"]
    doc = copy.deepcopy(doc)
    override_pairs = []
    for item in overrides:
        try:
            override_pairs.append(parse_override(item) if isinstance(item, str) else item)
        except ConfigError as exc:
            errors.extend(exc.errors)
    for key, value in override_pairs:
        if key == "preset":
            doc["preset"] = value
    name = doc.get("preset")
    if name is None:
        errors.append("preset: required key missing (one of " + ", ".join(PRESET_NAMES) + ")")
        return None, errors
    if name not in PRESETS:
        errors.append(f"preset: unknown preset {name!r} (did you mean {suggest_preset(name)!r}?)")
        return None, errors
    resolved = preset_defaults(name)
    _merge(resolved, {k: v for k, v in doc.items() if k != "preset"}, "", errors)
    for key, value in override_pairs:
        if key == "preset":
            continue
        sub = {}
        set_path(sub, key, value)
        _merge(resolved, sub, "", errors)
    if seed is not None:
        resolved["seed"] = seed
    if out is not None:
        resolved["output"]["dir"] = out
    _check_leaves(resolved, "", errors)
    pf = resolved.get("data", {}).get("pairs_file")
    if isinstance(pf, str):
        path = pf if os.path.isabs(pf) else os.path.join(base_dir, pf)
        if not os.path.isfile(path):
            errors.append(f"data.pairs_file: file not found: {pf}")
        else:
            resolved["data"]["pairs_file"] = os.path.abspath(path)
    if errors:
        return None, errors
    return ExperimentConfig(resolved), []


def load_document(path):
    """Parse a YAML (or JSON) file; I/O problems propagate as ``OSError``."""
    with open(path) as fh:
        text = fh.read()
    try:
        if str(path).endswith(".json"):
            return json.loads(text)
        return yaml.load(text, Loader=_Loader)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}", [f"<root>: {exc}"]) from exc


def validate_config(path, overrides=(), seed=None, out=None):
    """Resolved ``ExperimentConfig``; raises ``ConfigError`` listing every problem."""
    doc = load_document(path)
    cfg, errors = resolve(doc, overrides, seed, out, base_dir=os.path.dirname(os.path.abspath(path)))
    if errors:
        raise ConfigError(f"{len(errors)} problem(s) in {path}", errors)
    return cfg


def describe_schema():
    """``(path, description)`` rows for documentation and the ``presets`` command."""
    return [(path, desc) for path, (_, _, desc) in SCHEMA.items()]
