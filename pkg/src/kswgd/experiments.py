"""End-to-end pipelines behind the four presets.

``run_experiment`` goes data -> pairs -> spectral fit -> particle flow ->
metrics and, when an output directory is configured, writes

    manifest.json      resolved config, derived seeds, library versions
    pairs.csv (+.json) training pairs
    spectrum.json      eigenvalues and metadata (+ coefficient/training CSVs)
    particles_initial.csv, particles_final.csv
    run_record.csv     per-iteration diagnostics
    summary.json       headline metrics and wall-clock time

All CSVs use 17 significant digits.  Sub-seeds are derived from the master
seed with ``numpy.random.SeedSequence`` so a manifest pins every stream.
"""
from __future__ import annotations

import json
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ExperimentConfig
from .dictionary import (
    GaussianKernel,
    MonomialDictionary,
    PolynomialKernel,
    RBFDictionary,
    median_heuristic,
    select_centers,
)
from .engine import Probes, StopRule, nearest_minimum_distance, run_kswgd, well_coverage
from .errors import ContractError
from .koopman import fit_edmd, fit_kernel_edmd, generator_spectrum
from .latent import fit_koopman_latent, fit_latent_map, predict_latent
from .metrics import GaussianOracle, circular_uniformity, decay_fit, gaussian_kl_proxy
from .oracles import exact_ou_model, hermite
from .pairs import SnapshotPairs
from .score import fit_kde_score
from .systems import (
    QUADRUPLE_WELL_MINIMA,
    PotentialSpec,
    Trajectory,
    make_pairs_timeseries,
    make_rng,
    sample_ou_stationary,
    simulate_langevin,
    sphere_langevin_step,
    uniform_circle,
)

SEED_STREAMS = ("data", "dynamics", "centers", "init", "test")


def derive_seeds(master):
    children = np.random.SeedSequence(int(master)).spawn(len(SEED_STREAMS))
    return {name: int(c.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
            for name, c in zip(SEED_STREAMS, children)}


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    seeds: dict
    summary: dict = field(default_factory=dict)
    pairs: SnapshotPairs = None
    model: object = None
    particles0: np.ndarray = None
    particles: np.ndarray = None
    record: object = None
    artifacts: list = field(default_factory=list)


# ---------------------------------------------------------------- data


def ou_pairs(n, dt, seed_data, seed_dynamics):
    """Exact stationary draws of N(0, 1), each advanced by one Euler-Maruyama step."""
    spec = PotentialSpec.ou_gaussian(dim=1)
    X = sample_ou_stationary(spec, n, seed_data)
    Y = simulate_langevin(spec, X, dt, 1, seed_dynamics)[-1]
    return SnapshotPairs(X, Y, dt)


def circle_pairs(n, dt, seed_data, seed_dynamics, score="kde", minus_drift=False, noise_scale=1.0):
    """Uniform samples on the circle, each advanced by one projected Langevin step."""
    X = uniform_circle(n, seed_data)
    score_fn = None
    if score == "kde":
        est = fit_kde_score(X)
        sign = -1.0 if minus_drift else 1.0
        score_fn = lambda P: sign * est.score(P)  # noqa: E731
    Y = sphere_langevin_step(X, dt, score_fn, make_rng(seed_dynamics), noise_scale)
    return SnapshotPairs(X, Y, dt)


def quadruple_well_pairs(n, dt, seed, x0=(0.9, 0.9), discard=500, substeps=10):
    """Consecutive pairs of one Langevin trajectory after dropping ``discard`` steps."""
    spec = PotentialSpec.quadruple_well()
    traj = simulate_langevin(spec, x0, dt, n + discard, seed, substeps=substeps)
    return make_pairs_timeseries(Trajectory(traj.states[discard:], dt, seed))


def _pairs_for(cfg, seeds):
    d = cfg.section("data")
    if d.get("pairs_file"):
        return SnapshotPairs.from_csv(d["pairs_file"])
    if cfg.preset == "ou_oracle":
        return ou_pairs(d["n_pairs"], d["dt"], seeds["data"], seeds["dynamics"])
    if cfg.preset == "s1_uniform":
        return circle_pairs(d["n_pairs"], d["dt"], seeds["data"], seeds["dynamics"],
                            d["score"], d["minus_drift"], d["noise_scale"])
    if cfg.preset == "quadruple_well":
        return quadruple_well_pairs(d["n_pairs"], d["dt"], seeds["data"], d["x0"], d["discard"],
                                    d["substeps"])
    raise ContractError(f"preset {cfg.preset} has no pair generator")


# ---------------------------------------------------------------- spectral fit


def _bandwidth(value, X):
    return median_heuristic(X) if value in (None, "median") else float(value)


def fit_model(cfg, pairs, seeds):
    dct = cfg.section("dictionary")
    sp = cfg.section("spectral")
    kind = dct["kind"]
    if kind == "monomial":
        est = fit_edmd(pairs, MonomialDictionary(pairs.dim, dct.get("degree", 2)), sp["reg"])
    elif kind == "rbf":
        centers = select_centers(pairs.X, dct.get("max_centers", 200), seeds["centers"])
        bw = _bandwidth(dct.get("bandwidth", "median"), pairs.X)
        est = fit_edmd(pairs, RBFDictionary(centers, bw), sp["reg"])
    elif kind == "gaussian_kernel":
        est = fit_kernel_edmd(pairs, GaussianKernel(_bandwidth(dct.get("bandwidth", "median"), pairs.X)),
                              sp["reg"])
    elif kind == "polynomial_kernel":
        est = fit_kernel_edmd(pairs, PolynomialKernel(dct.get("degree", 2), dct.get("offset", 1.0)),
                              sp["reg"])
    else:
        raise ContractError(f"unknown dictionary kind {kind!r}")
    return generator_spectrum(est, r=sp["r"], lam_floor=sp["lam_floor"], tol_imag=sp["tol_imag"],
                              symmetrize=sp["symmetrize"], log_generator=sp["log_generator"])


# ---------------------------------------------------------------- particles


def langevin_particles(n_chains, burn_in, dt, exclusion_radius, start_pool, seed):
    """Quadruple-well chains started from ``start_pool``, run ``burn_in`` steps,
    with every chain ending within ``exclusion_radius`` of a minimum removed."""
    rng = make_rng(seed)
    starts = start_pool[rng.integers(0, len(start_pool), n_chains)]
    if burn_in > 0:
        spec = PotentialSpec.quadruple_well()
        starts = simulate_langevin(spec, starts, dt, burn_in, seed + 1)[-1]
    dist = nearest_minimum_distance(starts, QUADRUPLE_WELL_MINIMA)
    return starts[dist > exclusion_radius]


def circle_cap_particles(n, y_min, seed):
    """Angles uniform on the arc of the unit circle where ``y > y_min``."""
    rng = make_rng(seed)
    lo = np.arcsin(y_min)
    theta = rng.uniform(lo, np.pi - lo, n)
    return np.column_stack([np.cos(theta), np.sin(theta)])


def _initial_particles(cfg, pairs, seeds):
    s = cfg.section("sampler")
    init = s["init"]
    M = s["n_particles"]
    if init["kind"] == "gaussian":
        mean = np.asarray(init["mean"], float)
        return mean + init["std"] * make_rng(seeds["init"]).standard_normal((M, mean.size))
    if init["kind"] == "circle_cap":
        return circle_cap_particles(M, init["y_min"], seeds["init"])
    if init["kind"] == "langevin":
        P = langevin_particles(M, init["burn_in"], init["dt"], init["exclusion_radius"],
                               pairs.X, seeds["init"])
        if len(P) < 2:
            raise ContractError("fewer than two particles survived the well exclusion")
        return P
    raise ContractError(f"unknown init kind {init['kind']!r}")


def project_to_circle(P):
    return P / np.linalg.norm(P, axis=1, keepdims=True)


# ---------------------------------------------------------------- latent preset


def slow_fast_system(D, slow_rates, fast_rate, slow_noise, fast_noise, seed):
    """Symmetric linear SDE ``dX = -A X dt + S dW`` with a few slow directions
    hidden behind a random rotation.  Returns ``(A, S, basis)``."""
    k = len(slow_rates)
    if not k < D:
        raise ContractError("need fewer slow directions than ambient dimensions")
    basis, _ = np.linalg.qr(make_rng(seed).standard_normal((D, D)))
    rates = np.concatenate([np.asarray(slow_rates, float), np.full(D - k, float(fast_rate))])
    noise = np.concatenate([np.full(k, float(slow_noise)), np.full(D - k, float(fast_noise))])
    A = basis @ np.diag(rates) @ basis.T
    S = basis @ np.diag(noise) @ basis.T
    return A, S, basis, rates, noise


def linear_sde_transition(basis, rates, noise, dt):
    """Exact one-step map ``x' = F x + chol(Q) xi`` of the slow/fast system."""
    decay = np.exp(-rates * dt)
    var = noise**2 * (1.0 - decay**2) / (2.0 * rates)
    F = basis @ np.diag(decay) @ basis.T
    C = basis @ np.diag(np.sqrt(var))
    return F, C


def simulate_linear_sde(F, C, X0, n_steps, seed):
    rng = make_rng(seed)
    out = np.empty((n_steps + 1,) + X0.shape)
    out[0] = X = np.asarray(X0, float)
    for k in range(n_steps):
        X = X @ F.T + rng.standard_normal(X.shape) @ C.T
        out[k + 1] = X
    return out


def _run_latent(cfg, seeds):
    d = cfg.section("data")
    lt = cfg.section("latent")
    D = d["ambient_dim"]
    _, _, basis, rates, noise = slow_fast_system(D, d["slow_rates"], d["fast_rate"],
                                                 d["slow_noise"], d["fast_noise"], seeds["data"])
    F, C = linear_sde_transition(basis, rates, noise, d["dt"])
    k = len(d["slow_rates"])
    m0 = basis[:, :k] @ np.full(k, float(d["initial_offset"]))

    def ensemble(n, seed):
        return m0 + d["initial_std"] * make_rng(seed).standard_normal((n, D))

    train = simulate_linear_sde(F, C, ensemble(d["n_trajectories"], seeds["init"]), d["n_steps"],
                                seeds["dynamics"])
    snapshots = train.reshape(-1, D)
    enc = fit_latent_map(snapshots, lt["d_latent"])
    Z = enc.encode(train.reshape(-1, D)).reshape(train.shape[0], train.shape[1], -1)
    pairs = SnapshotPairs(Z[:-1].reshape(-1, Z.shape[2]), Z[1:].reshape(-1, Z.shape[2]), d["dt"])
    model = fit_koopman_latent(pairs, p=lt["degree"], reg=lt["reg"])
    test0 = ensemble(lt["n_test"], seeds["test"])
    z0 = enc.encode(test0)
    rows = []
    for hzn in lt["horizons"]:
        pred = enc.decode(predict_latent(model, z0, hzn).mean(axis=0))
        truth = np.linalg.matrix_power(F, hzn) @ test0.mean(axis=0)
        rel = float(np.linalg.norm(pred - truth) / np.linalg.norm(truth))
        rows.append({"horizon": hzn, "relative_error": rel})
    return pairs, model, enc, rows


# ---------------------------------------------------------------- driver


def _versions():
    return {"kswgd": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _write_matrix(path, header, M):
    np.savetxt(path, M, delimiter=",", header=",".join(header), comments="", fmt="%.17g")


def _particle_csv(path, P):
    P = np.atleast_2d(P)
    rows = np.column_stack([np.arange(len(P)), P])
    header = ["particle_id"] + [f"x{i + 1}" for i in range(P.shape[1])]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join([str(int(row[0]))] + [format(v, ".17g") for v in row[1:]]) + "\n")


def _summary_for(cfg, result):
    P, rec, model = result.particles, result.record, result.model
    out = {"iterations": len(rec), "converged_at": rec.converged_at,
           "support_warnings": rec.support_warnings, "rank": model.rank,
           "eigenvalues": model.eigenvalues.tolist()}
    if cfg.preset == "ou_oracle":
        kl = rec.column("kl_proxy")
        out["kl_initial"] = gaussian_kl_proxy(result.particles0, GaussianOracle([0.0], [[1.0]]))
        out["kl_final"] = float(kl[-1])
        if kl.size >= 20:
            fit = decay_fit(np.concatenate([[out["kl_initial"]], kl]))
            out["decay_rate"], out["decay_floor"], out["decay_poor_fit"] = fit.rate, fit.floor, fit.poor_fit
        if result.pairs is not None:
            F = model.eval(result.pairs.X)
            x = result.pairs.X[:, 0]
            out["hermite_correlation"] = [
                float(abs(np.corrcoef(F[:, i], hermite(i + 1, x))[0, 1])) for i in range(model.rank)
            ]
    elif cfg.preset == "s1_uniform":
        R, ks = circular_uniformity(project_to_circle(P))
        out["resultant_length"], out["ks_statistic"] = R, ks
        out["max_norm_deviation"] = float(np.max(np.abs(np.linalg.norm(P, axis=1) - 1.0)))
    elif cfg.preset == "quadruple_well":
        dist = nearest_minimum_distance(P, QUADRUPLE_WELL_MINIMA)
        out["n_particles"] = int(len(P))
        out["final_coverage"] = well_coverage(P, QUADRUPLE_WELL_MINIMA, cfg.get("probes.radius"))
        out["fraction_within_0.3"] = float(np.mean(dist <= 0.3))
        out["median_distance"] = float(np.median(dist))
    return out


def run_experiment(cfg, out_dir=None):
    """Run the preset described by ``cfg``; write artifacts when a directory is given."""
    out_dir = out_dir if out_dir is not None else cfg.get("output.dir")
    seeds = derive_seeds(cfg.seed)
    result = ExperimentResult(cfg, seeds)
    t0 = time.perf_counter()
    if cfg.preset == "latent_prediction":
        pairs, model, enc, rows = _run_latent(cfg, seeds)
        result.pairs, result.model = pairs, model
        result.summary = {"latent_errors": rows}
    else:
        sp = cfg.section("spectral")
        if cfg.preset == "ou_oracle" and sp.get("source") == "exact":
            result.model = exact_ou_model(sp["r"] or 4)
        else:
            result.pairs = _pairs_for(cfg, seeds)
            result.model = fit_model(cfg, result.pairs, seeds)
        s = cfg.section("sampler")
        P0 = _initial_particles(cfg, result.pairs, seeds)
        probes = Probes()
        if cfg.preset == "quadruple_well":
            probes = Probes(QUADRUPLE_WELL_MINIMA, cfg.get("probes.radius"))
        if cfg.get("probes.kl_oracle"):
            probes.kl_oracle = GaussianOracle([0.0], [[1.0]])
        stop = StopRule(s["stop"]["movement_max"], s["stop"]["coverage_min"])
        projection = project_to_circle if s.get("project") else None
        result.particles0 = P0
        result.particles, result.record = run_kswgd(
            P0, result.model, s["h"], s["T_max"], stop, probes, s["include_self"],
            projection=projection, snapshot_stride=s["snapshot_stride"])
        result.summary = _summary_for(cfg, result)
    result.summary["wall_time"] = time.perf_counter() - t0
    if out_dir:
        _write_artifacts(result, Path(out_dir))
    return result


def _write_artifacts(result, out):
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    written = []
    manifest = {"config": cfg.to_dict(), "seeds": result.seeds, "versions": _versions()}
    manifest["config"]["output"]["dir"] = str(out)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    written.append("manifest.json")
    if result.pairs is not None:
        result.pairs.to_csv(out / "pairs.csv")
        written += ["pairs.csv", "pairs.csv.json"]
    if cfg.preset == "latent_prediction":
        K = result.model.K
        _write_matrix(out / "koopman_matrix.csv", [f"c{i}" for i in range(K.shape[1])], K)
        (out / "spectrum.json").write_text(json.dumps({
            "degree": result.model.degree, "d_latent": result.model.d_latent,
            "dt": result.model.dt, "matrix_file": "koopman_matrix.csv",
            "koopman_eigenvalues_abs": sorted(np.abs(np.linalg.eigvals(K)).tolist(), reverse=True),
        }, indent=2) + "\n")
        rows = result.summary["latent_errors"]
        with open(out / "latent_errors.csv", "w") as fh:
            fh.write("horizon,relative_error\n")
            for r in rows:
                fh.write(f"{r['horizon']},{format(r['relative_error'], '.17g')}\n")
        written += ["koopman_matrix.csv", "spectrum.json", "latent_errors.csv"]
    else:
        result.model.save(out / "spectrum.json")
        written += ["spectrum.json", "spectrum.coef.csv", "spectrum.train.csv", "spectrum.weights.csv"]
        _particle_csv(out / "particles_initial.csv", result.particles0)
        _particle_csv(out / "particles_final.csv", result.particles)
        result.record.to_csv(out / "run_record.csv")
        written += ["particles_initial.csv", "particles_final.csv", "run_record.csv"]
        if result.record.snapshots:
            result.record.snapshots_to_csv(out / "particles_snapshots.csv")
            written.append("particles_snapshots.csv")
    (out / "summary.json").write_text(json.dumps(result.summary, indent=2, default=_json_default) + "\n")
    written.append("summary.json")
    result.artifacts = [str(out / w) for w in written]


def _json_default(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(type(v).__name__)
