"""Experiment drivers behind the CLI: each kind reads an ExperimentConfig,
runs the corresponding study, and writes CSV/JSONL plus a manifest."""

import json
import time
from pathlib import Path

import numpy as np

from . import io as bio
from . import rng as rngmod
from .config import ExperimentConfig
from .core import PhaseState, PotentialSpec, mean_free_path
from .testfunctions import hermite

__all__ = ["run"]


def _spec(cfg, **over):
    kw = {"s": float(cfg.param("s")), "alpha": float(cfg.param("alpha")),
          "chi": cfg.param("chi"), "epsilon": float(cfg.param("epsilon", 0.01))}
    kw.update(over)
    return PotentialSpec(**kw)


def _mode(mode_spec) -> tuple:
    return tuple(int(k) for k in mode_spec)


def run(config: ExperimentConfig):
    """Execute the named experiment; returns (exit_code, outputs)."""
    config.validate()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    runner = _RUNNERS[config.kind]
    try:
        outputs, extra = runner(config, out_dir)
        status = "ok"
        code = 0
    except Exception as exc:  # noqa: BLE001 - report and flag the manifest
        bio.write_manifest(out_dir, config.kind, config.as_dict(), [],
                           time.time() - t0, status=f"failed: {exc}")
        return 3, []
    bio.write_manifest(out_dir, config.kind, config.as_dict(), outputs,
                       time.time() - t0, status=status, extra=extra)
    return code, outputs


# ---------------------------------------------------------------------------


def _run_scatter(cfg, out_dir):
    from .scattering import contact_from_impact, scatter_batch
    rows = []
    batch = Path(cfg.params["batch_file"]).read_text().split("\n")
    for line in batch:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        s, alpha, rho, w, seed = line.split()
        spec = PotentialSpec(s=float(s), alpha=float(alpha), chi=cfg.param("chi"))
        rng = rngmod.stream(int(seed), "scatter-batch")
        w_vec = np.array([float(w), 0.0, 0.0])
        phi = 2.0 * np.pi * rng.random()
        rho_vec = float(rho) * np.array([0.0, np.cos(phi), np.sin(phi)])
        nu = contact_from_impact(rho_vec[None], w_vec[None], np.zeros((1, 3)))
        out = scatter_batch(spec, nu, 0.5 * w_vec[None], -0.5 * w_vec[None])
        rows.append({
            "s": float(s), "alpha": float(alpha), "rho": float(rho),
            "w": float(w), "seed": int(seed), "ok": bool(out["ok"][0]),
            "deflection": float(out["deflection"][0]),
            "duration": float(out["duration"][0]),
            "nu_prime": out["nu_prime"][0].tolist(),
            "v_prime": out["v_prime"][0].tolist(),
            "v_star_prime": out["v_star_prime"][0].tolist(),
            "res_momentum": float(out["res_momentum"][0]),
            "res_energy": float(out["res_energy"][0]),
            "res_angular_momentum": float(out["res_angular_momentum"][0]),
        })
    path = bio.write_jsonl(out_dir / "outcomes.jsonl", rows)
    return [path], {"n_collisions": len(rows)}


def _run_kernel(cfg, out_dir):
    from .kernel import DeflectionMap, cutoff_integral, kernel_table
    spec = _spec(cfg)
    speeds = [float(v) for v in cfg.params["speeds"]]
    rows = kernel_table(spec, speeds)
    path = bio.write_csv(out_dir / "kernel_table.csv",
                         ["s", "alpha", "speed", "cos_theta", "density"], rows)
    checks = []
    for w in speeds:
        dm = DeflectionMap(spec, w)
        val, err = cutoff_integral(spec, w, dmap=dm)
        checks.append({"speed": w, "integral": val, "exact": np.pi * w,
                       "rel_error": abs(val - np.pi * w) / (np.pi * w),
                       "quad_error": err})
    jpath = bio.write_jsonl(out_dir / "cutoff_check.jsonl", checks)
    return [path, jpath], {}


def _run_operator(cfg, out_dir):
    from .linops import apply_boltzmann, apply_landau
    spec = _spec(cfg)
    budget = int(cfg.param("budget"))
    rows = []
    for mode in cfg.params["modes"]:
        g = hermite(_mode(mode))
        for vi, v in enumerate(cfg.params["velocities"]):
            v = np.asarray(v, dtype=float)
            lb = apply_boltzmann(spec, g, v, budget=budget,
                                 seed=rngmod.spawn_int(cfg.seed, "op", vi))
            ll = apply_landau(g, v, budget=budget,
                              seed=rngmod.spawn_int(cfg.seed, "opK", vi))
            rows.append({"mode": list(mode), "v": v.tolist(),
                         "boltzmann": lb.value, "boltzmann_stderr": lb.std_error,
                         "landau": ll.value, "landau_stderr": ll.std_error,
                         "n_samples": lb.n_samples})
    path = bio.write_jsonl(out_dir / "operator.jsonl", rows)
    return [path], {}


def _run_grazing(cfg, out_dir):
    from .linops import coulomb_log_study, grazing_limit_study
    s = float(cfg.param("s"))
    alphas = [float(a) for a in cfg.params["alphas"]]
    budget = int(cfg.param("budget"))
    n_nodes = int(cfg.param("n_nodes"))
    outputs = []
    if s == 1.0:
        g = hermite(_mode(cfg.params["modes"][0]))
        rows = coulomb_log_study(alphas, g, budget=budget, n_nodes=n_nodes,
                                 seed=cfg.seed, chi=cfg.param("chi"))
        path = bio.write_csv(
            out_dir / "coulomb_ratios.csv",
            ["alpha", "dss_alpha", "norm", "stderr", "ratio_log", "ratio_plain"],
            [(r["alpha"], r["dss_alpha"], r["norm"], r["stderr"],
              r["ratio_log"], r["ratio_plain"]) for r in rows])
        outputs.append(path)
    else:
        all_rows = []
        for mode in cfg.params["modes"]:
            g = hermite(_mode(mode))
            rows = grazing_limit_study(s, alphas, g, budget=budget,
                                       n_nodes=n_nodes, seed=cfg.seed,
                                       chi=cfg.param("chi"))
            for r in rows:
                all_rows.append(("h" + "".join(str(m) for m in mode),
                                 r["alpha"], r["dss_alpha"], r["error"],
                                 r["stderr"]))
        path = bio.write_csv(out_dir / "grazing.csv",
                             ["mode", "alpha", "dss_alpha", "error", "stderr"],
                             all_rows)
        outputs.append(path)
    return outputs, {}


def _run_gibbs(cfg, out_dir):
    from .gibbs import (GrandCanonicalConfig, equilibrium_covariance, sample)
    spec = _spec(cfg)
    gc = GrandCanonicalConfig(
        mu=float(cfg.params["mu"]), spec=spec,
        dimension=int(cfg.params["dimension"]), rng_seed=cfg.seed,
        n_chains=int(cfg.param("n_chains")), sweeps=int(cfg.param("sweeps")),
        burn_in=int(cfg.param("burn_in")), thin=int(cfg.param("thin")))
    ens = sample(gc)
    fpath = bio.write_frames(out_dir / "ensemble.bin", ens.states, cfg.seed)
    with open(out_dir / "ensemble.json", "w") as f:
        json.dump({"mu": gc.mu, "dimension": gc.dimension, "s": spec.s,
                   "alpha": spec.alpha, "chi": spec.chi,
                   "epsilon": spec.epsilon, "seed": cfg.seed,
                   "acceptance": {k: float(v) for k, v in ens.acceptance.items()}},
                  f, indent=2, sort_keys=True)
    d = gc.dimension
    stats = []
    probes = [((0,) * d), (2,) + (0,) * (d - 1), (1,) + (0,) * (d - 1)]
    for mode in probes:
        g = hermite(mode)
        cov, err, neff = equilibrium_covariance(ens, g, g, gc.mu)
        stats.append(("h" + "".join(map(str, mode)), cov, err, neff))
    cpath = bio.write_csv(out_dir / "field_stats.csv",
                          ["mode", "covariance", "stderr", "n_effective"],
                          stats)
    return [fpath, out_dir / "ensemble.json", cpath], {}


def _run_covariance(cfg, out_dir):
    from .dynamics import DtPolicy, covariance_experiment, detect_pathologies, evolve
    from .gibbs import GrandCanonicalConfig, sample
    from .solver import (KineticStateHomogeneous, assemble_boltzmann_matrix,
                         project_testfunction, solve_linearized_boltzmann)
    d = int(cfg.params["dimension"])
    mu = float(cfg.params["mu"])
    dss = float(cfg.param("mean_free_path",
                          mean_free_path(float(cfg.param("s")),
                                         float(cfg.param("alpha")))))
    eps = (1.0 / (mu * dss)) ** (1.0 / (d - 1))
    spec = _spec(cfg, epsilon=eps)
    gc = GrandCanonicalConfig(mu=mu, spec=spec, dimension=d, rng_seed=cfg.seed,
                              sweeps=int(cfg.param("sweeps", 120)),
                              burn_in=int(cfg.param("burn_in", 60)))
    g = hermite(_mode(cfg.params["g_mode"]))
    h = hermite(_mode(cfg.params["h_mode"]))
    tgrid = np.linspace(0.0, float(cfg.params["t_max"]),
                        int(cfg.params["n_times"]))
    tgrid[0] = 1e-9
    policy = DtPolicy(encounter_substeps=int(cfg.param("encounter_substeps", 384)))
    res = covariance_experiment(gc, g, h, tgrid, int(cfg.params["replicas"]),
                                policy=policy, threads=config_threads(cfg))
    mdpath = bio.write_csv(out_dir / "covariance_md.csv",
                           ["t", "estimate", "stderr", "n_replicas"],
                           [(t, e, se, res["n_replicas"]) for t, e, se in
                            zip(res["t"], res["estimate"], res["stderr"])])
    # kinetic prediction with the same mean free path
    modes, A = assemble_boltzmann_matrix(
        spec, d, int(cfg.param("degree")), budget=int(cfg.param("budget", 200000)),
        seed=rngmod.spawn_int(cfg.seed, "galerkin"),
        cache_dir=out_dir / "cache")
    g0 = KineticStateHomogeneous(modes, project_testfunction(g, modes))
    hc = project_testfunction(h, modes)
    sols = solve_linearized_boltzmann(g0, A, dss, res["t"])
    kpath = bio.write_csv(out_dir / "covariance_kinetic.csv",
                          ["t", "prediction"],
                          [(t, float(hc @ st.coeffs))
                           for t, st in zip(res["t"], sols)])
    # pathology rates from a single long replica
    ens = sample(GrandCanonicalConfig(mu=mu, spec=spec, dimension=d,
                                      rng_seed=rngmod.spawn_int(cfg.seed, "path"),
                                      n_chains=1, sweeps=80, burn_in=40,
                                      thin=40))
    traj = evolve(ens.states[-1], spec, float(cfg.params["t_max"]), policy,
                  sample_times=np.linspace(0.0, float(cfg.params["t_max"]), 8))
    rep = detect_pathologies(traj, eps)
    with open(out_dir / "pathologies.json", "w") as f:
        json.dump({"epsilon": eps, **{k: (float(v) if np.isscalar(v) else v)
                                      for k, v in rep.items()}}, f, indent=2,
                  sort_keys=True)
    ppath = bio.write_csv(out_dir / "pathology_rates.csv",
                          ["epsilon", "recollision_rate", "multiple_rate",
                           "encounter_rate"],
                          [(eps, rep["recollision_rate"], rep["multiple_rate"],
                            rep["encounter_rate"])])
    return [mdpath, kpath, out_dir / "pathologies.json", ppath], {
        "epsilon": eps, "mean_free_path": dss}


def _run_cluster_verify(cfg, out_dir):
    from .cluster import verify_expansion
    spec = _spec(cfg)
    N = int(cfg.params["n_particles"])
    t = float(cfg.params["t"])
    draws = int(cfg.params["draws"])
    rows = []
    for k in range(draws):
        rng = rngmod.stream(cfg.seed, "cluster-verify", k)
        st = PhaseState(rng.random((N, 2)), rng.standard_normal((N, 2)))

        def h(p, v):
            return float(v[0] + 0.25 * v[0] ** 2)

        rep = verify_expansion(h, st, spec, t)
        rows.append({"instance_seed": k, "N": N, "t": t,
                     "residual": rep["residual"],
                     "n_terms": rep["n_terms"],
                     "n_trajectories": rep["n_trajectories"]})
    path = out_dir / "cluster_verify.json"
    with open(path, "w") as f:
        json.dump({"instances": rows,
                   "max_residual": max(r["residual"] for r in rows)},
                  f, indent=2, sort_keys=True)
    return [path], {}


def _run_kinetic(cfg, out_dir):
    from .solver import (KineticStateHomogeneous, assemble_boltzmann_matrix,
                         project_testfunction, solve_linearized_boltzmann)
    d = int(cfg.params["dimension"])
    spec = _spec(cfg)
    modes, A = assemble_boltzmann_matrix(
        spec, d, int(cfg.param("degree")), budget=int(cfg.param("budget", 200000)),
        seed=rngmod.spawn_int(cfg.seed, "galerkin"), cache_dir=out_dir / "cache")
    g0 = KineticStateHomogeneous(modes,
                                 project_testfunction(hermite(_mode(cfg.params["g_mode"])), modes))
    tgrid = [float(t) for t in cfg.params["t_grid"]]
    sols = solve_linearized_boltzmann(g0, A, float(cfg.params["mean_free_path"]),
                                      tgrid)
    rows = []
    for t, st in zip(tgrid, sols):
        for mode, c in zip(st.modes, st.coeffs):
            if abs(c) > 1e-14:
                rows.append((t, "h" + "".join(map(str, mode)), float(np.real(c))))
    path = bio.write_csv(out_dir / "kinetic.csv", ["t", "mode_id", "coefficient"],
                         rows)
    return [path], {}


def _run_report_data(cfg, out_dir):
    index = {}
    for src in cfg.params["sources"]:
        src = Path(src)
        if not src.exists():
            raise FileNotFoundError(f"source directory {src} does not exist")
        files = sorted(p.name for p in src.iterdir() if p.is_file())
        index[str(src)] = files
    path = out_dir / "report_index.json"
    with open(path, "w") as f:
        json.dump(index, f, indent=2, sort_keys=True)
    return [path], {}


def config_threads(cfg):
    return max(int(cfg.threads), 1)


_RUNNERS = {
    "scatter": _run_scatter,
    "kernel": _run_kernel,
    "operator": _run_operator,
    "grazing": _run_grazing,
    "gibbs": _run_gibbs,
    "covariance": _run_covariance,
    "cluster-verify": _run_cluster_verify,
    "kinetic": _run_kinetic,
    "report-data": _run_report_data,
}
