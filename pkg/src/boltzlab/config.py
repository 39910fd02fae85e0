"""Experiment configuration: a YAML file with an experiment kind plus
keyword parameters; a config and master seed determine every random stream."""

from dataclasses import dataclass, field
from pathlib import Path

import yaml

__all__ = ["ExperimentConfig", "ValidationError", "load_config", "KINDS"]

KINDS = ("scatter", "kernel", "operator", "grazing", "gibbs", "covariance",
         "cluster-verify", "kinetic", "report-data")

_REQUIRED = {
    "scatter": ["batch_file"],
    "kernel": ["s", "alpha", "speeds"],
    "operator": ["s", "alpha", "modes", "velocities"],
    "grazing": ["s", "alphas", "modes"],
    "gibbs": ["mu", "s", "alpha", "epsilon", "dimension"],
    "covariance": ["mu", "s", "alpha", "dimension", "t_max", "n_times",
                   "replicas", "g_mode", "h_mode"],
    "cluster-verify": ["n_particles", "t", "draws", "s", "alpha", "epsilon"],
    "kinetic": ["s", "alpha", "dimension", "degree", "mean_free_path",
                "g_mode", "t_grid"],
    "report-data": ["sources"],
}

_DEFAULTS = {
    "chi": "poly_bump",
    "budget": 20000,
    "n_nodes": 64,
    "degree": 6,
    "sweeps": 200,
    "burn_in": 60,
    "thin": 4,
    "n_chains": 32,
}


class ValidationError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass
class ExperimentConfig:
    kind: str
    params: dict
    seed: int = 0
    out_dir: str = "out"
    threads: int = 1

    def validate(self):
        problems = []
        if self.kind not in KINDS:
            problems.append(f"unknown experiment kind {self.kind!r}")
        else:
            for key in _REQUIRED[self.kind]:
                if key not in self.params:
                    problems.append(f"missing field {key!r} for {self.kind}")
        if not isinstance(self.seed, int):
            problems.append("seed must be an integer")
        if self.threads < 1:
            problems.append("threads must be >= 1")
        for key in ("s", "alpha", "mu", "epsilon", "t_max"):
            if key in self.params and not isinstance(self.params[key],
                                                     (int, float)):
                problems.append(f"field {key!r} must be numeric")
        if problems:
            raise ValidationError(problems)
        return self

    def param(self, key, default=None):
        if key in self.params:
            return self.params[key]
        if key in _DEFAULTS:
            return _DEFAULTS[key]
        return default

    def as_dict(self):
        return {"kind": self.kind, "params": self.params, "seed": self.seed}


def load_config(path, overrides=None) -> ExperimentConfig:
    raw = yaml.safe_load(Path(path).read_text())
    if not isinstance(raw, dict) or "kind" not in raw:
        raise ValidationError(["config must be a mapping with a 'kind' key"])
    kind = raw.pop("kind")
    seed = int(raw.pop("seed", 0))
    out_dir = raw.pop("out_dir", "out")
    threads = int(raw.pop("threads", 1))
    cfg = ExperimentConfig(kind=kind, params=raw, seed=seed, out_dir=out_dir,
                           threads=threads)
    for key, val in (overrides or {}).items():
        if val is not None:
            setattr(cfg, key, val)
    return cfg.validate()
