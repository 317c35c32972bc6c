"""Experiment configuration: flat `key = value` text files, shipped
presets, and environment overrides (BISAMP_SEED, BISAMP_WORKERS).

Every field has a default; the fully resolved configuration is echoed to
the output directory and re-parses to an identical configuration.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields, replace
from importlib import resources
from pathlib import Path
from typing import Dict, List

__all__ = [
    "ExperimentConfig",
    "parse_config_text",
    "format_config",
    "config_from_text",
    "load_config_file",
    "load_preset",
    "preset_names",
    "apply_env_overrides",
    "ENV_PREFIX",
]

ENV_PREFIX = "BISAMP_"


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str = "deblur"  # deblur | inpaint
    image: str = ""  # ground-truth PGM path; "" uses the built-in phantom
    image_size: int = 64  # phantom size when image == ""
    kernel: str = "uniform9"  # kernel file path or "uniform<k>"
    mask: str = ""  # mask PGM path or "blocks" for the built-in block mask
    sigma: float = math.sqrt(0.001)
    gamma: float = 5.0
    constraint: str = "box"
    alpha: float = 1e-8
    sampler: str = "rto"  # rto | myula | gibbs
    seed: int = 0
    workers: int = 1
    out: str = "out"

    admm_rho: float = 1.0
    admm_tol: float = 1e-4
    admm_maxiter: int = 2000
    admm_primal_only: bool = False
    admm_cg_tol: float = 1e-8
    admm_cg_maxiter: int = 500

    pd_n_iters: int = 50

    rto_n_samples: int = 1000
    rto_init: str = "map"

    myula_total_iters: int = 1_000_000
    myula_burn_in: int = 25_000
    myula_thinning: int = 250
    myula_delta: float = 0.0  # 0 selects the reference default
    myula_alpha1: float = 0.0  # 0 selects sigma^2 / ||A^T A||
    myula_alpha2: float = 0.0

    gibbs_n_samples: int = 500
    gibbs_a_lambda: float = 1.0
    gibbs_b_lambda: float = 1e-4
    gibbs_a_gamma: float = 1.0
    gibbs_b_gamma: float = 1e-4

    diag_basis: str = "auto"  # auto | fourier | pixel
    diag_directions: int = 8
    diag_max_lag: int = 50

    def __post_init__(self):
        if self.problem not in ("deblur", "inpaint"):
            raise ValueError(f"problem must be deblur or inpaint, got {self.problem!r}")
        if self.sampler not in ("rto", "myula", "gibbs"):
            raise ValueError(f"sampler must be rto, myula or gibbs, got {self.sampler!r}")
        if self.diag_basis not in ("auto", "fourier", "pixel"):
            raise ValueError(f"diag_basis must be auto, fourier or pixel, got {self.diag_basis!r}")


# config-file key <-> dataclass attribute
_KEYMAP = {
    "problem": "problem",
    "image": "image",
    "image_size": "image_size",
    "kernel": "kernel",
    "mask": "mask",
    "sigma": "sigma",
    "gamma": "gamma",
    "constraint": "constraint",
    "alpha": "alpha",
    "sampler": "sampler",
    "seed": "seed",
    "workers": "workers",
    "out": "out",
    "admm.rho": "admm_rho",
    "admm.tol": "admm_tol",
    "admm.maxiter": "admm_maxiter",
    "admm.primal_only": "admm_primal_only",
    "admm.cg_tol": "admm_cg_tol",
    "admm.cg_maxiter": "admm_cg_maxiter",
    "pd.n_iters": "pd_n_iters",
    "rto.n_samples": "rto_n_samples",
    "rto.init": "rto_init",
    "myula.total_iters": "myula_total_iters",
    "myula.burn_in": "myula_burn_in",
    "myula.thinning": "myula_thinning",
    "myula.delta": "myula_delta",
    "myula.alpha1": "myula_alpha1",
    "myula.alpha2": "myula_alpha2",
    "gibbs.n_samples": "gibbs_n_samples",
    "gibbs.a_lambda": "gibbs_a_lambda",
    "gibbs.b_lambda": "gibbs_b_lambda",
    "gibbs.a_gamma": "gibbs_a_gamma",
    "gibbs.b_gamma": "gibbs_b_gamma",
    "diag.basis": "diag_basis",
    "diag.directions": "diag_directions",
    "diag.max_lag": "diag_max_lag",
}
_ATTRMAP = {v: k for k, v in _KEYMAP.items()}
_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def parse_config_text(text: str) -> Dict[str, str]:
    """Flat `key = value` lines; '#' starts a comment; blank lines ignored."""
    out: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key not in _KEYMAP:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        out[key] = value.strip()
    return out


def _coerce(attr: str, raw: str):
    t = _FIELD_TYPES[attr]
    if t in (bool, "bool"):
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"cannot parse boolean from {raw!r}")
    if t in (int, "int"):
        return int(raw)
    if t in (float, "float"):
        return float(raw)
    return raw


def config_from_text(text: str, base: ExperimentConfig = None) -> ExperimentConfig:
    base = base if base is not None else ExperimentConfig()
    updates = {}
    for key, raw in parse_config_text(text).items():
        attr = _KEYMAP[key]
        updates[attr] = _coerce(attr, raw)
    return replace(base, **updates)


def format_config(cfg: ExperimentConfig) -> str:
    """Canonical echo of a fully resolved configuration."""
    lines = []
    for f in fields(ExperimentConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{_ATTRMAP[f.name]} = {text}")
    return "\n".join(lines) + "\n"


def apply_env_overrides(cfg: ExperimentConfig, environ=None) -> ExperimentConfig:
    environ = environ if environ is not None else os.environ
    updates = {}
    if ENV_PREFIX + "SEED" in environ:
        updates["seed"] = int(environ[ENV_PREFIX + "SEED"])
    if ENV_PREFIX + "WORKERS" in environ:
        updates["workers"] = int(environ[ENV_PREFIX + "WORKERS"])
    return replace(cfg, **updates) if updates else cfg


def load_config_file(path, base: ExperimentConfig = None) -> ExperimentConfig:
    return config_from_text(Path(path).read_text(), base)


def preset_names() -> List[str]:
    pkg = resources.files("bisamp").joinpath("presets")
    return sorted(p.name[: -len(".cfg")] for p in pkg.iterdir() if p.name.endswith(".cfg"))


def load_preset(name: str) -> ExperimentConfig:
    res = resources.files("bisamp").joinpath("presets", f"{name}.cfg")
    try:
        text = res.read_text()
    except FileNotFoundError:
        raise ValueError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return config_from_text(text)
