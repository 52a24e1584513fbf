"""Experiment configuration: JSON loading, schema validation and spec construction."""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .density import DensityModel, fisher_information, get_density, read_density_table
from .ensembles import DisorderSpec, PriorSpec
from .errors import ConfigError
from .stats import FitTolerances

SCHEMA_VERSION = 1
THREADS_ENV = "SPINLAB_THREADS"

DEFAULT_TOLERANCES = {
    "free-energy-clt": {"z_tol": 3.0, "var_tol": 0.35, "p_tol": 0.001, "finite_size": 0.03, "recenter": True},
    "loglr-clt": {"z_tol": 3.0, "var_tol": 0.35, "p_tol": 0.001, "finite_size": 0.03, "recenter": True,
                  "shift_tol": 0.25},
    "second-moment": {"relative_tol": 0.03},
    "graph-identities": {"relative_tol": 1e-10},
    "cutoff-scan": {},
    "fisher-table": {"relative_tol": 1e-7},
}


def load_schema() -> dict:
    return json.loads(resources.files("spinlab").joinpath("schema.json").read_text())


def _path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    experiment: str
    seed: int
    threads: int | None
    output: str | None
    disorder: DisorderSpec
    prior: PriorSpec
    params: dict
    tolerances: dict
    allow_supercritical: bool
    raw: dict = field(repr=False)
    base_dir: Path = Path(".")

    def fit_tolerances(self) -> FitTolerances:
        keys = FitTolerances.__dataclass_fields__
        return FitTolerances(**{k: v for k, v in self.tolerances.items() if k in keys})

    def grid(self, key: str) -> list[float]:
        v = self.params[key]
        return [float(x) for x in (v if isinstance(v, list) else [v])]


def resolve_threads(cli_threads: int | None, cfg: ExperimentConfig | None) -> int:
    """--threads, then the config, then the environment variable, then 1."""
    if cli_threads is not None:
        return max(1, cli_threads)
    if cfg is not None and cfg.threads is not None:
        return cfg.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"environment {THREADS_ENV}={env!r} is not an integer") from None
    return 1


def resolve_density(ref, base: Path, where: str) -> DensityModel:
    """Registered density by name, or a validated tabulated density file."""
    if isinstance(ref, str):
        return get_density(ref)
    path = (base / ref["table"]).resolve()
    if not path.exists():
        raise ConfigError(f"{where}.table: file {path} not found")
    try:
        d = read_density_table(path, ref.get("name", path.stem))
        d.validate()
    except ConfigError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    return d


def build_disorder(raw: dict | None, base: Path) -> DisorderSpec:
    raw = raw or {"family": "gaussian"}
    family = raw["family"]
    w_2 = float(raw.get("w_2", 2.0))
    density = None
    if "density" in raw:
        density = resolve_density(raw["density"], base, "disorder.density")
    if family == "custom-density" and density is None:
        raise ConfigError("disorder.density: custom-density needs a density")
    if family not in ("gaussian", "custom-density") and density is not None:
        raise ConfigError(f"disorder.density: family {family!r} has a fixed shape")
    try:
        return DisorderSpec(family, w_2, density)
    except ConfigError as exc:
        raise ConfigError(f"disorder: {exc}") from None


def build_prior(raw: dict | None, base: Path) -> PriorSpec:
    raw = raw or {"family": "rademacher"}
    kw = {"family": raw["family"], "normalized": bool(raw.get("normalized", False)),
          "max_degree": int(raw.get("max_degree", 16))}
    if raw["family"] == "bounded-custom":
        if "K" not in raw or "density_table" not in raw:
            raise ConfigError("prior: bounded-custom needs K and density_table")
        path = (base / raw["density_table"]).resolve()
        if not path.exists():
            raise ConfigError(f"prior.density_table: file {path} not found")
        data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        xs, ps = data[:, 0], data[:, 1]
        if np.any(ps < 0):
            raise ConfigError("prior.density_table: negative density values")
        kw["K"] = float(raw["K"])
        kw["custom_pdf"] = lambda u, xs=xs, ps=ps: np.interp(u, xs, ps, left=0.0, right=0.0)
    try:
        return PriorSpec(**kw)
    except ConfigError as exc:
        raise ConfigError(f"prior: {exc}") from None


def parse_config(raw: dict, base_dir: Path = Path(".")) -> ExperimentConfig:
    """Validate a config document and build the specs it references."""
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        best = jsonschema.exceptions.best_match(errors)
        raise ConfigError(f"{_path(best.absolute_path)}: {best.message}")
    kind = raw["experiment"]
    params = copy.deepcopy(raw.get("params", {}))
    tolerances = dict(DEFAULT_TOLERANCES[kind])
    tolerances.update(raw.get("tolerances", {}))
    cfg = ExperimentConfig(
        experiment=kind,
        seed=int(raw.get("seed", 0)),
        threads=raw.get("threads"),
        output=raw.get("output"),
        disorder=build_disorder(raw.get("disorder"), base_dir),
        prior=build_prior(raw.get("prior"), base_dir),
        params=params,
        tolerances=tolerances,
        allow_supercritical=bool(raw.get("allow_supercritical", False)),
        raw=copy.deepcopy(raw),
        base_dir=base_dir,
    )
    _semantic_checks(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return parse_config(raw, path.parent)


def _semantic_checks(cfg: ExperimentConfig) -> None:
    kind, p = cfg.experiment, cfg.params
    if kind == "free-energy-clt":
        for i, b in enumerate(cfg.grid("beta")):
            if b < 0:
                raise ConfigError(f"params.beta[{i}]: beta={b} must be nonnegative")
            if b >= 1 and not cfg.allow_supercritical:
                raise ConfigError(
                    f"params.beta[{i}]: beta={b} >= 1 is supercritical (outside the high-temperature "
                    "regime beta < 1); set allow_supercritical to override"
                )
        if p.get("method", "exact") == "exact" and cfg.prior.family != "rademacher":
            raise ConfigError("prior.family: exact enumeration needs the rademacher prior")
        if p.get("method") == "mc" and "M" not in p:
            raise ConfigError("params.M: mc method needs M")
    elif kind == "loglr-clt":
        try:
            p_off, _ = cfg.disorder.noise_pair()
        except ConfigError as exc:
            raise ConfigError(f"disorder: {exc}") from None
        F_p = fisher_information(p_off)
        for i, lam in enumerate(cfg.grid("lambda")):
            if lam < 0:
                raise ConfigError(f"params.lambda[{i}]: lambda={lam} must be nonnegative")
            if lam * F_p >= 1 and not cfg.allow_supercritical:
                raise ConfigError(
                    f"params.lambda[{i}]: lambda*F_p = {lam * F_p:.6g} >= 1 is supercritical; "
                    "set allow_supercritical to override"
                )
        if p.get("method", "exact") == "exact" and cfg.prior.family != "rademacher":
            raise ConfigError("prior.family: exact log-LR needs the rademacher prior")
        if p.get("method") == "mc" and "M" not in p:
            raise ConfigError("params.M: mc method needs M")
    elif kind == "second-moment":
        for i, lam in enumerate(cfg.grid("lambda")):
            if not 0 <= lam < 1:
                raise ConfigError(f"params.lambda[{i}]: lambda={lam} must satisfy 0 <= lambda < 1")
            if lam > 0.9 and not p.get("allow_high", False):
                raise ConfigError(f"params.lambda[{i}]: lambda={lam} > 0.9 needs params.allow_high")
    elif kind == "cutoff-scan":
        if p.get("s_min", 4) > p.get("s_max", 10):
            raise ConfigError("params.s_min: must not exceed params.s_max")
    elif kind == "fisher-table":
        for i, lam in enumerate(cfg.grid("lambda") if "lambda" in p else []):
            if lam < 0:
                raise ConfigError(f"params.lambda[{i}]: lambda={lam} must be nonnegative")


def config_echo(cfg: ExperimentConfig, seed: int, threads: int, out_dir: str) -> dict:
    echo = copy.deepcopy(cfg.raw)
    echo["seed"] = seed
    echo["threads"] = threads
    echo["output"] = out_dir
    echo["tolerances"] = dict(cfg.tolerances)
    return echo


__all__ = ["ExperimentConfig", "load_config", "parse_config", "resolve_threads", "config_echo",
           "THREADS_ENV", "SCHEMA_VERSION"]
