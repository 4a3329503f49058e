"""Run configuration: TOML parsing and construction of problem/partition/spaces.

See CONFIG.md at the repository root for the schema.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import numpy as np

from .problem import Problem, catalog_names, make_problem
from .spatial import Coefficient, FeSpace, SpaceHierarchy, space_from_points, uniform_space
from .timedg import TimePartition


class ConfigError(Exception):
    """Malformed run configuration; message names the offending field."""


@dataclass
class RunConfig:
    problem_name: str
    final_time: float
    coeff_values: list
    coeff_breaks: list
    time_kind: str          # uniform | geometric | explicit
    time_slabs: int
    time_degree: int
    time_sigma: float
    time_degree_slope: float
    time_nodes: list
    time_degrees: list
    space_kind: str         # uniform | explicit
    space_exponent: int
    space_cuts: list        # list of per-slab interior cut lists
    theta_mode: str = "super"
    lam: str | float = "auto"
    sweep_axis: str | None = None
    sweep_halvings: int = 3
    sweep_degrees: list = field(default_factory=list)
    out_dir: str = "out"
    max_depth: int = 20


def _get(table: dict, key: str, default, types, section: str):
    val = table.get(key, default)
    if val is not None and not isinstance(val, types):
        raise ConfigError(f"[{section}] {key}: expected {types}, got {type(val).__name__}")
    return val


def parse_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: TOML parse error: {e}")

    prob = raw.get("problem", {})
    name = _get(prob, "manufactured", "zero", str, "problem")
    if name not in catalog_names():
        raise ConfigError(f"[problem] manufactured: unknown name {name!r}; "
                          f"choose from {catalog_names()}")
    tfin = float(_get(prob, "final_time", 1.0, (int, float), "problem"))
    if tfin <= 0:
        raise ConfigError("[problem] final_time must be positive")
    cvals = _get(prob, "coefficient_values", [1.0], list, "problem")
    cbreaks = _get(prob, "coefficient_breaks", [], list, "problem")

    tm = raw.get("time", {})
    tkind = _get(tm, "kind", "uniform", str, "time")
    if tkind not in ("uniform", "geometric", "explicit"):
        raise ConfigError(f"[time] kind: unknown kind {tkind!r}")
    cfg = RunConfig(
        problem_name=name,
        final_time=tfin,
        coeff_values=cvals,
        coeff_breaks=cbreaks,
        time_kind=tkind,
        time_slabs=int(_get(tm, "slabs", 4, int, "time")),
        time_degree=int(_get(tm, "degree", 0, int, "time")),
        time_sigma=float(_get(tm, "sigma", 0.25, (int, float), "time")),
        time_degree_slope=float(_get(tm, "degree_slope", 1.0, (int, float), "time")),
        time_nodes=_get(tm, "nodes", [], list, "time"),
        time_degrees=_get(tm, "degrees", [], list, "time"),
        space_kind="uniform",
        space_exponent=4,
        space_cuts=[],
    )

    sp = raw.get("space", {})
    cfg.space_kind = _get(sp, "kind", "uniform", str, "space")
    if cfg.space_kind not in ("uniform", "explicit"):
        raise ConfigError(f"[space] kind: unknown kind {cfg.space_kind!r}")
    cfg.space_exponent = int(_get(sp, "exponent", 4, int, "space"))
    cfg.space_cuts = _get(sp, "cuts", [], list, "space")
    cfg.max_depth = int(_get(sp, "max_depth", 20, int, "space"))

    est = raw.get("estimator", {})
    cfg.theta_mode = _get(est, "theta_mode", "super", str, "estimator")
    if cfg.theta_mode not in ("super", "pf", "both"):
        raise ConfigError(f"[estimator] theta_mode must be super|pf|both")
    lam = est.get("lambda", "auto")
    cfg.lam = _parse_lambda(lam)

    sw = raw.get("sweep", {})
    if sw:
        cfg.sweep_axis = _get(sw, "axis", "tau", str, "sweep")
        if cfg.sweep_axis not in ("tau", "h", "degree"):
            raise ConfigError("[sweep] axis must be tau|h|degree")
        cfg.sweep_halvings = int(_get(sw, "halvings", 3, int, "sweep"))
        if cfg.sweep_halvings < 1:
            raise ConfigError("[sweep] halvings must be >= 1")
        cfg.sweep_degrees = _get(sw, "degrees", [0, 1, 2], list, "sweep")

    out = raw.get("output", {})
    cfg.out_dir = _get(out, "dir", "out", str, "output")
    return cfg


def _parse_lambda(lam) -> str | float:
    if lam == "auto":
        return "auto"
    try:
        val = float(lam)
    except (TypeError, ValueError):
        raise ConfigError("[estimator] lambda must be 'auto' or a number in [0,1]")
    if not 0.0 <= val <= 1.0:
        raise ConfigError("[estimator] lambda must lie in [0,1]")
    return val


# ---------------------------------------------------------------------------
# Builders


def build_problem(cfg: RunConfig) -> Problem:
    try:
        coeff = Coefficient(values=cfg.coeff_values, breaks=cfg.coeff_breaks)
    except ValueError as e:
        raise ConfigError(f"[problem] coefficient: {e}")
    try:
        return make_problem(cfg.problem_name, final_time=cfg.final_time, coeff=coeff)
    except ValueError as e:
        raise ConfigError(f"[problem] {e}")


def build_partition(cfg: RunConfig) -> TimePartition:
    try:
        if cfg.time_kind == "uniform":
            return TimePartition.uniform(cfg.final_time, cfg.time_slabs, cfg.time_degree)
        if cfg.time_kind == "geometric":
            return TimePartition.geometric(cfg.final_time, cfg.time_slabs,
                                           cfg.time_sigma, cfg.time_degree_slope)
        nodes = np.asarray(cfg.time_nodes, dtype=float)
        return TimePartition(nodes, np.asarray(cfg.time_degrees, dtype=int))
    except (ValueError, TypeError) as e:
        raise ConfigError(f"[time] {e}")


def build_spaces(cfg: RunConfig, partition: TimePartition,
                 hier: SpaceHierarchy | None = None) -> list[FeSpace]:
    hier = hier if hier is not None else SpaceHierarchy(cfg.max_depth)
    try:
        if cfg.space_kind == "uniform":
            return [uniform_space(hier, cfg.space_exponent)] * partition.n_slabs
        if len(cfg.space_cuts) not in (partition.n_slabs, partition.n_slabs + 1):
            raise ConfigError("[space] cuts: need one cut list per slab "
                              "(plus optionally one for V_0)")
        return [space_from_points(hier, c) for c in cfg.space_cuts]
    except ValueError as e:
        raise ConfigError(f"[space] {e}")
