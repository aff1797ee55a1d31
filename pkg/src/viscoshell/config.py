"""Flat ``key = value`` configuration files.

Lines look like ``material.lambda = 1.0``.  Blank lines, lines starting
with ``#`` and trailing `` # ...`` comments are ignored.  Values are Python
literals when they parse as such, otherwise raw strings (handy for load
expressions such as ``sin(pi*y1)``).
"""
from __future__ import annotations

import ast
from pathlib import Path

from .errors import ConfigError
from .flexural2d import EDGES, Mesh2D, Problem2D
from .geometry import CHARTS, SurfaceChart
from .harness import ConvergenceSetup
from .loads import Loads
from .material import MaterialParams

DEFAULTS = {
    "chart.name": "plate",
    "chart.L1": 1.0,
    "chart.L2": 1.0,
    "chart.R": 1.0,
    "chart.h": "0",
    "chart.periodic": False,
    "material.lambda": 1.0,
    "material.mu": 1.0,
    "material.theta": 1.0,
    "material.rho": 1.0,
    "mesh.nx": 16,
    "mesh.ny": 16,
    "mesh.nz": 8,
    "bc.clamped": ("y1=0",),
    "bc.supported": (),
    "loads.f": ("0", "0", "1"),
    "loads.h_plus": ("0", "0", "0"),
    "loads.h_minus": ("0", "0", "0"),
    "time.dt": 0.05,
    "time.T": 1.0,
    "solve2d.mode": "scaled",
    "solve2d.epsilon": None,
    "solve2d.kappa": 1e6,
    "solve3d.epsilon": 0.1,
    "solve3d.shear_sampling": False,
    "converge.epsilons": (0.2, 0.1, 0.05),
    "converge.shear_sampling": True,
    "geometry.y": (0.3, 0.4),
    "geometry.epsilons": (0.1, 0.05, 0.025, 0.0125),
    "check.n_draws": 1000,
    "check.ode_draws": 100,
    "check.seed": 0,
    "check.tol": 1e-10,
    "output.dir": "out",
    "output.svg": False,
}

_INT_KEYS = {"mesh.nx", "mesh.ny", "mesh.nz", "check.n_draws", "check.ode_draws", "check.seed"}
_FLOAT_KEYS = {"chart.L1", "chart.L2", "chart.R", "material.lambda", "material.mu", "material.theta",
               "material.rho", "time.dt", "time.T", "solve2d.kappa", "solve3d.epsilon", "check.tol"}
_BOOL_KEYS = {"chart.periodic", "converge.shear_sampling", "solve3d.shear_sampling", "output.svg"}

# short names accepted in files; one alias may set several keys
ALIASES = {
    "lambda": ("material.lambda",),
    "mu": ("material.mu",),
    "theta": ("material.theta",),
    "rho": ("material.rho",),
    "dt": ("time.dt",),
    "T": ("time.T",),
    "mode": ("solve2d.mode",),
    "epsilon": ("solve2d.epsilon", "solve3d.epsilon"),
    "penalty_kappa": ("solve2d.kappa",),
    "clamped_edges": ("bc.clamped",),
    "supported_edges": ("bc.supported",),
}


def _parse_value(raw: str):
    try:
        return ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        return raw


def _coerce(key, value):
    try:
        if key in _INT_KEYS:
            if isinstance(value, bool) or int(value) != value:
                raise TypeError
            return int(value)
        if key in _FLOAT_KEYS:
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if key in _BOOL_KEYS:
            if not isinstance(value, bool):
                raise TypeError
            return value
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {key}: {value!r}", key) from None
    if key in ("bc.clamped", "bc.supported", "converge.epsilons", "geometry.epsilons", "geometry.y",
               "loads.f", "loads.h_plus", "loads.h_minus"):
        if isinstance(value, (str, int, float)):
            value = (value,)
        if not isinstance(value, (tuple, list)):
            raise ConfigError(f"{key} must be a list", key)
        if key.startswith("bc.") and not set(value) <= set(EDGES):
            raise ConfigError(f"{key}: edges must be among {EDGES}, got {tuple(value)}", key)
        return tuple(value)
    return value


def parse_config(text: str, source: str = "<string>", base: dict | None = None) -> dict:
    """``base`` (the defaults when None) overridden by the ``key = value`` lines of ``text``."""
    cfg = dict(DEFAULTS if base is None else base)
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split(" #", 1)[0].strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'", None)
        key, raw = (s.strip() for s in line.split("=", 1))
        targets = ALIASES.get(key, (key,))
        for k in targets:
            if k not in DEFAULTS:
                raise ConfigError(f"{source}:{lineno}: unknown key {key}", key)
            cfg[k] = _coerce(k, _parse_value(raw))
    return cfg


def load_config(path: str | Path | None, overrides=()) -> dict:
    """Read ``path`` (defaults only when None), then apply ``key=value`` overrides."""
    if path is None:
        cfg = dict(DEFAULTS)
    else:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}", "config")
        cfg = parse_config(p.read_text(), str(p))
    return parse_config("\n".join(overrides), "--set", base=cfg)


# -- builders -----------------------------------------------------------------------

def _wrap(key, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{key}: {exc}", key) from exc


def build_chart(cfg) -> SurfaceChart:
    name = cfg["chart.name"]
    if name not in CHARTS:
        raise ConfigError(f"unknown chart {name!r}; choose from {sorted(CHARTS)}", "chart.name")
    L1, L2 = cfg["chart.L1"], cfg["chart.L2"]
    if name == "plate":
        return CHARTS[name](L1, L2)
    if name == "cylinder":
        return _wrap("chart.R", CHARTS[name], R=cfg["chart.R"], L1=L1, L2=L2, periodic=cfg["chart.periodic"])
    if name == "graph":
        return _wrap("chart.h", CHARTS[name], cfg["chart.h"], L1=L1, L2=L2)
    return CHARTS[name](L1, L2)


def build_material(cfg) -> MaterialParams:
    return _wrap("material", MaterialParams, lam=cfg["material.lambda"], mu=cfg["material.mu"],
                 theta_v=cfg["material.theta"], rho_v=cfg["material.rho"])


def build_mesh(cfg, chart: SurfaceChart) -> Mesh2D:
    L1, L2 = chart.lengths
    return _wrap("mesh", Mesh2D, cfg["mesh.nx"], cfg["mesh.ny"], L1, L2, chart.periodic_y1)


def build_loads(cfg) -> Loads:
    return _wrap("loads", Loads, tuple(cfg["loads.f"]), tuple(cfg["loads.h_plus"]), tuple(cfg["loads.h_minus"]))


def build_problem2d(cfg) -> Problem2D:
    chart = build_chart(cfg)
    return _wrap("solve2d", Problem2D, chart, build_material(cfg), build_mesh(cfg, chart), build_loads(cfg),
                 clamped=cfg["bc.clamped"], supported=cfg["bc.supported"], dt=cfg["time.dt"], T=cfg["time.T"],
                 mode=cfg["solve2d.mode"], epsilon=cfg["solve2d.epsilon"], kappa=cfg["solve2d.kappa"])


def build_convergence(cfg) -> ConvergenceSetup:
    chart = build_chart(cfg)
    eps = cfg["converge.epsilons"]
    if len(set(eps)) < 3:
        raise ConfigError("need >=3 epsilons", "converge.epsilons")
    return _wrap("converge", ConvergenceSetup, chart, build_material(cfg), build_mesh(cfg, chart),
                 build_loads(cfg), epsilons=eps, nz=cfg["mesh.nz"], dt=cfg["time.dt"], T=cfg["time.T"],
                 clamped=cfg["bc.clamped"], shear_sampling=cfg["converge.shear_sampling"],
                 kappa=cfg["solve2d.kappa"])
