"""Config parsing, validation and construction of solver objects.

Configs are YAML mappings with one section per concern (grid, time,
operator, noise, solver, initial, seed) plus one section per experiment
subcommand.  :func:`validate_config` returns a list of human-readable
diagnostics (empty when the config is usable for the requested subcommand);
:func:`config_hash` hashes the normalized config so every output artifact
can embed the exact inputs that produced it.
"""

from __future__ import annotations

import copy
import hashlib
import json

import numpy as np
import yaml

from .mesh import Field, Grid
from .noise import make_noise_model, random_field
from .plaplace import PLaplaceOperator
from .resolvent import SolverOptions
from .skeleton import Control, StepperConfig, random_control, read_control_csv


class ConfigError(ValueError):
    """Invalid configuration; carries the full diagnostics list."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


DEFAULTS: dict = {
    "grid": {"dim": 1, "half_width": 1.0, "points": 64},
    "time": {"horizon": 1.0, "steps": 64},
    "operator": {"p": 3.0, "delta_reg": 1e-4},
    "noise": {"family": "bounded", "modes": 8, "lambda_decay": 0.5, "lambda_scale": 1.0},
    "solver": {"tol_residual": None, "max_iter": 60, "linesearch_shrink": 0.5,
               "picard_tol": None, "picard_max_iter": 50},
    "initial": {"kind": "rough", "amplitude": 1.0, "roughness": 0.3},
    "seed": 20240801,
}

_EXPERIMENT_BLOCKS = {
    "step-check": "step_check",
    "skeleton": "skeleton",
    "simulate": "simulate",
    "ldp-c1": "ldp_c1",
    "ldp-c2": "ldp_c2",
    "ldp-rate": "ldp_rate",
    "rare-event": "rare_event",
    "tci": "tci",
    "refine": "refine",
}

_EXPERIMENT_DEFAULTS: dict = {
    "step_check": {"n_random": 20, "tau": None},
    "skeleton": {"control": {"kind": "zero"}, "snapshot_stride": 0},
    "simulate": {"epsilon": 0.5, "samples": 1, "snapshot_stride": 0, "control": None},
    "ldp_c1": {"eps_list": [0.4, 0.2, 0.1, 0.05], "n_samples": 200,
               "control": {"kind": "constant", "norm": 1.0}, "ball_bound": 4.0},
    "ldp_c2": {"frequencies": [2, 4, 8, 16], "amplitude": 1.0, "ball_bound": 16.0,
               "control": {"kind": "constant", "norm": 1.0}},
    "ldp_rate": {"target": {"kind": "flow", "control": None}, "weight": 50.0,
                 "max_iter": 200, "misfit_mode": "sup", "gradient_mode": "fd",
                 "misfit_tol": 1e-3},
    "rare_event": {"epsilon_list": [0.4, 0.3], "gamma": 0.05, "n_samples": 1000},
    "tci": {"control": {"kind": "constant", "norm": 1.0}, "n_samples": 200},
    "refine": {"mode": "time", "levels": 2, "control": {"kind": "zero"}},
}


def load_config(path) -> dict:
    """Parse a YAML config file; parse errors keep their line context."""
    try:
        with open(path) as f:
            raw = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError([f"cannot parse {path}: {e}"]) from e
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError([f"{path}: top level must be a mapping"])
    return normalize_config(raw)


def normalize_config(raw: dict) -> dict:
    """Overlay the user config on the defaults (two levels deep)."""
    cfg = copy.deepcopy(DEFAULTS)
    cfg.update({k: copy.deepcopy(v) for k, v in raw.items()
                if k not in DEFAULTS or not isinstance(DEFAULTS.get(k), dict)})
    for key, block in DEFAULTS.items():
        if isinstance(block, dict) and key in raw:
            merged = copy.deepcopy(block)
            if not isinstance(raw[key], dict):
                cfg[key] = raw[key]  # caught by validation
                continue
            merged.update(raw[key])
            cfg[key] = merged
    for key, block in _EXPERIMENT_DEFAULTS.items():
        if key in raw:
            merged = copy.deepcopy(block)
            if isinstance(raw[key], dict):
                merged.update(raw[key])
                cfg[key] = merged
            else:
                cfg[key] = raw[key]
    return cfg


def config_hash(cfg: dict) -> str:
    """SHA-256 of the canonical JSON form of the normalized config."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _check(diags, cond: bool, msg: str) -> bool:
    if not cond:
        diags.append(msg)
    return cond


def validate_config(cfg: dict, subcommand: str | None = None) -> list[str]:
    """Constraint report; empty list means the config is usable.

    With a subcommand the matching experiment block must be present (the
    defaults provide one for every subcommand, so this only fails when the
    user replaced a block with a non-mapping).  The report also states which
    noise-family conditions (Lipschitz/growth/uniform bound) the chosen
    family certifies, without running any solver.
    """
    d: list[str] = []
    g = cfg.get("grid", {})
    if _check(d, isinstance(g, dict), "grid: must be a mapping"):
        _check(d, g.get("dim") in (1, 2), f"grid.dim: must be 1 or 2, got {g.get('dim')!r}")
        _check(d, isinstance(g.get("points"), int) and g.get("points", 0) >= 3,
               f"grid.points: must be an integer >= 3, got {g.get('points')!r}")
        _check(d, _is_pos(g.get("half_width")), "grid.half_width: must be positive")
    t = cfg.get("time", {})
    if _check(d, isinstance(t, dict), "time: must be a mapping"):
        _check(d, _is_pos(t.get("horizon")), "time.horizon: must be positive")
        _check(d, isinstance(t.get("steps"), int) and t.get("steps", 0) >= 1,
               "time.steps: must be an integer >= 1")
    o = cfg.get("operator", {})
    if _check(d, isinstance(o, dict), "operator: must be a mapping"):
        _check(d, _is_num(o.get("p")) and o.get("p", 0) > 1,
               f"operator.p: p must exceed 1, got {o.get('p')!r}")
        _check(d, _is_num(o.get("delta_reg")) and o.get("delta_reg", -1) >= 0,
               "operator.delta_reg: must be nonnegative")
    n = cfg.get("noise", {})
    if _check(d, isinstance(n, dict), "noise: must be a mapping"):
        _check(d, n.get("family") in ("additive", "bounded", "linear"),
               f"noise.family: must be additive|bounded|linear, got {n.get('family')!r}")
        _check(d, isinstance(n.get("modes"), int) and n.get("modes", 0) >= 1,
               "noise.modes: must be an integer >= 1")
        _check(d, _is_num(n.get("lambda_decay")) and 0 < n.get("lambda_decay", 0) < 1,
               "noise.lambda_decay: must lie in (0, 1)")
        _check(d, _is_num(n.get("lambda_scale")) and n.get("lambda_scale", -1) >= 0,
               "noise.lambda_scale: must be nonnegative")
        if isinstance(g, dict) and isinstance(n.get("modes"), int) \
                and g.get("dim") in (1, 2) and isinstance(g.get("points"), int):
            cap = (g["points"] - 2) ** g["dim"]
            _check(d, n["modes"] <= cap,
                   f"noise.modes: at most {cap} independent modes on this grid")
    s = cfg.get("solver", {})
    if _check(d, isinstance(s, dict), "solver: must be a mapping"):
        if s.get("tol_residual") is not None:
            _check(d, _is_pos(s["tol_residual"]), "solver.tol_residual: must be positive or null")
        _check(d, isinstance(s.get("max_iter"), int) and s.get("max_iter", 0) >= 1,
               "solver.max_iter: must be an integer >= 1")
        _check(d, _is_num(s.get("linesearch_shrink")) and 0 < s.get("linesearch_shrink", 0) < 1,
               "solver.linesearch_shrink: must lie in (0, 1)")
    ini = cfg.get("initial", {})
    if _check(d, isinstance(ini, dict), "initial: must be a mapping"):
        _check(d, ini.get("kind") in ("zero", "sine", "bump", "rough", "random"),
               f"initial.kind: unknown kind {ini.get('kind')!r}")
    _check(d, isinstance(cfg.get("seed"), int), "seed: must be an integer")

    if subcommand is not None:
        if subcommand not in _EXPERIMENT_BLOCKS:
            d.append(f"unknown subcommand {subcommand!r}")
        else:
            block = _EXPERIMENT_BLOCKS[subcommand]
            got = cfg.get(block, _EXPERIMENT_DEFAULTS[block])
            if not _check(d, isinstance(got, dict), f"{block}: must be a mapping"):
                return d
            d.extend(_validate_experiment(block, got))
    return d


def _validate_experiment(block: str, b: dict) -> list[str]:
    d: list[str] = []
    if block == "simulate":
        _check(d, _is_num(b.get("epsilon")) and b.get("epsilon", -1) >= 0,
               "simulate.epsilon: must be nonnegative")
        _check(d, isinstance(b.get("samples"), int) and b.get("samples", 0) >= 1,
               "simulate.samples: must be an integer >= 1")
    elif block == "ldp_c1":
        eps = b.get("eps_list")
        _check(d, isinstance(eps, list) and eps and all(_is_pos(e) for e in eps),
               "ldp_c1.eps_list: must be a nonempty list of positive numbers")
        _check(d, isinstance(b.get("n_samples"), int) and b.get("n_samples", 0) >= 2,
               "ldp_c1.n_samples: must be an integer >= 2")
    elif block == "ldp_c2":
        fr = b.get("frequencies")
        _check(d, isinstance(fr, list) and fr and all(isinstance(f, int) and f >= 1 for f in fr),
               "ldp_c2.frequencies: must be a nonempty list of integers >= 1")
        _check(d, _is_num(b.get("amplitude")) and b.get("amplitude", -1) >= 0,
               "ldp_c2.amplitude: must be nonnegative")
    elif block == "rare_event":
        eps = b.get("epsilon_list")
        _check(d, isinstance(eps, list) and eps and all(_is_pos(e) for e in eps),
               "rare_event.epsilon_list: must be a nonempty list of positive numbers")
        _check(d, _is_num(b.get("gamma")) and b.get("gamma", -1) >= 0,
               "rare_event.gamma: must be nonnegative")
        _check(d, isinstance(b.get("n_samples"), int) and b.get("n_samples", 0) >= 1,
               "rare_event.n_samples: must be an integer >= 1")
    elif block == "ldp_rate":
        _check(d, _is_pos(b.get("weight")), "ldp_rate.weight: must be positive")
        _check(d, b.get("misfit_mode", "sup") in ("sup", "msq"),
               "ldp_rate.misfit_mode: must be sup|msq")
        tgt = b.get("target", {})
        if _check(d, isinstance(tgt, dict), "ldp_rate.target: must be a mapping"):
            _check(d, tgt.get("kind") in ("flow", "planted"),
                   f"ldp_rate.target.kind: must be flow|planted, got {tgt.get('kind')!r}")
    elif block == "tci":
        _check(d, isinstance(b.get("n_samples"), int) and b.get("n_samples", 0) >= 2,
               "tci.n_samples: must be an integer >= 2")
    elif block == "refine":
        _check(d, b.get("mode") in ("time", "space", "box", "modes"),
               f"refine.mode: must be time|space|box|modes, got {b.get('mode')!r}")
        _check(d, isinstance(b.get("levels"), int) and b.get("levels", 0) >= 1,
               "refine.levels: must be an integer >= 1")
    return d


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _is_pos(v) -> bool:
    return _is_num(v) and v > 0


# -- object construction -------------------------------------------------------

def build_grid(cfg: dict) -> Grid:
    g = cfg["grid"]
    return Grid(g["dim"], float(g["half_width"]), g["points"])


def build_operator(cfg: dict) -> PLaplaceOperator:
    o = cfg["operator"]
    return PLaplaceOperator(float(o["p"]), float(o["delta_reg"]))


def build_noise(cfg: dict, grid: Grid):
    n = cfg["noise"]
    return make_noise_model(grid, n["modes"], n["family"],
                            float(n["lambda_decay"]), float(n["lambda_scale"]))


def build_initial(cfg: dict, grid: Grid) -> Field:
    ini = cfg["initial"]
    kind = ini["kind"]
    amp = float(ini.get("amplitude", 1.0))
    coords = grid.coords()
    xi = (coords + grid.half_width) / (2 * grid.half_width)
    interior = grid.interior_mask()
    if kind == "zero":
        values = np.zeros(grid.n_nodes)
    elif kind == "sine":
        values = amp * np.prod(np.sin(np.pi * xi), axis=1)
    elif kind == "bump":
        # absolute width, so the same function is produced on any box
        width = float(ini.get("width", 0.35))
        values = amp * np.exp(-np.sum(coords**2, axis=1) / width**2)
    elif kind == "rough":
        values = amp * np.prod(np.sin(np.pi * xi), axis=1)
        parity = np.indices(grid.shape).sum(axis=0).ravel() % 2
        values = values + float(ini.get("roughness", 0.3)) * (2.0 * parity - 1.0)
    elif kind == "random":
        values = amp * random_field(grid, cfg["seed"], 0, block=11).values
    else:
        raise ConfigError([f"initial.kind: unknown kind {kind!r}"])
    values[~interior] = 0.0  # Dirichlet boundary, exactly
    return Field(grid, values)


def build_solver_options(cfg: dict) -> SolverOptions:
    s = cfg["solver"]
    tol = s["tol_residual"]
    return SolverOptions(tol_residual=None if tol is None else float(tol),
                         max_iter=s["max_iter"],
                         linesearch_shrink=float(s["linesearch_shrink"]))


def build_stepper(cfg: dict) -> StepperConfig:
    grid = build_grid(cfg)
    s = cfg["solver"]
    ptol = s.get("picard_tol")
    return StepperConfig(
        op=build_operator(cfg),
        noise=build_noise(cfg, grid),
        u0=build_initial(cfg, grid),
        options=build_solver_options(cfg),
        picard_tol=None if ptol is None else float(ptol),
        picard_max_iter=s.get("picard_max_iter", 50),
    )


def time_grid(cfg: dict) -> tuple[int, float]:
    """(steps, dt) from the time block."""
    t = cfg["time"]
    return t["steps"], float(t["horizon"]) / t["steps"]


def build_control(spec: dict | None, steps: int, modes: int, dt: float,
                  seed: int) -> Control:
    """Construct a control from its config spec.

    Kinds: ``zero``; ``constant`` (first-mode constant row, optionally
    rescaled to an exact ``L^2(0,T;H)`` norm); ``random`` (counter-keyed
    Gaussian rows, rescaled likewise); ``csv`` (values from a k,j,value
    file).
    """
    if spec is None:
        return Control.zero(steps, modes, dt)
    kind = spec.get("kind", "zero")
    if kind == "zero":
        return Control.zero(steps, modes, dt)
    if kind == "constant":
        coeffs = spec.get("coeffs")
        if coeffs is None:
            row = np.zeros(modes)
            row[0] = 1.0
        else:
            row = np.asarray(coeffs, dtype=float)
            if row.shape != (modes,):
                raise ConfigError([f"control.coeffs: expected {modes} entries"])
        c = Control.constant(row, steps, dt)
    elif kind == "random":
        c = random_control(steps, modes, dt, seed, int(spec.get("stream", 999)))
    elif kind == "csv":
        path = spec.get("path")
        if not path:
            raise ConfigError(["control.path: required for kind=csv"])
        c = read_control_csv(path, dt)
        if c.steps != steps or c.modes != modes:
            raise ConfigError([
                f"control csv has shape ({c.steps},{c.modes}), expected ({steps},{modes})"])
    else:
        raise ConfigError([f"control.kind: unknown kind {kind!r}"])
    norm = spec.get("norm")
    if norm is not None and kind != "zero":
        cur = np.sqrt(c.norm_sq)
        if cur == 0:
            raise ConfigError(["control.norm: cannot rescale a zero control"])
        c = c.scaled(float(norm) / cur)
    return c
