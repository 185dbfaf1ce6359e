"""TOML experiment configs -> :class:`SimConfig`.

Layout (every table optional except ``grid`` and ``motility``)::

    seed = 0
    [grid]        dim, extents, lengths
    [model]       eps
    [motility]    family, k | chi | beta | path
    [initial.u]   kind, mass, value, background, amplitude, modes, path, bumps = [...]
    [initial.v]   same kinds plus "helmholtz" (default)
    [stepping]    T, dt0, dt_min, dt_max, max_steps, cfl_cap, grow_after, grow_factor
    [solver]      u_tol, helmholtz_method, helmholtz_tol, positivity_tol
    [diagnostics] every, energies, lp_norms, comparison, exp_A, window
    [blowup]      threshold, window
    [output]      snapshot_every, images
"""

from __future__ import annotations

import copy
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..errors import ConfigError, PreconditionError
from ..grid import build_grid
from ..motility import motility_from_dict
from ..stepper import SimConfig, build_field

KNOWN = {
    "": {"seed", "grid", "model", "motility", "initial", "stepping", "solver", "diagnostics", "blowup", "output", "name"},
    "grid": {"dim", "extents", "lengths"},
    "model": {"eps"},
    "stepping": {"T", "dt0", "dt_min", "dt_max", "max_steps", "cfl_cap", "grow_after", "grow_factor"},
    "solver": {"u_tol", "helmholtz_method", "helmholtz_tol", "positivity_tol"},
    "diagnostics": {"every", "energies", "lp_norms", "comparison", "exp_A", "window"},
    "blowup": {"threshold", "window"},
    "output": {"snapshot_every", "images"},
}


@dataclass
class ExperimentConfig:
    sim: SimConfig
    raw: dict[str, Any]
    snapshot_every: int = 0
    images: bool = False
    source: Path | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return self.sim.seed


def _table(raw: dict[str, Any], name: str) -> dict[str, Any]:
    t = raw.get(name, {})
    if not isinstance(t, dict):
        raise ConfigError("expected a table", name)
    for key in t:
        if name in KNOWN and key not in KNOWN[name]:
            raise ConfigError(f"unknown key {key!r}", f"{name}.{key}")
    return t


def _num(t: dict[str, Any], key: str, where: str, default=None, kind=float):
    path = f"{where}.{key}" if where else key
    if key not in t:
        if default is None:
            raise ConfigError("missing required field", path)
        return default
    val = t[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"expected a number, got {val!r}", path)
    if kind is int and int(val) != val:
        raise ConfigError(f"expected an integer, got {val!r}", path)
    return kind(val)


def config_from_dict(raw: dict[str, Any], base_dir: Path | None = None) -> ExperimentConfig:
    raw = copy.deepcopy(raw)
    for key in raw:
        if key not in KNOWN[""]:
            raise ConfigError(f"unknown top-level key {key!r}", key)
    g = _table(raw, "grid")
    if "grid" not in raw:
        raise ConfigError("missing [grid] table", "grid")
    try:
        grid = build_grid(_num(g, "dim", "grid", kind=int), g.get("extents", 64), g.get("lengths", 1.0))
    except PreconditionError as exc:
        raise ConfigError(str(exc), "grid") from None
    if "motility" not in raw:
        raise ConfigError("missing [motility] table", "motility")
    try:
        mot = motility_from_dict(raw["motility"], base_dir)
    except PreconditionError as exc:
        raise ConfigError(str(exc), "motility") from None
    model = _table(raw, "model")
    st = _table(raw, "stepping")
    so = _table(raw, "solver")
    di = _table(raw, "diagnostics")
    bl = _table(raw, "blowup")
    out = _table(raw, "output")
    init = raw.get("initial", {})
    u0 = init.get("u", {"kind": "constant", "value": 1.0})
    v0 = init.get("v", {"kind": "helmholtz"})
    defaults = SimConfig(grid, mot)
    energies = di.get("energies")
    if energies is not None:
        try:
            energies = [(float(p), float(q)) for p, q in energies]
        except (TypeError, ValueError):
            raise ConfigError("energies must be a list of [p, q] pairs", "diagnostics.energies") from None
    sim = SimConfig(
        grid=grid,
        motility=mot,
        eps=_num(model, "eps", "model", 0.0),
        u0=u0,
        v0=v0,
        T=_num(st, "T", "stepping", defaults.T),
        dt0=_num(st, "dt0", "stepping", defaults.dt0),
        dt_min=_num(st, "dt_min", "stepping", defaults.dt_min),
        dt_max=_num(st, "dt_max", "stepping", defaults.dt_max),
        max_steps=_num(st, "max_steps", "stepping", kind=int) if "max_steps" in st else None,
        cfl_cap=bool(st.get("cfl_cap", False)),
        grow_after=_num(st, "grow_after", "stepping", defaults.grow_after, int),
        grow_factor=_num(st, "grow_factor", "stepping", defaults.grow_factor),
        u_tol=_num(so, "u_tol", "solver", defaults.u_tol),
        helmholtz_method=str(so.get("helmholtz_method", defaults.helmholtz_method)),
        helmholtz_tol=_num(so, "helmholtz_tol", "solver", defaults.helmholtz_tol),
        positivity_tol=_num(so, "positivity_tol", "solver", defaults.positivity_tol),
        diag_every=_num(di, "every", "diagnostics", defaults.diag_every, int),
        energies=energies,
        lp_norms=tuple(float(p) for p in di.get("lp_norms", defaults.lp_norms)),
        comparison=tuple(float(c) for c in di.get("comparison", defaults.comparison)),
        exp_A=_num(di, "exp_A", "diagnostics") if "exp_A" in di else None,
        monitor_window=_num(di, "window", "diagnostics", defaults.monitor_window),
        blowup_threshold=_num(bl, "threshold", "blowup", defaults.blowup_threshold),
        growth_window=_num(bl, "window", "blowup", kind=int) if "window" in bl else None,
        seed=_num(raw, "seed", "", 0, int) if "seed" in raw else 0,
        base_dir=base_dir,
    )
    if sim.helmholtz_method not in ("dct", "cg", "dense"):
        raise ConfigError(f"unknown method {sim.helmholtz_method!r}", "solver.helmholtz_method")
    sim.validate()
    _check_initial(sim)
    return ExperimentConfig(
        sim,
        raw,
        snapshot_every=_num(out, "snapshot_every", "output", 0, int),
        images=bool(out.get("images", False)),
    )


def _check_initial(sim: SimConfig) -> None:
    rng = np.random.default_rng(sim.seed)
    for name, spec in (("u", sim.u0), ("v", sim.v0)):
        if not isinstance(spec, dict):
            raise ConfigError("expected a table", f"initial.{name}")
        if name == "v" and spec.get("kind", "helmholtz") == "helmholtz":
            continue
        try:
            f = build_field(sim.grid, spec, rng, sim.base_dir)
        except ConfigError as exc:
            raise ConfigError(str(exc).split(": ", 1)[-1], f"initial.{name}.{exc.where}" if exc.where else f"initial.{name}") from None
        if name == "u" and (f.min() < 0 or not f.sum() > 0):
            raise ConfigError("u0 must be nonnegative and not identically zero", "initial.u")
        if name == "v" and sim.eps > 0 and not f.min() > 0:
            raise ConfigError("v0 must be strictly positive", "initial.v")


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse a TOML config; syntax errors carry the line/column, field errors the dotted key."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(exc), str(path)) from None
    cfg = config_from_dict(raw, path.parent)
    cfg.source = path
    return cfg
