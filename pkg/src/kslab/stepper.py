"""Time integration of the signal-dependent motility system

    u_t = Δ(γ(v)u),     εv_t - Δv + v = u,     Neumann boundaries,

for ε = 0 (parabolic-elliptic) and ε > 0 (fully parabolic).

Each step updates v first, then u with γ frozen at the new v.  The u-update
solves ``(I - dt·Δ_h∘diag(γ)) u' = u`` through the substitution ``y = γu'``:

    (diag(1/γ) + dt·L) y = u,     u' = u - dt·L y,     L = -Δ_h,

which is symmetric positive definite (and an M-matrix), so CG applies, and
``u'`` inherits exact mass conservation from the zero column sums of L.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

import numpy as np
from scipy import fft

from .diagnostics import DiagnosticsReport, Monitor
from .elliptic import HelmholtzSolver, pcg
from .errors import ConfigError, PreconditionError, SolverError
from .grid import Grid
from .motility import Motility

STATUSES = ("running", "finished", "blowup-flagged", "failed")
BLOWUP_VERDICTS = ("none", "growth", "threshold-exceeded")


class PositivityError(RuntimeError):
    """A step produced u below the positivity tolerance."""


# --- initial data ---------------------------------------------------------------


def _gaussian_sum(grid: Grid, bumps: list[dict[str, Any]]) -> np.ndarray:
    X = grid.mesh()
    out = grid.zeros()
    for b in bumps:
        c = b.get("center", [0.5 * L for L in grid.lengths])
        if len(c) != grid.dim:
            raise ConfigError(f"bump center needs {grid.dim} coordinates", "center")
        width = float(b.get("width", 0.1))
        if not width > 0:
            raise ConfigError("bump width must be positive", "width")
        r2 = sum((x - ci) ** 2 for x, ci in zip(X, c))
        out += float(b.get("weight", 1.0)) * np.exp(-r2 / (2 * width**2))
    return out


def _smooth_random(grid: Grid, rng: np.random.Generator, modes: int) -> np.ndarray:
    """Random combination of the lowest Neumann cosine modes, scaled to max |·| = 1."""
    coef = np.zeros(grid.shape)
    idx = tuple(slice(0, min(modes, n)) for n in grid.shape)
    coef[idx] = rng.standard_normal(coef[idx].shape)
    coef[(0,) * grid.dim] = 0.0
    f = fft.idctn(coef, type=2, norm="ortho")
    m = np.abs(f).max()
    return f / m if m > 0 else f


def build_field(grid: Grid, spec: dict[str, Any], rng: np.random.Generator, base_dir: Path | None = None) -> np.ndarray:
    """Initial field from a spec dict.

    ``kind`` is one of ``constant`` (``value`` or ``mass``), ``gaussian``
    (``bumps``, optional ``background``, optional target ``mass``),
    ``random`` (``mass``, ``amplitude`` < 1, ``modes``) or ``file``
    (``path`` to a ``.npy`` array).
    """
    kind = spec.get("kind")
    if kind == "constant":
        if "mass" in spec:
            return grid.full(float(spec["mass"]) / grid.measure)
        return grid.full(float(spec["value"]))
    if kind == "gaussian":
        bumps = spec.get("bumps") or [{}]
        f = _gaussian_sum(grid, bumps)
        bg = float(spec.get("background", 0.0))
        if "mass" in spec:
            target = float(spec["mass"]) - bg * grid.measure
            if not target > 0:
                raise ConfigError("mass must exceed background times the domain measure", "mass")
            f *= target / grid.integrate(f)
        return f + bg
    if kind == "random":
        a = float(spec.get("amplitude", 0.5))
        if not 0 <= a < 1:
            raise ConfigError("random amplitude must lie in [0, 1)", "amplitude")
        xi = _smooth_random(grid, rng, int(spec.get("modes", 4)))
        level = float(spec.get("mass", grid.measure)) / grid.measure
        return level * (1 + a * xi)
    if kind == "file":
        path = Path(spec["path"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        try:
            f = np.load(path)
        except OSError as exc:
            raise ConfigError(f"cannot read field file {path}: {exc}", "path") from exc
        if f.shape != grid.shape:
            raise ConfigError(f"field file {path} has shape {f.shape}, grid is {grid.shape}", "path")
        return np.asarray(f, dtype=float)
    raise ConfigError(f"unknown initial-data kind {kind!r}", "kind")


# --- configuration and state ---------------------------------------------------------


@dataclass
class SimConfig:
    grid: Grid
    motility: Motility
    eps: float = 0.0
    u0: dict[str, Any] = field(default_factory=lambda: {"kind": "constant", "value": 1.0})
    v0: dict[str, Any] = field(default_factory=lambda: {"kind": "helmholtz"})
    T: float = 1.0
    dt0: float = 1e-3
    dt_min: float = 1e-8
    dt_max: float = 1e-2
    max_steps: int | None = None
    blowup_threshold: float = 1e8
    growth_window: int | None = None
    diag_every: int = 1
    u_tol: float = 1e-13
    helmholtz_method: str = "dct"
    helmholtz_tol: float = 1e-10
    positivity_tol: float = 1e-12
    grow_after: int = 10
    grow_factor: float = 1.2
    cfl_cap: bool = False
    seed: int = 0
    energies: list[tuple[float, float]] | None = None
    lp_norms: tuple[float, ...] = (2.0,)
    comparison: tuple[float, float] = (1.5, 1.0)
    exp_A: float | None = None
    monitor_window: float = 1.0
    base_dir: Path | None = None

    def validate(self) -> None:
        if not (self.eps >= 0 and math.isfinite(self.eps)):
            raise ConfigError("eps must be finite and nonnegative", "eps")
        if not self.T >= 0:
            raise ConfigError("T must be nonnegative", "T")
        if not (0 < self.dt_min <= self.dt0 <= self.dt_max):
            raise ConfigError("need 0 < dt_min <= dt0 <= dt_max", "dt0")
        if self.diag_every < 1:
            raise ConfigError("diag_every must be >= 1", "diag_every")
        if not self.blowup_threshold > 0:
            raise ConfigError("blowup_threshold must be positive", "blowup_threshold")
        if self.growth_window is not None and self.growth_window < 2:
            raise ConfigError("growth_window must cover at least 2 samples", "growth_window")
        if not (0 < self.u_tol < 1e-6):
            raise ConfigError("u_tol must lie in (0, 1e-6)", "u_tol")


@dataclass
class SimState:
    t: float
    dt: float
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    step: int = 0
    status: str = "running"


def initial_state(config: SimConfig, solver: HelmholtzSolver | None = None) -> SimState:
    config.validate()
    g = config.grid
    rng = np.random.default_rng(config.seed)
    solver = solver or HelmholtzSolver(g, config.helmholtz_method, config.helmholtz_tol)
    u = build_field(g, config.u0, rng, config.base_dir)
    if np.any(u < 0) or not g.integrate(u) > 0:
        raise ConfigError("u0 must be nonnegative with positive mass", "u0")
    w = solver.solve(u)
    if config.eps == 0 or config.v0.get("kind", "helmholtz") == "helmholtz":
        v = w.copy()
    else:
        v = build_field(g, config.v0, rng, config.base_dir)
    if not v.min() > 0:
        raise ConfigError("v0 must be strictly positive", "v0")
    return SimState(0.0, config.dt0, u, v, w)


# --- single steps ------------------------------------------------------------------------


class Stepper:
    """Holds the immutable per-run operators and performs single steps."""

    def __init__(
        self,
        grid: Grid,
        motility: Motility,
        eps: float = 0.0,
        solver: HelmholtzSolver | None = None,
        u_tol: float = 1e-13,
        positivity_tol: float = 1e-12,
        u_scale: float = 1.0,
    ):
        self.grid = grid
        self.motility = motility
        self.eps = float(eps)
        self.solver = solver or HelmholtzSolver(grid)
        self.u_tol = u_tol
        self.L = grid.neg_laplacian_matrix
        self.L_diag = self.L.diagonal()
        self.floor = -positivity_tol * u_scale
        self.last_iterations = 0

    def update_u(self, u: np.ndarray, gam: np.ndarray, dt: float) -> np.ndarray:
        """Solve ``(I - dt·Δ_h∘diag(γ)) u' = u`` with γ frozen."""
        b = u.ravel()
        g = gam.ravel()
        d = 1.0 / g
        L = self.L
        y, it, _ = pcg(lambda y: d * y + dt * (L @ y), b, d + dt * self.L_diag, x0=g * b, tol=self.u_tol, maxiter=20 * b.size)
        self.last_iterations = it
        u_new = (b - dt * (L @ y)).reshape(u.shape)
        if not np.all(np.isfinite(u_new)):
            raise SolverError("non-finite u after the implicit update", math.inf, it)
        if u_new.min() < self.floor:
            raise PositivityError(f"min u = {u_new.min():.3e} below tolerance")
        return u_new

    def step_parabolic_elliptic(self, state: SimState, dt: float) -> SimState:
        v_new = self.solver.solve(state.u)
        u_new = self.update_u(state.u, self.motility.gamma(v_new), dt)
        # keep v = (I-Δ)^{-1}u on the new state so w ≡ v between steps
        w_new = self.solver.solve(u_new)
        return SimState(state.t + dt, dt, u_new, w_new, w_new, state.step + 1, state.status)

    def step_fully_parabolic(self, state: SimState, dt: float, eps: float | None = None) -> SimState:
        eps = self.eps if eps is None else eps
        if not eps > 0:
            raise PreconditionError("step_fully_parabolic needs eps > 0")
        c = eps / dt
        v_new = self.solver.solve(c * state.v + state.u, shift=c + 1.0)
        u_new = self.update_u(state.u, self.motility.gamma(v_new), dt)
        w_new = self.solver.solve(u_new)
        return SimState(state.t + dt, dt, u_new, v_new, w_new, state.step + 1, state.status)

    def step(self, state: SimState, dt: float) -> SimState:
        if self.eps == 0:
            return self.step_parabolic_elliptic(state, dt)
        return self.step_fully_parabolic(state, dt)


def step_parabolic_elliptic(state: SimState, dt: float, grid: Grid, motility: Motility, **kw) -> SimState:
    return Stepper(grid, motility, 0.0, **kw).step_parabolic_elliptic(state, dt)


def step_fully_parabolic(state: SimState, dt: float, eps: float, grid: Grid, motility: Motility, **kw) -> SimState:
    return Stepper(grid, motility, eps, **kw).step_fully_parabolic(state, dt, eps)


# --- blowup indicator ---------------------------------------------------------------------


def detect_blowup(history, M_blow: float, window: int | None = None, factor: float = 10.0) -> str:
    """Classify a sampled ``||u(t)||∞`` history.

    ``threshold-exceeded`` iff some sample reaches ``M_blow``; ``growth`` iff
    the trailing ``window`` samples (all when ``None``) are non-decreasing
    and grew by at least ``factor``.  Growth is an indicator, not a proof of
    blowup.
    """
    h = np.asarray(history, dtype=float)
    if h.ndim != 1 or len(h) < 2:
        raise PreconditionError("detect_blowup needs at least 2 samples")
    if np.max(h) >= M_blow:
        return "threshold-exceeded"
    tail = h if window is None else h[-int(window):]
    if np.all(np.diff(tail) >= 0) and tail[-1] >= factor * tail[0]:
        return "growth"
    return "none"


# --- driver -----------------------------------------------------------------------------------


@dataclass
class RunResult:
    summary: dict[str, Any]
    report: DiagnosticsReport
    state: SimState

    def __iter__(self):
        return iter((self.summary, self.report, self.state))


def run(
    config: SimConfig,
    on_sample: Callable[[SimState], None] | None = None,
) -> RunResult:
    """Advance ``config`` to ``T`` (or blowup flag, or failure).

    Diagnostics are recorded on the initial data and every ``diag_every``
    accepted steps, plus on the final state.  ``on_sample`` is called with
    each sampled state (the harness uses it for snapshots).
    """
    t_start = time.perf_counter()
    g = config.grid
    solver = HelmholtzSolver(g, config.helmholtz_method, config.helmholtz_tol)
    state = initial_state(config, solver)
    u0max = float(state.u.max())
    stepper = Stepper(g, config.motility, config.eps, solver, config.u_tol, config.positivity_tol, u0max)
    monitor = Monitor(
        g,
        config.motility,
        config.eps,
        solver,
        state.u,
        state.w,
        energies=config.energies,
        lp=config.lp_norms,
        comparison=config.comparison,
        exp_A=config.exp_A,
    )
    v_star, w_star, u_min = float(state.v.min()), float(state.w.min()), float(state.u.min())
    monitor.record(state, v_star=v_star, w_star=w_star)
    if on_sample:
        on_sample(state)
    h_min = min(g.spacing)
    dt = config.dt0
    accepted_run = rejected = 0
    error = None
    last_recorded = 0
    sup_hist = [u0max]

    def tiny_left(t: float) -> bool:
        return config.T - t <= 1e-12 * max(config.T, 1.0)

    while not tiny_left(state.t):
        if config.max_steps is not None and state.step >= config.max_steps:
            break
        if config.cfl_cap:
            cap = 0.25 * h_min**2 / float(config.motility.gamma(state.v).max())
            dt = min(dt, max(cap, config.dt_min))
        dt_try = min(dt, config.T - state.t)
        try:
            new = stepper.step(state, dt_try)
        except (SolverError, PositivityError, FloatingPointError) as exc:
            rejected += 1
            accepted_run = 0
            dt = dt_try / 2
            if dt < config.dt_min:
                state.status = "failed"
                error = str(exc)
                break
            continue
        prev, state = state, new
        v_star = min(v_star, float(state.v.min()))
        w_star = min(w_star, float(state.w.min()))
        u_min = min(u_min, float(state.u.min()))
        sup = float(state.u.max())
        accepted_run += 1
        if accepted_run >= config.grow_after:
            dt = min(dt * config.grow_factor, config.dt_max)
            accepted_run = 0
        flagged = sup >= config.blowup_threshold
        if state.step % config.diag_every == 0 or flagged or tiny_left(state.t):
            monitor.record(state, prev, state.t - prev.t, v_star=v_star, w_star=w_star)
            last_recorded = state.step
            sup_hist.append(sup)
            if on_sample:
                on_sample(state)
        if flagged:
            state.status = "blowup-flagged"
            break
    if state.status == "running":
        state.status = "finished"
    if last_recorded != state.step:
        # ended on max_steps or failure between samples; record the last accepted state
        monitor.record(state, v_star=v_star, w_star=w_star)
        sup_hist.append(float(state.u.max()))

    report = monitor.finalize(window=config.monitor_window)
    verdict = detect_blowup(sup_hist, config.blowup_threshold, config.growth_window) if len(sup_hist) >= 2 else "none"
    summary = {
        "status": state.status,
        "error": error,
        "t_final": state.t,
        "steps": state.step,
        "rejected_steps": rejected,
        "dt_final": dt,
        "mass0": monitor.mass0,
        "final_mass_drift": float(report.column("mass_drift")[-1]),
        "max_abs_mass_drift": report.summary["max_abs_mass_drift"],
        "sup_u0": u0max,
        "max_sup_u": float(max(sup_hist)),
        "sup_ratio_final": sup_hist[-1] / u0max,
        "sup_ratio_max": float(max(sup_hist)) / u0max,
        "min_u": u_min,
        "v_star": v_star,
        "w_star": w_star,
        "blowup_verdict": verdict,
        "samples": len(report),
        "wall_time": time.perf_counter() - t_start,
    }
    return RunResult(summary, report, state)


def with_overrides(config: SimConfig, **changes) -> SimConfig:
    return replace(config, **changes)
