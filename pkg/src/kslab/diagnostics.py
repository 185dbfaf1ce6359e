"""Run-time versions of the structural identities and a priori bounds.

The residuals use the same backward difference in time as the scheme, so
they measure how faithfully a trajectory obeys

    w_t + γ(v)u = (I-Δ)^{-1}[γ(v)u],         w = (I-Δ)^{-1}u,

rather than mixing in the scheme's own truncation error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .elliptic import HelmholtzSolver, exp_moment, lq_ratio
from .errors import PreconditionError
from .grid import Grid
from .motility import Motility, _sample_points

# --- identity residuals --------------------------------------------------------


def key_identity_residual(prev, state, dt: float, motility: Motility, solver: HelmholtzSolver) -> float:
    """L² norm of ``(w'-w)/dt + γ(v')u' - (I-Δ)^{-1}[γ(v')u']``.

    ``prev`` and ``state`` are consecutive accepted states carrying ``u``,
    ``v`` and ``w`` arrays.
    """
    grid = solver.grid
    gu = motility.gamma(state.v) * state.u
    r = (state.w - prev.w) / dt + gu - solver.solve(gu)
    return grid.lp_norm(r, 2)


def kid0_residual(prev, state, dt: float, motility: Motility, solver: HelmholtzSolver, eps: float = 0.0) -> float:
    """L² norm of the defect of ``v_t - γ(v)Δv + vγ(v) = (I-Δ)^{-1}[γ(v)u]``.

    Only meaningful in the parabolic-elliptic case, where ``w`` and ``v``
    coincide.
    """
    if eps != 0:
        raise PreconditionError("kid0_residual only applies to eps = 0")
    grid = solver.grid
    g = motility.gamma(state.v)
    r = (state.v - prev.v) / dt - g * grid.laplacian(state.v) + state.v * g - solver.solve(g * state.u)
    return grid.lp_norm(r, 2)


def envelope_check(w: np.ndarray, w0: np.ndarray, t: float, gamma_at_vstar: float) -> float:
    """``min(w₀ e^{γ(v*) t} - w)``; nonnegative certifies the pointwise envelope."""
    if t < 0:
        raise PreconditionError("t must be nonnegative")
    return float(np.min(w0 * math.exp(gamma_at_vstar * t) - w))


def comparison_check(v: np.ndarray, w: np.ndarray, C: float, K: float) -> float:
    """``min(C(w + K) - v)`` for the comparison bound ``v <= C(w + K)``."""
    if not (C > 1 and K > 0):
        raise PreconditionError(f"comparison constants need C > 1, K > 0, got C={C}, K={K}")
    return float(np.min(C * (w + K) - v))


@dataclass
class ComparisonFit:
    """Tracks, for each ``C`` on a lattice, the smallest ``K`` keeping ``v <= C(w+K)``."""

    C_values: tuple[float, ...] = (1.01, 1.05, 1.1, 1.25, 1.5, 2.0, 3.0)
    K_values: tuple[float, ...] = (1e-3, 1e-2, 0.1, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0)
    needed: dict[float, float] = field(default_factory=dict)

    def update(self, v: np.ndarray, w: np.ndarray) -> None:
        for C in self.C_values:
            k = float(np.max(v / C - w))
            self.needed[C] = max(self.needed.get(C, -math.inf), k)

    def required_K(self) -> dict[float, float]:
        return dict(self.needed)

    def best(self) -> tuple[float, float] | None:
        """Smallest lattice ``C`` whose required ``K`` fits the lattice, with its smallest ``K``."""
        for C in sorted(self.C_values):
            need = self.needed.get(C)
            if need is None:
                continue
            for K in sorted(self.K_values):
                if K >= need:
                    return C, K
        return None


# --- weighted energies and coefficient arithmetic ---------------------------------


def weighted_energy(grid: Grid, u: np.ndarray, v: np.ndarray, p: float, q: float, m: Motility) -> float:
    """``∫ u^{1+p} γ(v)^q``."""
    if p < 0 or q < 0:
        raise PreconditionError("weighted energy needs p >= 0 and q >= 0")
    integrand = np.asarray(u, dtype=float) ** (1 + p)
    if q != 0:
        integrand = integrand * m.gamma(v) ** q
    return float(integrand.sum() * grid.cell_volume)


def lambda_weights(p: int) -> list[float]:
    """Weights ``λ_{p,0..p}`` combining the family of weighted-energy estimates.

    ``λ_{p,0} = 1`` and ``λ_{p,j} = (p+1-j) λ_{p,j-1} / j``, i.e. the
    binomial row ``C(p, j)``.
    """
    if int(p) != p or p < 1:
        raise PreconditionError(f"p must be an integer >= 1, got {p}")
    lam = [1.0]
    for j in range(1, int(p) + 1):
        lam.append((p + 1 - j) * lam[-1] / j)
    return lam


def default_energy_set(n: int) -> list[tuple[int, int]]:
    half = n // 2
    pairs = [(1, 0), (1, 1)] + [(half, j) for j in range(half + 1) if half >= 1]
    out: list[tuple[int, int]] = []
    for pq in pairs:
        if pq not in out:
            out.append(pq)
    return out


def a3b_condition_margin(m: Motility, p: int, s_range: tuple[float, float] = (1e-3, 1e3), samples: int = 512) -> float:
    """``min_s γγ'' - (p+1)|γ'|²`` over log-spaced samples of ``s_range``.

    Nonnegative iff the combined weighted-energy estimate with exponent
    ``p`` closes (worst case ``j = 1`` of ``(p+2-j)|γ'|² <= γγ''``); with
    ``p = [n/2]`` this is (A3b).
    """
    if int(p) != p or p < 1:
        raise PreconditionError(f"p must be an integer >= 1, got {p}")
    if m.family == "tabulated":
        t = m.table
        t = t[(t[:, 0] >= s_range[0]) & (t[:, 0] <= s_range[1])]
        g, g1, g2 = t[:, 1], t[:, 2], t[:, 3]
        return float(np.min(g * g2 - (p + 1) * g1**2))
    s = _sample_points(s_range, samples)
    g, g1, g2 = m.derivatives(s)
    # factor as |γ'|²(ratio - (p+1)) with the ratio in closed form where known,
    # so boundary cases such as power(1), p = 1 come out exactly zero
    if m.family == "power":
        ratio = 1.0 + 1.0 / m.k
    elif m.family == "exponential":
        ratio = 1.0
    elif m.family == "stretched":
        ratio = 1.0 + (1.0 - m.beta) / (m.chi * m.beta * s**m.beta)
    else:
        ratio = g * g2 / g1**2
    return float(np.min(g1**2 * (ratio - (p + 1))))


@dataclass(frozen=True)
class MoserLadder:
    n: int
    k: float
    q_star: float
    p: tuple[float, ...]

    def closed_form(self, r: int) -> float:
        return 2.0 ** (r - 1) * (self.q_star - self.n * self.k) + self.n * self.k / 2

    @property
    def exponent_normalizer(self) -> float:
        """``2/(q* - nk)``, the power taken in the limiting L^∞ bound."""
        return 2.0 / (self.q_star - self.n * self.k)


def _check_moser_nk(n: int, k: float) -> float:
    if int(n) != n or n < 3:
        raise PreconditionError(f"the Moser ladder needs an integer n >= 3, got {n}")
    if not (0 < k < 2.0 / (n - 2)):
        raise PreconditionError(f"need 0 < k < 2/(n-2) = {2.0 / (n - 2):g}, got k={k}")
    return 2.0 * n / (n - 2)


def moser_ladder(n: int, k: float, R: int) -> MoserLadder:
    """Exponents ``p_0 = q*/2``, ``p_r = 2p_{r-1} - nk/2`` for ``r = 1..R``."""
    q_star = _check_moser_nk(n, k)
    if int(R) != R or R < 1:
        raise PreconditionError(f"R must be an integer >= 1, got {R}")
    p = [q_star / 2]
    for _ in range(int(R)):
        p.append(2 * p[-1] - n * k / 2)
    return MoserLadder(int(n), float(k), q_star, tuple(p))


@dataclass(frozen=True)
class MoserAlpha:
    alpha: float
    ratios: tuple[float, float, float, float]
    expected: tuple[float, float, float, float]
    gap_ratio: float


def moser_alpha(p: float, q: float, k: float, n: int) -> MoserAlpha:
    """Hölder exponent ``α = (p-k)(p-q) / (p(p-k-2q/q*))`` of one ladder rung.

    Also returns the four exponent ratios that collapse to ``2``,
    ``2/(n+2)``, ``n/2`` and ``(n+2)/2`` for ladder-consistent pairs, and
    ``(p-q)/(p-k-2q/q*)`` which collapses to ``n/(n+2)``.
    """
    qs = _check_moser_nk(n, k)
    if q < qs / 2 * (1 - 1e-12):
        raise PreconditionError(f"need q >= q*/2 = {qs / 2:g}, got q={q}")
    if not math.isclose(p, 2 * q - n * k / 2, rel_tol=1e-12, abs_tol=1e-12) or not p > q:
        raise PreconditionError(f"(p, q) = ({p}, {q}) is not a ladder-consistent pair")
    alpha = (p - k) * (p - q) / (p * (p - k - 2 * q / qs))
    ratios = (
        (qs * (p - k) - 2 * p) / (qs * (q - k) - 2 * q),
        ((qs - 2) * q - k * qs) / (qs * (p - k) - 2 * q),
        (p - q) * qs / (q * (qs - 2) - k * qs),
        (qs * (p - k) - 2 * q) / ((qs - 2) * q - k * qs),
    )
    expected = (2.0, 2.0 / (n + 2), n / 2.0, (n + 2) / 2.0)
    return MoserAlpha(alpha, ratios, expected, (p - q) / (p - k - 2 * q / qs))


# --- time-series audits ------------------------------------------------------------


def sliding_window_integrals(t: np.ndarray, y: np.ndarray, window: float) -> tuple[np.ndarray, np.ndarray]:
    """``∫_s^{s+window} y`` (trapezoid on the sample times) for every sample ``s``
    whose window fits inside the series."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))])
    starts = t[t + window <= t[-1] * (1 + 1e-12) + 1e-300]
    if len(starts) == 0:
        raise PreconditionError("series is shorter than one window")
    ends = starts + window
    return starts, np.interp(ends, t, cum) - np.interp(starts, t, cum)


def l1_dt_lp_monitor(t: np.ndarray, y: np.ndarray, window: float = 1.0) -> float:
    """Sup over ``s`` of ``∫_s^{s+window} y`` for a sampled ``y(t) = ∫γ(v)u²``."""
    if window <= 0:
        raise PreconditionError("window must be positive")
    return float(np.max(sliding_window_integrals(t, y, window)[1]))


@dataclass(frozen=True)
class GronwallAudit:
    passed: bool
    checked: int
    worst_margin: float
    inequality_violations: int

    def __bool__(self) -> bool:
        return self.passed


def gronwall_envelope_audit(y, g, h, r: float, dt: float, rtol: float = 1e-9) -> GronwallAudit:
    """Check the uniform Gronwall envelope on uniformly sampled series.

    For each admissible start ``t`` with ``a₁ = ∫g``, ``a₂ = ∫h``,
    ``a₃ = ∫y`` over ``[t, t+r]`` (trapezoid), verifies
    ``y(t+r) <= (a₃/r + a₂) e^{a₁}`` up to ``rtol``.  Also counts samples
    where the hypothesis ``y' <= gy + h`` fails discretely, since a
    violation there points at a wrong pairing rather than the scheme.
    """
    y, g, h = (np.asarray(a, dtype=float) for a in (y, g, h))
    if not (len(y) == len(g) == len(h)):
        raise PreconditionError("y, g and h must have equal length")
    if r <= 0 or dt <= 0:
        raise PreconditionError("r and dt must be positive")
    m = int(round(r / dt))
    if not math.isclose(m * dt, r, rel_tol=1e-9) or m < 1:
        raise PreconditionError("r must be a positive multiple of the sample spacing")
    if len(y) <= m:
        raise PreconditionError("series shorter than one window")

    def window_integrals(a: np.ndarray) -> np.ndarray:
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (a[1:] + a[:-1]) * dt)])
        return cum[m:] - cum[:-m]

    a1, a2, a3 = window_integrals(g), window_integrals(h), window_integrals(y)
    bound = (a3 / r + a2) * np.exp(a1)
    target = y[m:]
    margin = bound - target
    ok = margin >= -rtol * np.maximum(np.abs(bound), 1e-300)
    slope = np.diff(y) / dt
    hyp = slope <= (g[1:] * np.maximum(y[1:], y[:-1]) + h[1:]) * (1 + rtol) + rtol * np.abs(slope)
    return GronwallAudit(bool(np.all(ok)), int(len(margin)), float(np.min(margin)), int(np.sum(~hyp)))


def within_running_median(values: Sequence[float], factor: float = 3.0) -> bool:
    """True iff each value lies within ``factor`` of the median of all values so far."""
    vals = np.asarray(values, dtype=float)
    for i in range(len(vals)):
        med = np.median(vals[: i + 1])
        if not (med / factor <= vals[i] <= med * factor):
            return False
    return True


# --- per-run monitor ------------------------------------------------------------------

BASE_COLUMNS = (
    "t",
    "dt",
    "mass",
    "mass_drift",
    "sup_u",
    "min_u",
    "min_v",
    "min_w",
    "key_id_res",
    "kid0_res",
    "envelope_margin",
    "comparison_margin",
)
EXTRA_COLUMNS = ("step", "max_v", "max_w", "gamma_u2", "lq_ratio", "v_star", "w_star")


@dataclass
class DiagnosticsReport:
    """Column-oriented time series plus the run-level audit results."""

    columns: list[str]
    rows: list[tuple[float, ...]] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)

    def __len__(self) -> int:
        return len(self.rows)

    def energy_columns(self) -> list[str]:
        return [c for c in self.columns if c.startswith("energy_")]


class Monitor:
    """Evaluates the diagnostics on state snapshots and accumulates a report."""

    def __init__(
        self,
        grid: Grid,
        motility: Motility,
        eps: float,
        solver: HelmholtzSolver,
        u0: np.ndarray,
        w0: np.ndarray,
        energies: Sequence[tuple[float, float]] | None = None,
        lp: Sequence[float] = (2.0,),
        comparison: tuple[float, float] = (1.5, 1.0),
        exp_A: float | None = None,
    ):
        self.grid = grid
        self.motility = motility
        self.eps = eps
        self.solver = solver
        self.w0 = w0.copy()
        self.mass0 = grid.integrate(u0)
        self.energies = list(energies) if energies is not None else default_energy_set(grid.dim)
        self.half = grid.dim // 2
        self.lp = list(lp)
        self.comparison = comparison
        if exp_A is None and grid.dim == 2:
            exp_A = 2 * math.pi / self.mass0
        self.exp_A = exp_A
        n = grid.dim
        self.lq = 2.0 if n <= 3 else 0.5 * (1 + n / (n - 2))
        self.fit = ComparisonFit()
        energy_cols = [f"energy_p{p:g}_q{q:g}" for p, q in self.energies]
        if self.half >= 1:
            energy_cols.append(f"energy_comb_p{self.half}")
        self.report = DiagnosticsReport(
            list(BASE_COLUMNS) + energy_cols + ["exp_moment"] + [f"lp_{p:g}" for p in self.lp] + list(EXTRA_COLUMNS)
        )

    def record(self, state, prev=None, dt: float = math.nan, v_star: float | None = None, w_star: float | None = None) -> tuple[float, ...]:
        g = self.grid
        m = self.motility
        u, v, w = state.u, state.v, state.w
        mass = g.integrate(u)
        v_star = float(v.min()) if v_star is None else v_star
        w_star = float(w.min()) if w_star is None else w_star
        if prev is not None:
            key = key_identity_residual(prev, state, dt, m, self.solver)
            kid0 = kid0_residual(prev, state, dt, m, self.solver) if self.eps == 0 else math.nan
        else:
            key = kid0 = math.nan
        gv = m.gamma(v)
        env = envelope_check(w, self.w0, state.t, float(m.gamma(v_star)))
        if self.eps > 0:
            cmp_margin = comparison_check(v, w, *self.comparison)
            self.fit.update(v, w)
        else:
            cmp_margin = math.nan
        energies = [weighted_energy(g, u, v, p, q, m) for p, q in self.energies]
        if self.half >= 1:
            lam = lambda_weights(self.half)
            energies.append(sum(lam[j] * weighted_energy(g, u, v, self.half, j, m) for j in range(self.half + 1)))
        expm = exp_moment(g, w, self.exp_A) if (g.dim == 2 and self.exp_A) else math.nan
        lps = [g.lp_norm(u, p) for p in self.lp]
        row = (
            state.t,
            dt,
            mass,
            (mass - self.mass0) / self.mass0,
            float(u.max()),
            float(u.min()),
            float(v.min()),
            float(w.min()),
            key,
            kid0,
            env,
            cmp_margin,
            *energies,
            expm,
            *lps,
            float(state.step),
            float(v.max()),
            float(w.max()),
            float((gv * u * u).sum() * g.cell_volume),
            lq_ratio(g, w, u, self.lq),
            v_star,
            w_star,
        )
        self.report.rows.append(tuple(float(x) for x in row))
        return row

    def finalize(self, window: float = 1.0, gronwall_r: float = 1.0) -> DiagnosticsReport:
        rep = self.report
        s = rep.summary
        if len(rep) == 0:
            return rep
        t = rep.column("t")
        s["max_abs_mass_drift"] = float(np.max(np.abs(rep.column("mass_drift"))))
        s["v_star"] = float(np.min(rep.column("v_star")))
        s["w_star"] = float(np.min(rep.column("w_star")))
        s["min_envelope_margin"] = float(np.min(rep.column("envelope_margin")))
        key = rep.column("key_id_res")
        s["max_key_id_res"] = float(np.nanmax(key)) if np.any(np.isfinite(key)) else math.nan
        if self.eps > 0:
            s["comparison_fit"] = {str(C): K for C, K in self.fit.required_K().items()}
            s["comparison_best"] = self.fit.best()
        if t[-1] - t[0] > window:
            s["l1_dt_sup"] = l1_dt_lp_monitor(t, rep.column("gamma_u2"), window)
        if t[-1] - t[0] > gronwall_r:
            s["gronwall"] = self._gronwall(t, gronwall_r).__dict__
        return rep

    def _gronwall(self, t: np.ndarray, r: float) -> GronwallAudit:
        # y = max w obeys y' <= γ(v*) y (key identity + comparison), so g = γ(v*), h = 0
        dt = r / 20
        tu = np.arange(t[0], t[-1] + 0.5 * dt, dt)
        tu = tu[tu <= t[-1]]
        y = np.interp(tu, t, self.report.column("max_w"))
        vstar = np.minimum.accumulate(self.report.column("v_star"))
        gam = np.interp(tu, t, self.motility.gamma(vstar))
        return gronwall_envelope_audit(y, gam, np.zeros_like(y), r, dt)
