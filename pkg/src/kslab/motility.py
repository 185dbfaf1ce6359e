"""Signal-dependent motility functions, the assumption lattice, and the
theorem-backed regime classifier.

Every closed-form family exposes ``γ``, ``γ'`` and ``γ''`` analytically.  The
convexity-type assumptions (A3a), (A3u), (A3b), (A3c) all reduce to bounds on
the ratio ``γγ''/|γ'|²``; its infimum is computed in closed form for the
named families and on samples for tabulated data.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

from .errors import DomainError, PreconditionError

FAMILIES = ("power", "exponential", "stretched", "powerlog", "tabulated")


@dataclass(frozen=True, eq=False)
class Motility:
    """A motility ``γ(s)``.

    Use the factory functions (:func:`power`, :func:`exponential`,
    :func:`stretched_exponential`, :func:`power_log`, :func:`tabulated`)
    rather than constructing directly.
    """

    family: str
    k: float | None = None
    chi: float | None = None
    beta: float | None = None
    table: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise PreconditionError(f"unknown motility family {self.family!r}")
        for name in ("k", "chi", "beta"):
            val = getattr(self, name)
            if val is not None and not (val > 0 and math.isfinite(val)):
                raise PreconditionError(f"motility parameter {name} must be positive, got {val}")

    @property
    def is_exponential(self) -> bool:
        return self.family == "exponential" or (self.family == "stretched" and self.beta == 1.0)

    @property
    def rate(self) -> float:
        """Exponential rate ``χ`` for ``e^{-χs}``-type motilities."""
        if not self.is_exponential:
            raise PreconditionError(f"{self.label} is not an exponential motility")
        return float(self.chi)

    @property
    def label(self) -> str:
        if self.family == "power":
            return f"power(k={self.k:g})"
        if self.family == "exponential":
            return f"exponential(chi={self.chi:g})"
        if self.family == "stretched":
            return f"stretched(chi={self.chi:g}, beta={self.beta:g})"
        if self.family == "powerlog":
            return f"powerlog(k={self.k:g})"
        return f"tabulated({len(self.table)} rows)"

    def params(self) -> dict[str, Any]:
        out: dict[str, Any] = {"family": self.family}
        for name in ("k", "chi", "beta"):
            if getattr(self, name) is not None:
                out[name] = getattr(self, name)
        return out

    def _domain(self, s: np.ndarray) -> None:
        if self.family == "tabulated":
            lo, hi = self.table[0, 0], self.table[-1, 0]
            if np.any(s < lo) or np.any(s > hi):
                raise DomainError(f"s outside tabulated range [{lo:g}, {hi:g}]")
            return
        singular_at_zero = self.family in ("power", "powerlog") or (
            self.family == "stretched" and self.beta < 1
        )
        if singular_at_zero and np.any(s <= 0):
            raise DomainError(f"{self.label} is only defined for s > 0")
        if np.any(s < 0):
            raise DomainError(f"{self.label} evaluated at negative s")

    def gamma(self, s):
        """Vectorised ``γ(s)``; the stepper's hot path."""
        s = np.asarray(s, dtype=float)
        self._domain(s)
        if self.family == "exponential":
            return np.exp(-self.chi * s)
        if self.family == "power":
            return s ** (-self.k)
        if self.family == "stretched":
            return np.exp(-self.chi * s**self.beta)
        if self.family == "powerlog":
            return 1.0 / (s**self.k * np.log1p(s))
        return np.interp(s, self.table[:, 0], self.table[:, 1])

    def derivatives(self, s):
        """Return ``(γ, γ', γ'')`` at ``s`` (scalar or array)."""
        s = np.asarray(s, dtype=float)
        self._domain(s)
        if self.family == "exponential":
            g = np.exp(-self.chi * s)
            return g, -self.chi * g, self.chi**2 * g
        if self.family == "power":
            k = self.k
            return s ** (-k), -k * s ** (-k - 1), k * (k + 1) * s ** (-k - 2)
        if self.family == "stretched":
            chi, b = self.chi, self.beta
            g = np.exp(-chi * s**b)
            a = chi * b * s ** (b - 1)
            return g, -a * g, g * (a**2 - chi * b * (b - 1) * s ** (b - 2))
        if self.family == "powerlog":
            k = self.k
            lg = np.log1p(s)
            q = s**k * lg
            q1 = k * s ** (k - 1) * lg + s**k / (1 + s)
            q2 = k * (k - 1) * s ** (k - 2) * lg + 2 * k * s ** (k - 1) / (1 + s) - s**k / (1 + s) ** 2
            return 1.0 / q, -q1 / q**2, (2 * q1**2 - q * q2) / q**3
        t = self.table
        return tuple(np.interp(s, t[:, 0], t[:, c]) for c in (1, 2, 3))

    def __eq__(self, other):
        if not isinstance(other, Motility):
            return NotImplemented
        if self.params() != other.params():
            return False
        if self.table is None or other.table is None:
            return self.table is other.table
        return np.array_equal(self.table, other.table)

    def __hash__(self):
        return hash(tuple(sorted(self.params().items())))


def power(k: float) -> Motility:
    """``γ(s) = s^{-k}``."""
    return Motility("power", k=float(k))


def exponential(chi: float) -> Motility:
    """``γ(s) = e^{-χs}``."""
    return Motility("exponential", chi=float(chi))


def stretched_exponential(chi: float, beta: float) -> Motility:
    """``γ(s) = e^{-χ s^β}``."""
    return Motility("stretched", chi=float(chi), beta=float(beta))


def power_log(k: float) -> Motility:
    """``γ(s) = 1 / (s^k log(1+s))``."""
    return Motility("powerlog", k=float(k))


def tabulated(s, g, g1, g2) -> Motility:
    table = np.column_stack([np.asarray(c, dtype=float) for c in (s, g, g1, g2)])
    if table.shape[0] < 2:
        raise PreconditionError("a tabulated motility needs at least two rows")
    if not np.all(np.isfinite(table)):
        raise PreconditionError("tabulated motility contains non-finite values")
    if np.any(np.diff(table[:, 0]) <= 0):
        raise PreconditionError("tabulated s values must be strictly increasing")
    if table[0, 0] < 0:
        raise PreconditionError("tabulated s values must be nonnegative")
    return Motility("tabulated", table=table)


def load_tabulated_csv(path: str | Path) -> Motility:
    """Read a 4-column CSV ``s, γ, γ', γ''``; a non-numeric header row is skipped."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError:
                if not rows:
                    continue
                raise PreconditionError(f"{path}:{lineno}: non-numeric entry in {row}") from None
            if len(vals) != 4:
                raise PreconditionError(f"{path}:{lineno}: expected 4 columns, got {len(vals)}")
            rows.append(vals)
    if not rows:
        raise PreconditionError(f"{path}: no data rows")
    arr = np.array(rows)
    return tabulated(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])


def motility_from_dict(spec: dict[str, Any], base_dir: Path | None = None) -> Motility:
    """Build a motility from a config table such as ``{family = "power", k = 1.0}``."""
    spec = dict(spec)
    family = spec.pop("family", None)
    try:
        if family == "power":
            return power(spec["k"])
        if family == "exponential":
            return exponential(spec["chi"])
        if family == "stretched":
            return stretched_exponential(spec["chi"], spec["beta"])
        if family == "powerlog":
            return power_log(spec["k"])
        if family == "tabulated":
            path = Path(spec["path"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            return load_tabulated_csv(path)
    except KeyError as exc:
        raise PreconditionError(f"motility family {family!r} needs parameter {exc.args[0]!r}") from None
    raise PreconditionError(f"unknown motility family {family!r}; expected one of {FAMILIES}")


def parse_motility(text: str) -> Motility:
    """Parse the CLI form ``family:key=value,key=value`` (e.g. ``power:k=1``).

    For tabulated data use ``tabulated:path=table.csv``.
    """
    family, _, rest = text.partition(":")
    spec: dict[str, Any] = {"family": family.strip()}
    for item in filter(None, (p.strip() for p in rest.split(","))):
        key, eq, value = item.partition("=")
        if not eq:
            raise PreconditionError(f"bad motility parameter {item!r}; expected key=value")
        key = key.strip()
        spec[key] = value.strip() if key == "path" else float(value)
    return motility_from_dict(spec)


def eval_gamma(m: Motility, s: float) -> tuple[float, float, float]:
    g, g1, g2 = m.derivatives(float(s))
    return float(g), float(g1), float(g2)


# --- the ratio γγ''/|γ'|² -----------------------------------------------------


@dataclass(frozen=True)
class RatioInfimum:
    """Infimum of ``γγ''/|γ'|²`` over a range, and whether it is attained."""

    value: float
    attained: bool


def _sample_points(s_range: tuple[float, float], samples: int) -> np.ndarray:
    lo, hi = s_range
    if not (0 < lo < hi):
        raise PreconditionError(f"sample range must satisfy 0 < lo < hi, got {s_range}")
    return np.geomspace(lo, hi, samples)


def _pointwise_ratio(g, g1, g2) -> np.ndarray:
    g, g1, g2 = (np.asarray(a, dtype=float) for a in (g, g1, g2))
    with np.errstate(divide="ignore", invalid="ignore"):
        r = g * g2 / g1**2
    flat = g1 == 0
    r = np.where(flat & (g2 >= 0), np.inf, r)
    r = np.where(flat & (g2 < 0), -np.inf, r)
    return r


def ratio_infimum(m: Motility, s_range: tuple[float, float] | None = None, samples: int = 2048) -> RatioInfimum:
    """Infimum of ``γγ''/|γ'|²`` on ``s_range`` (``None`` means all of ``(0, ∞)``)."""
    if m.family == "power":
        return RatioInfimum(1.0 + 1.0 / m.k, True)
    if m.family == "exponential":
        return RatioInfimum(1.0, True)
    if m.family == "stretched":
        chi, b = m.chi, m.beta
        if b == 1.0:
            return RatioInfimum(1.0, True)
        # ratio(s) = 1 + (1-β)/(χβ s^β): decreasing in s for β<1, increasing for β>1
        if s_range is None:
            return RatioInfimum(1.0 if b < 1 else -math.inf, False)
        s = s_range[1] if b < 1 else s_range[0]
        return RatioInfimum(1.0 + (1.0 - b) / (chi * b * s**b), True)
    if m.family == "powerlog":
        # increasing from 1 + 1/(k+1) as s -> 0+ to 1 + 1/k as s -> inf
        if s_range is None:
            return RatioInfimum(1.0 + 1.0 / (m.k + 1.0), False)
        r = _pointwise_ratio(*m.derivatives(np.array([s_range[0]])))
        return RatioInfimum(float(r[0]), True)
    t = m.table
    if s_range is not None:
        t = t[(t[:, 0] >= s_range[0]) & (t[:, 0] <= s_range[1])]
    if len(t) == 0:
        raise PreconditionError("no tabulated samples inside the requested range")
    r = _pointwise_ratio(t[:, 1], t[:, 2], t[:, 3])
    return RatioInfimum(float(np.min(r)), True)


def supremal_l(m: Motility, s_range: tuple[float, float] | None = None) -> float:
    """Largest ``l`` with ``l|γ'|² <= γγ''`` on the range, i.e. ``inf γγ''/|γ'|²``."""
    return ratio_infimum(m, s_range).value


def implied_k(l: float) -> float:
    """A convexity constant ``l > 1`` implies algebraic decay (A2) for every ``k > 1/(l-1)``."""
    if not l > 1:
        raise PreconditionError(f"implied_k needs l > 1, got {l}")
    if math.isinf(l):
        return 0.0
    return 1.0 / (l - 1.0)


# --- assumption lattice ----------------------------------------------------


class Verdict(str, Enum):
    HOLDS = "holds"
    FAILS = "fails"
    UNDECIDABLE = "undecidable-numerically"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Assumption:
    status: Verdict
    witness: dict[str, Any] = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.status is Verdict.HOLDS

    def as_dict(self) -> dict[str, Any]:
        return {"status": self.status.value, **self.witness}


def _h(**w) -> Assumption:
    return Assumption(Verdict.HOLDS, w)


def _f(**w) -> Assumption:
    return Assumption(Verdict.FAILS, w)


def _u(**w) -> Assumption:
    return Assumption(Verdict.UNDECIDABLE, w)


@dataclass(frozen=True)
class AssumptionReport:
    motility: str
    n: int
    eps: float
    A0: Assumption
    A1: Assumption
    A1p: Assumption
    A2: Assumption
    A2p: Assumption
    A2pp: Assumption
    A3a: Assumption
    A3u: Assumption
    A3b: Assumption
    A3c: Assumption

    NAMES = ("A0", "A1", "A1p", "A2", "A2p", "A2pp", "A3a", "A3u", "A3b", "A3c")

    def as_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"motility": self.motility, "n": self.n, "eps": self.eps}
        for name in self.NAMES:
            out[name] = getattr(self, name).as_dict()
        return out


def _floor_half(n: int) -> int:
    return n // 2


def _tail_trend(s: np.ndarray, g: np.ndarray) -> dict[str, Any]:
    """Classify the decay of a sampled tail.

    Looks at the local power exponent ``p(s) = -d log γ / d log s`` over the
    last quarter of the samples and at its growth ``σ = d log p / d log s``:
    ``σ ≈ 0`` is algebraic decay, ``0 < σ < 1`` stretched-exponential,
    ``σ ≈ 1`` exponential, ``σ > 1`` faster than exponential.
    """
    m = max(8, len(s) // 4)
    ts, tg = s[-m:], g[-m:]
    if np.any(tg <= 0):
        return {"monotone": False}
    dg = np.diff(tg)
    if not (np.all(dg <= 0) or np.all(dg >= 0)):
        return {"monotone": False}
    ls, lg = np.log(ts), np.log(tg)
    p = -np.diff(lg) / np.diff(ls)
    if np.any(p <= 0):
        return {"monotone": True, "decreasing": bool(np.all(dg < 0)), "p_last": float(p[-1]), "sigma": None}
    dp = np.diff(p)
    if not (np.all(dp <= 1e-12 * np.abs(p[1:])) or np.all(dp >= -1e-12 * np.abs(p[1:]))):
        return {"monotone": False}
    mids = 0.5 * (ls[1:] + ls[:-1])
    sigma = float(np.polyfit(mids, np.log(p), 1)[0])
    rate = float(p[-1] / ts[-1])
    return {"monotone": True, "decreasing": bool(np.all(dg < 0)), "p_last": float(p[-1]), "sigma": sigma, "rate_last": rate}


def check_assumptions(m: Motility, n: int, eps: float = 0.0, s_max: float = 1e6, samples: int = 256) -> AssumptionReport:
    """Decide (A0)-(A3c) for ``m`` in dimension ``n``.

    Closed-form families are decided analytically over ``s > 0``.  Tabulated
    motilities are decided on their rows; asymptotic clauses use the tail
    trend and report ``undecidable-numerically`` whenever it is non-monotone.
    """
    if samples < 64:
        raise PreconditionError("check_assumptions needs at least 64 samples")
    if eps < 0:
        raise PreconditionError("eps must be nonnegative")
    if m.family == "tabulated":
        return _check_tabulated(m, n, eps)

    ratio = ratio_infimum(m)
    a3 = _convexity_verdicts(m, n, ratio)

    A0 = _h(note="singular at s=0; admissible via the positive lower bound of v") if m.family in ("power", "powerlog") else _h()
    A1 = _h(limit=0.0)
    A1p = _h(limit=0.0, bound=(math.inf if eps == 0 else 1.0 / eps))

    fam = m.family
    if fam in ("power", "powerlog"):
        A2 = _h(k_min=m.k, k_min_attained=False)
        A2p = _h()
        A2pp = _h(chi_min=0.0)
    elif m.is_exponential:
        A2 = _f(reason="exponential decay beats every power")
        A2p = _f(alpha_max_failing=m.chi)
        A2pp = _h(chi_min=m.chi, chi_min_attained=False)
    elif fam == "stretched" and m.beta < 1:
        A2 = _f(reason="stretched-exponential decay beats every power")
        A2p = _h()
        A2pp = _h(chi_min=0.0)
    else:  # stretched, beta > 1
        A2 = _f(reason="super-exponential decay")
        A2p = _f(reason="super-exponential decay")
        A2pp = _f(reason="super-exponential decay")

    return AssumptionReport(m.label, n, eps, A0, A1, A1p, A2, A2p, A2pp, *a3)


def _convexity_verdicts(m: Motility, n: int, ratio: RatioInfimum) -> tuple[Assumption, ...]:
    half = _floor_half(n)
    l = ratio.value
    if m.family == "power" and n >= 3:
        # exact k-thresholds; avoids rounding in 1 + 1/k at the boundaries
        k = m.k
        k_a = (math.sqrt(2 * n) + 2) / (n - 2)
        k_u = 2.0 / (n - 2)
        k_b = 1.0 / half
        a3a = k < k_a
        a3u = k < k_u
        a3b = k <= k_b
    else:
        thr_a = math.sqrt(n / 2)
        a3a = l > thr_a or (l == thr_a and not ratio.attained)
        a3u = l > n / 2
        a3b = l >= 1 + half
    w = {"sup_l": l, "attained": ratio.attained}
    A3a = _h(**w) if a3a else _f(**w)
    A3u = _h(l0_sup=l) if a3u else _f(l0_sup=l)
    A3b = _h(required=1 + half, **w) if a3b else _f(required=1 + half, **w)
    A3c = _h(**w) if l > 1 else _f(**w)
    return A3a, A3u, A3b, A3c


def _check_tabulated(m: Motility, n: int, eps: float) -> AssumptionReport:
    t = m.table
    s, g, g1, g2 = t[:, 0], t[:, 1], t[:, 2], t[:, 3]
    A0 = _h(samples=len(s)) if np.all(g > 0) and np.all(g1 <= 0) else _f(
        first_violation=float(s[np.argmax((g <= 0) | (g1 > 0))])
    )
    ratio = RatioInfimum(float(np.min(_pointwise_ratio(g, g1, g2))), True)
    a3 = _convexity_verdicts(m, n, ratio)

    trend = _tail_trend(s, g)
    if not trend["monotone"]:
        reason = {"reason": "non-monotone tail"}
        A1 = A1p = A2 = A2p = A2pp = _u(**reason)
    else:
        sigma = trend.get("sigma")
        decaying = trend.get("decreasing", False) and trend.get("p_last", 0.0) > 0.05
        A1 = _h(tail_exponent=trend.get("p_last")) if decaying else _u(reason="tail not clearly decaying")
        if A1.holds:
            A1p = _h()
        elif eps > 0 and g[-1] < 1.0 / eps and trend.get("decreasing", False):
            A1p = _h(tail_value=float(g[-1]))
        else:
            A1p = _u(reason="tail not clearly below 1/eps")
        if not decaying or sigma is None:
            A2 = A2p = A2pp = _u(reason="no decay trend on tail")
        elif abs(sigma) < 0.1 or sigma < 0:
            A2 = _h(k_min=trend["p_last"], estimate=True)
            A2p = _h(estimate=True)
            A2pp = _h(chi_min=0.0, estimate=True)
        elif 0.2 < sigma < 0.8:
            A2 = _f(estimate=True, sigma=sigma)
            A2p = _h(estimate=True, sigma=sigma)
            A2pp = _h(chi_min=0.0, estimate=True)
        elif abs(sigma - 1.0) < 0.1:
            A2 = _f(estimate=True, sigma=sigma)
            A2p = _f(estimate=True, sigma=sigma)
            A2pp = _h(chi_min=trend["rate_last"], estimate=True)
        elif sigma > 1.2:
            A2 = A2p = A2pp = _f(estimate=True, sigma=sigma)
        else:
            A2 = A2p = A2pp = _u(reason="tail trend between regimes", sigma=sigma)
    return AssumptionReport(m.label, n, eps, A0, A1, A1p, A2, A2p, A2pp, *a3)


# --- regime classification ---------------------------------------------------


class Regime(str, Enum):
    BOUNDED = "uniformly-bounded"
    OPEN = "global-existence-boundedness-open"
    BLOWUP = "blowup-possible"
    OUTSIDE = "outside-theory"

    def __str__(self) -> str:
        return self.value


RULES = {
    "2d-slow-decay": "n=2, (A0)[+(A1) if eps>0] and (A2'): uniformly bounded for any mass",
    "2d-subcritical": "n=2, (A2'') with rate chi and mass < 4*pi/chi: uniformly bounded",
    "2d-supercritical-exp": "n=2, gamma=exp(-chi v) and mass > 4*pi/chi: unbounded as t->inf for certain data",
    "nd-elliptic-bounded": "n>=3, eps=0, (A0),(A1),(A3u): uniformly bounded",
    "nd-elliptic-exists": "n>=3, eps=0, (A0),(A3a): global existence, uniform bound not established",
    "nd-parabolic-bounded": "n>=3, eps>0, (A0),(A1),(A3b): uniformly bounded",
    "no-result": "hypotheses of no boundedness or existence result are met",
}


@dataclass(frozen=True)
class RegimeVerdict:
    verdict: Regime
    rule: str
    thresholds: dict[str, float] = field(default_factory=dict)

    @property
    def description(self) -> str:
        return RULES[self.rule]

    def as_dict(self) -> dict[str, Any]:
        return {"verdict": self.verdict.value, "rule": self.rule, "description": self.description, "thresholds": dict(self.thresholds)}


def _thresholds(n: int, m: Motility) -> dict[str, float]:
    out: dict[str, float] = {}
    if m.is_exponential:
        out["critical_mass"] = 4 * math.pi / m.rate
    if n >= 3:
        out["l_A3a"] = math.sqrt(n / 2)
        out["l_A3u"] = n / 2
        out["l_A3b"] = 1 + n // 2
        if m.family == "power":
            out["k_existence"] = (math.sqrt(2 * n) + 2) / (n - 2)
            out["k_bounded_eps0"] = 2.0 / (n - 2)
            out["k_bounded_eps_pos"] = 1.0 / (n // 2)
    return out


def classify_regime(n: int, eps: float, m: Motility, mass: float, report: AssumptionReport | None = None) -> RegimeVerdict:
    """Predict the long-time behaviour from the boundedness theorems alone.

    The decision table mirrors the hypotheses exactly and never
    extrapolates; anything not covered is ``outside-theory``.
    """
    if not mass > 0:
        raise PreconditionError(f"mass must be positive, got {mass}")
    if eps < 0:
        raise PreconditionError("eps must be nonnegative")
    rep = report or check_assumptions(m, n, eps)
    thr = _thresholds(n, m)
    base_ok = rep.A0.holds and (eps == 0 or rep.A1.holds)

    if n == 2 and base_ok:
        if rep.A2p.holds:
            return RegimeVerdict(Regime.BOUNDED, "2d-slow-decay", thr)
        if rep.A2pp.holds:
            chi = rep.A2pp.witness["chi_min"]
            crit = math.inf if chi == 0 else 4 * math.pi / chi
            thr.setdefault("critical_mass", crit)
            if mass < crit:
                return RegimeVerdict(Regime.BOUNDED, "2d-subcritical", thr)
        if m.is_exponential and mass > 4 * math.pi / m.rate:
            return RegimeVerdict(Regime.BLOWUP, "2d-supercritical-exp", thr)
    elif n >= 3 and eps == 0 and rep.A0.holds:
        if rep.A1.holds and rep.A3u.holds:
            return RegimeVerdict(Regime.BOUNDED, "nd-elliptic-bounded", thr)
        if rep.A3a.holds:
            return RegimeVerdict(Regime.OPEN, "nd-elliptic-exists", thr)
    elif n >= 3 and eps > 0 and base_ok:
        if rep.A3b.holds:
            return RegimeVerdict(Regime.BOUNDED, "nd-parabolic-bounded", thr)
    return RegimeVerdict(Regime.OUTSIDE, "no-result", thr)

