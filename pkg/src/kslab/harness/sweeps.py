"""Parameter sweeps over independent runs, optionally on a process pool."""

from __future__ import annotations

import dataclasses
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from ..errors import PreconditionError
from ..motility import classify_regime, exponential, power
from ..stepper import SimConfig, run
from .experiment import agreement
from .io import write_csv


@dataclass
class Outcome:
    ok: bool
    value: Any = None
    error: str | None = None


def _guarded(fn: Callable[[Any], Any], arg: Any) -> Outcome:
    try:
        return Outcome(True, fn(arg))
    except Exception as exc:  # isolate every failure to its own row
        return Outcome(False, error="".join(traceback.format_exception_only(type(exc), exc)).strip())


def parallel_map(fn: Callable[[Any], Any], args: Sequence[Any], workers: int = 1) -> list[Outcome]:
    """Apply ``fn`` to each argument, at most ``workers`` at a time.

    Results keep the input order; an exception in one call becomes a failed
    :class:`Outcome` and never cancels its siblings.  ``fn`` must be
    picklable when ``workers > 1``.
    """
    if workers < 1:
        raise PreconditionError("workers must be >= 1")
    if workers == 1 or len(args) <= 1:
        return [_guarded(fn, a) for a in args]
    with ProcessPoolExecutor(max_workers=min(workers, len(args))) as pool:
        futures = [pool.submit(_guarded, fn, a) for a in args]
        out = []
        for fut in futures:
            try:
                out.append(fut.result())
            except Exception as exc:  # worker crashed or result unpicklable
                out.append(Outcome(False, error=f"{type(exc).__name__}: {exc}"))
        return out


@dataclass
class SweepTable:
    axis: str
    values: list[float]
    rows: list[dict[str, Any]] = field(default_factory=list)
    notes: dict[str, Any] = field(default_factory=dict)

    COLUMNS = (
        "status",
        "blowup_verdict",
        "classifier",
        "agreement",
        "sup_ratio_final",
        "sup_ratio_max",
        "energy_sup",
        "max_abs_mass_drift",
        "steps",
        "wall_time",
        "error",
    )

    @property
    def failures(self) -> int:
        return sum(r["status"] == "error" for r in self.rows)

    def column(self, name: str) -> list[Any]:
        return [r.get(name) for r in self.rows]

    def to_csv(self, path: str | Path) -> Path:
        import csv

        path = Path(path)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\r\n")
            wr.writerow([self.axis, *self.COLUMNS])
            for v, r in zip(self.values, self.rows):
                cells = [format(v, ".17g")]
                for c in self.COLUMNS:
                    x = r.get(c)
                    cells.append(format(x, ".17g") if isinstance(x, float) else ("" if x is None else str(x)))
                wr.writerow(cells)
        return path


def _run_point(sim: SimConfig) -> dict[str, Any]:
    summary, report, _ = run(sim)
    energy_cols = report.energy_columns()
    energy_sup = max(float(np.max(report.column(c))) for c in energy_cols) if energy_cols else math.nan
    verdict = classify_regime(sim.grid.dim, sim.eps, sim.motility, summary["mass0"])
    return {
        "status": summary["status"],
        "blowup_verdict": summary["blowup_verdict"],
        "classifier": verdict.verdict.value,
        "agreement": agreement(verdict.verdict.value, summary["blowup_verdict"], summary["status"]),
        "sup_ratio_final": summary["sup_ratio_final"],
        "sup_ratio_max": summary["sup_ratio_max"],
        "energy_sup": energy_sup,
        "max_abs_mass_drift": summary["max_abs_mass_drift"],
        "steps": summary["steps"],
        "wall_time": summary["wall_time"],
        "error": summary["error"],
    }


def _collect(axis: str, values: list[float], outcomes: list[Outcome]) -> SweepTable:
    table = SweepTable(axis, values)
    for o in outcomes:
        table.rows.append(o.value if o.ok else {"status": "error", "error": o.error})
    return table


def _with_mass(sim: SimConfig, mass: float) -> SimConfig:
    u0 = dict(sim.u0)
    if u0.get("kind") not in ("gaussian", "constant", "random"):
        raise PreconditionError("mass sweeps need gaussian, constant or random initial data")
    u0.pop("value", None)
    u0["mass"] = mass
    return dataclasses.replace(sim, u0=u0)


def sweep_critical_mass(chi: float, multipliers: Sequence[float], base: SimConfig, workers: int = 1, out: str | Path | None = None) -> SweepTable:
    """Runs at mass ``m·4π/χ`` for each multiplier ``m`` with ``γ = e^{-χv}`` in 2D."""
    if base.grid.dim != 2:
        raise PreconditionError("the critical-mass sweep is two-dimensional")
    mult = [float(m) for m in multipliers]
    if mult != sorted(mult) or not mult:
        raise PreconditionError("multipliers must be non-empty and sorted")
    mot = exponential(chi)
    sims = [_with_mass(dataclasses.replace(base, motility=mot), m * 4 * math.pi / chi) for m in mult]
    table = _collect("mass_multiplier", mult, parallel_map(_run_point, sims, workers))
    ratios = [r.get("sup_ratio_max") for r in table.rows]
    if all(isinstance(r, float) for r in ratios):
        table.notes["sup_ratio_monotone_in_mass"] = bool(np.all(np.diff(ratios) >= 0))
    if out is not None:
        table.to_csv(out)
    return table


def sweep_decay_exponent(
    k_values: Sequence[float],
    base: SimConfig,
    family: str = "power",
    workers: int = 1,
    out: str | Path | None = None,
) -> SweepTable:
    """Runs with ``γ = v^{-k}`` for each ``k``; dimension and ε come from ``base``."""
    if family != "power":
        raise PreconditionError("decay-exponent sweeps are defined for the power family")
    ks = [float(k) for k in k_values]
    if not ks or any(not k > 0 for k in ks):
        raise PreconditionError("k values must be positive")
    sims = [dataclasses.replace(base, motility=power(k)) for k in ks]
    table = _collect("k", ks, parallel_map(_run_point, sims, workers))
    if out is not None:
        table.to_csv(out)
    return table

