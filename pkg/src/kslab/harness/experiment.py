"""Single experiment: config -> run -> CSV, snapshots and manifest in one directory."""

from __future__ import annotations

import dataclasses
import traceback
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from ..errors import ConfigError
from ..motility import Regime, classify_regime
from ..stepper import SimState, run
from .config import ExperimentConfig, load_config
from .io import write_csv, write_json, write_pgm, write_snapshot


def agreement(verdict: str, blowup_verdict: str, status: str) -> bool:
    """Compare the classifier verdict with the observed outcome.

    ``uniformly-bounded`` must be matched by a finished run with blowup
    verdict ``none``; every other verdict admits any outcome.
    """
    if verdict == Regime.BOUNDED.value:
        return status == "finished" and blowup_verdict == "none"
    return True


@dataclass
class ExperimentManifest:
    config: dict[str, Any]
    version: str
    seed: int
    started: str
    finished: str
    status: str
    summary: dict[str, Any] = field(default_factory=dict)
    classifier: dict[str, Any] = field(default_factory=dict)
    agreement: bool | None = None
    artifacts: dict[str, Any] = field(default_factory=dict)
    error: str | None = None

    def as_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def run_experiment(
    config: str | Path | ExperimentConfig,
    out_dir: str | Path,
    seed: int | None = None,
    snapshot_every: int | None = None,
) -> ExperimentManifest:
    """Run one experiment and write ``manifest.json``, ``timeseries.csv`` and snapshots.

    Config errors propagate as :class:`ConfigError`; run-time failures are
    recorded in the manifest, which is always written.
    """
    from .. import __version__

    cfg = load_config(config) if not isinstance(config, ExperimentConfig) else config
    sim = cfg.sim if seed is None else dataclasses.replace(cfg.sim, seed=int(seed))
    every = cfg.snapshot_every if snapshot_every is None else snapshot_every
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror}") from exc

    artifacts: dict[str, Any] = {"manifest": "manifest.json"}
    snaps: list[str] = []
    images: list[str] = []
    counter = [0]

    def on_sample(state: SimState) -> None:
        if every <= 0:
            return
        i = counter[0]
        counter[0] += 1
        if i % every:
            return
        (out / "snapshots").mkdir(exist_ok=True)
        name = f"snapshots/state_{state.step:08d}.bin"
        write_snapshot(out / name, state.t, sim.grid.spacing, {"u": state.u, "v": state.v, "w": state.w})
        snaps.append(name)
        if cfg.images:
            img = f"snapshots/u_{state.step:08d}.pgm"
            write_pgm(out / img, state.u)
            images.append(img)

    started = _now()
    manifest = ExperimentManifest(cfg.raw, __version__, sim.seed, started, started, "failed")
    try:
        summary, report, _ = run(sim, on_sample)
    except (ConfigError, ArithmeticError, RuntimeError, ValueError) as exc:
        manifest.error = "".join(traceback.format_exception_only(type(exc), exc)).strip()
        manifest.finished = _now()
        manifest.artifacts = artifacts
        write_json(out / "manifest.json", manifest.as_dict())
        return manifest

    write_csv(out / "timeseries.csv", report.columns, report.rows)
    artifacts["timeseries"] = "timeseries.csv"
    if snaps:
        artifacts["snapshots"] = snaps
    if images:
        artifacts["images"] = images
    verdict = classify_regime(sim.grid.dim, sim.eps, sim.motility, summary["mass0"])
    manifest.status = summary["status"]
    manifest.error = summary.pop("error")
    manifest.summary = {**summary, "diagnostics": report.summary}
    manifest.classifier = verdict.as_dict()
    manifest.agreement = agreement(verdict.verdict.value, summary["blowup_verdict"], summary["status"])
    manifest.artifacts = artifacts
    manifest.finished = _now()
    write_json(out / "manifest.json", manifest.as_dict())
    return manifest
