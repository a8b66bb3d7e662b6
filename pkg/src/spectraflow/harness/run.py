"""Run an experiment config and persist its CSV tables and summary."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..backend import BACKEND
from ..spectrum import GapClosed
from .config import ConfigError, ExperimentConfig, validate
from .experiments import EXPERIMENTS, Context, Outcome, worker_count

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_GAP = 0, 1, 2, 3


@dataclass
class RunRecord:
    config: dict
    tables: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    status: str = "pass"
    error: dict | None = None

    @property
    def exit_code(self) -> int:
        return {"pass": EXIT_PASS, "fail": EXIT_FAIL, "gap-closed": EXIT_GAP}.get(self.status, EXIT_USAGE)

    @property
    def passed(self) -> bool:
        return self.status == "pass"


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    return x


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(x) for x in r])


def run(cfg: ExperimentConfig, workers: int | None = None, write: bool = True, log=None) -> RunRecord:
    rec = RunRecord(config=_plain(cfg.echo()))
    diags = validate(cfg)
    if diags:
        rec.status = "config-error"
        rec.error = {"type": "ConfigError", "diagnostics": diags}
        return rec
    spec = EXPERIMENTS[cfg.experiment]
    ctx = Context(cfg, worker_count(workers), log or (lambda msg: None))
    t0 = time.perf_counter()
    try:
        out: Outcome = spec.fn(ctx)
    except GapClosed as e:
        rec.status = "gap-closed"
        rec.error = {"type": "GapClosed", "s": e.s, "gap": e.gap, "gamma_min": e.gamma_min}
        rec.summary = {"gap_closed_at": e.s, "gap": e.gap, "gamma_min": e.gamma_min}
        out = None
    except ConfigError as e:
        rec.status = "config-error"
        rec.error = {"type": "ConfigError", "diagnostics": [str(e)]}
        out = None
    rec.timing = {"wall_seconds": time.perf_counter() - t0, "workers": ctx.workers, "backend": BACKEND}
    if out is not None:
        verdicts = {k: bool(v) for k, v in out.verdicts.items() if not cfg.checks or k in cfg.checks}
        rec.tables, rec.summary, rec.verdicts = out.tables, _plain(out.summary), verdicts
        rec.status = "pass" if all(verdicts.values()) else "fail"
    if write:
        try:
            persist(rec, cfg.output)
        except OSError as e:
            rec.status = "output-error"
            rec.error = {"type": "OutputError", "message": str(e)}
    return rec


def persist(rec: RunRecord, outdir: Path) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for t in rec.tables:
        write_csv(outdir / f"{t.name}.csv", t.header, t.rows)
    body = {"status": rec.status, "verdicts": rec.verdicts, "summary": rec.summary, "error": _plain(rec.error),
            "tables": [t.name for t in rec.tables], "config": rec.config}
    (outdir / "summary.json").write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
    (outdir / "timing.json").write_text(json.dumps(_plain(rec.timing), indent=2, sort_keys=True) + "\n")
