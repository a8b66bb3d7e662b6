"""Acceptance criteria, one test per shipped config.

Each test runs the config exactly as the CLI would (results are written to results/),
prints a single PASS/FAIL line and asserts every verdict. Runs share the in-process
flow and Ψ caches, so the L=12 criteria reuse each other's work.
"""
import time
from pathlib import Path

import pytest

from spectraflow.harness import load_config, run
from spectraflow.harness.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
REPORT: list[str] = []


def _record(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    REPORT.append(line)
    print(line)


def _run(n, title, name, budget=None, expect=None):
    cfg = load_config(CONFIGS / name)
    t0 = time.perf_counter()
    rec = run(cfg)
    wall = time.perf_counter() - t0
    verdicts = dict(rec.verdicts)
    if budget is not None:
        verdicts["runtime"] = wall < budget
    failed = [k for k, v in verdicts.items() if not v]
    ok = rec.status in ("pass", "fail") and not failed
    detail = ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in verdicts.items()) or rec.status
    _record(n, title, ok, f"{detail} ({wall:.1f} s)")
    assert rec.error is None, rec.error
    assert not failed, f"failed checks {failed}; summary {rec.summary}"
    return rec


def test_c01_kernel_constants():
    _run(1, "kernel constants", "c01_kernel_constants.ini", budget=60.0)


def test_c02_kernel_normalization():
    _run(2, "kernel normalization and brackets", "c02_kernel_normalization.ini")


def test_c03_band_limit():
    _run(3, "band-limit law", "c03_band_limit.ini")


def test_c04_projection_transport():
    _run(4, "projection transport", "c04_flow_transport.ini", budget=300.0)


def test_c05_block_oracle():
    _run(5, "inter-sector block oracle", "c05_block_oracle.ini")


def test_c06_two_form():
    _run(6, "two-form equivalence", "c06_two_form.ini")


def test_c07_telescoping():
    _run(7, "telescoping reconstruction", "c07_telescoping.ini")


def test_c08_delta_bounds():
    _run(8, "delta envelope", "c08_delta_bounds.ini")


def test_c09_psi_decay():
    _run(9, "psi decay", "c09_psi_decay.ini")


def test_c10_lppl():
    _run(10, "local perturbations", "c10_lppl_decay.ini")


def test_c11_lr_cones():
    _run(11, "light cones", "c11_lr_cones.ini", budget=1200.0)


def test_c12_volume_convergence():
    _run(12, "volume convergence", "c12_volume_convergence.ini")


def test_c13_symmetry():
    _run(13, "symmetry and covariance", "c13_symmetry.ini")


def test_c14_gap_closed(capsys):
    t0 = time.perf_counter()
    code = main(["run", str(CONFIGS / "c14_gap_closed.ini")])
    out = capsys.readouterr().out
    _record(14, "negative control", code == 3, f"exit code {code} ({time.perf_counter() - t0:.1f} s)")
    assert code == 3, out
    assert "gap-closed" in out


def test_c15_approximation():
    _run(15, "approximation lemma", "c15_approximation.ini")
