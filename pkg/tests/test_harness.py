import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from spectraflow.harness import ConfigError, EXPERIMENTS, from_text, load_config, run, validate
from spectraflow.harness.cli import main
from spectraflow.harness.config import parse_grid
from spectraflow.harness.experiments import worker_count

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SMALL_FLOW = """
[experiment]
name = flow-transport
seed = 0
output = {out}
checks = transport

[model]
name = tfim
L = {L}
h0 = 1.5
h1 = 2.5

[grid]
s = linspace(0, 1, 11)

[flow]
max_refinements = 0

[tolerance]
transport = {tol}
"""


def _cfg(tmp_path, L=4, tol="1e-2", **extra):
    text = SMALL_FLOW.format(out=tmp_path / "out", L=L, tol=tol)
    return from_text(text)


def test_parse_grid_forms():
    np.testing.assert_allclose(parse_grid("linspace(0, 1, 3)"), [0, 0.5, 1])
    np.testing.assert_allclose(parse_grid("range(1, 4)"), [1, 2, 3])
    np.testing.assert_allclose(parse_grid("0.5, 2"), [0.5, 2])
    assert parse_grid("").size == 0
    with pytest.raises(ConfigError):
        parse_grid("a, b")


def test_validate_examples(tmp_path):
    assert validate(_cfg(tmp_path)) == []
    diags = validate(_cfg(tmp_path, L=20))
    assert any("L=20" in d and "refused" in d for d in diags)
    assert any("positive" in d for d in validate(_cfg(tmp_path, tol="-1e-3")))
    cfg = load_config(CONFIGS / "c11_lr_cones.ini")
    cfg.sections["grid"]["distances"] = "range(1, 1)"
    assert any("empty" in d for d in validate(cfg))


def test_validate_unknown_names():
    assert validate(from_text("[experiment]\nname = nope\n"))[0].startswith("unknown experiment")
    cfg = from_text("[experiment]\nname = flow-transport\n[model]\nname = ising3d\n[grid]\ns = 0, 1\n")
    assert any("unknown model" in d for d in validate(cfg))
    with pytest.raises(ConfigError):
        from_text("[model]\nname = tfim\n")


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("**/*.ini")), ids=lambda p: p.stem)
def test_shipped_configs_validate(path):
    assert validate(load_config(path)) == []


def test_run_is_deterministic(tmp_path):
    a = run(from_text(SMALL_FLOW.format(out=tmp_path / "a", L=4, tol="1e-2")))
    b = run(from_text(SMALL_FLOW.format(out=tmp_path / "b", L=4, tol="1e-2")))
    assert a.status == b.status == "pass"
    for name in sorted(p.name for p in (tmp_path / "a").glob("*.csv")):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    sa = json.loads((tmp_path / "a" / "summary.json").read_text())
    sb = json.loads((tmp_path / "b" / "summary.json").read_text())
    sa.pop("config"), sb.pop("config")
    assert sa == sb


def test_csv_header(tmp_path):
    run(_cfg(tmp_path))
    header = (tmp_path / "out" / "transport.csv").read_text().splitlines()[0]
    assert header == "s,gap,transport_residual,generator_norm"


def test_cli_exit_codes(tmp_path, capsys):
    ok = tmp_path / "ok.ini"
    ok.write_text(SMALL_FLOW.format(out=tmp_path / "o1", L=4, tol="1e-2"))
    assert main(["run", str(ok)]) == 0
    tight = tmp_path / "tight.ini"
    tight.write_text(SMALL_FLOW.format(out=tmp_path / "o2", L=4, tol="1e-15"))
    assert main(["run", str(tight)]) == 1
    bad = tmp_path / "bad.ini"
    bad.write_text(SMALL_FLOW.format(out=tmp_path / "o3", L=20, tol="1e-2"))
    assert main(["run", str(bad)]) == 2
    assert main(["validate", str(bad)]) == 2
    assert main(["validate", str(ok)]) == 0
    assert main(["run", str(tmp_path / "missing.ini")]) == 2
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 2
    closed = tmp_path / "closed.ini"
    closed.write_text(SMALL_FLOW.format(out=tmp_path / "o4", L=6, tol="1e-2")
                      .replace("h1 = 2.5", "h1 = 0.3").replace("[flow]", "[flow]\ngamma_min = 0.5"))
    assert main(["run", str(closed)]) == 3


def test_list_experiments(capsys):
    assert main(["list-experiments"]) == 0
    out = capsys.readouterr().out
    for name in EXPERIMENTS:
        assert name in out


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "spectraflow", "list-experiments"], capture_output=True, text=True)
    assert out.returncode == 0 and "flow-transport" in out.stdout


def test_worker_env(monkeypatch):
    monkeypatch.setenv("SPECTRAFLOW_WORKERS", "3")
    assert worker_count(None) == 3
    assert worker_count(2) == 2
    monkeypatch.delenv("SPECTRAFLOW_WORKERS")
    assert worker_count(None) == 1


def test_workers_do_not_change_results(tmp_path):
    text = (CONFIGS / "c03_band_limit.ini").read_text()
    a = run(from_text(text), workers=1, write=False)
    b = run(from_text(text), workers=3, write=False)
    assert a.summary == b.summary


def test_kernel_constants_summary(tmp_path):
    cfg = load_config(CONFIGS / "c01_kernel_constants.ini")
    cfg.output = tmp_path
    rec = run(cfg)
    assert 14250 < rec.summary["eta_star"] < 14251
    assert set(rec.verdicts) == {"eta_star", "zeta_star", "K"}
    assert (tmp_path / "constants.csv").exists()
