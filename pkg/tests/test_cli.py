import json
import math

import numpy as np
import pytest

from spinmem import cli
from spinmem.errors import AccuracyError
from spinmem.io import sha256_file


def _write(tmp_path, cfg, name="job.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def _run(tmp_path, cfg, out="out", extra=()):
    args = ["--out", str(tmp_path / out)]
    if cfg is not None:
        args += ["--config", str(_write(tmp_path, cfg, f"{out}.json"))]
    return cli.main(list(extra) + args), tmp_path / out


def _csv(path):
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def test_select_sin(tmp_path):
    code, out = _run(tmp_path, {"command": "select", "pulse": {"family": "sin", "T_us": 1}})
    assert code == 0
    data = _csv(out / "selection.csv")
    assert abs(data[np.argmin(np.abs(data[:, 0])), 1] - 1) < 1e-8
    head = (out / "pulse.csv").read_text().splitlines()[0]
    assert head == "t_us,omega_rad_per_us"


def test_fidelity_lorentzian(tmp_path):
    cfg = {"command": "fidelity", "grid": {"tau_max_us": 1, "tau_points": 201},
           "spectrum": {"components": [{"type": "lorentzian", "center_MHz": 0, "halfwidth_MHz": 1, "weight": 1}]}}
    code, out = _run(tmp_path, cfg)
    assert code == 0
    data = _csv(out / "fidelity.csv")
    assert np.abs(data[:, 1] - np.exp(-2 * 2 * math.pi * data[:, 0])).max() <= 1e-6


def test_transfer_with_oracle(tmp_path):
    hz = 1 / (2 * math.pi)
    cfg = {"command": "transfer", "transfer": {"coupling_MHz": hz, "oracle_spins": 300},
           "spectrum": {"components": [{"type": "rectangle", "center_MHz": 0, "halfwidth_MHz": hz, "weight": 1}]}}
    code, out = _run(tmp_path, cfg)
    assert code == 0
    rev = json.loads((out / "revivals.json").read_text())
    assert "revivals" in rev
    a, b = _csv(out / "transfer.csv"), _csv(out / "oracle.csv")
    assert np.abs(a[:, 1] - b[:, 1]).max() < 5e-3


def test_optimize_comb(tmp_path):
    cfg = {"command": "optimize", "optimize": {"objective": "fidelity_at", "T_us": 5, "tau_us": 1,
                                               "parameterization": "comb", "comb": {"m": 5, "tau_s_us": 1}}}
    code, out = _run(tmp_path, cfg)
    assert code == 0
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["converged"] and diag["fidelity"] == pytest.approx(0.75, abs=1e-3)


def test_optimize_not_converged_writes_artifacts(tmp_path, capsys):
    cfg = {"command": "optimize", "optimize": {"objective": "fidelity_at", "T_us": 1, "tau_us": 0.3,
                                               "n_target": 25.0, "n_nodes": 16, "n_cells": 128,
                                               "max_outer": 1, "max_inner": 1}}
    code, out = _run(tmp_path, cfg)
    assert code == 4
    assert (out / "pulse.csv").exists()
    assert json.loads((out / "manifest.json").read_text())["status"] == "not_converged"
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["exit_code"] == 4


@pytest.mark.parametrize("cfg", [{"command": "select", "pulse": {"family": "bogus"}},
                                 {"command": "select", "pulse": {"family": "sin"}},
                                 {"command": "select", "pulse": {"family": "sin", "T_us": -1}},
                                 {"command": "fidelity", "spectrum": {"file": "missing.csv"}},
                                 {"pulse": {"family": "sin", "T_us": 1}},
                                 {"command": "select", "pulse": {"family": "sin", "T_us": 1}, "extra": 1}])
def test_config_errors(tmp_path, capsys, cfg):
    code, _ = _run(tmp_path, cfg)
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["exit_code"] == 2 and err["message"]


def test_missing_config_file(tmp_path, capsys):
    assert cli.main(["select", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]) == 2


def test_unknown_figure(tmp_path):
    assert cli.main(["--figure", "7", "--out", str(tmp_path / "o")]) == 2


def test_accuracy_error_exit_code(tmp_path, monkeypatch, capsys):
    def boom(job):
        raise AccuracyError("quadrature did not converge", {"panels": 1})

    monkeypatch.setitem(cli.HANDLERS, "select", boom)
    code, _ = _run(tmp_path, {"command": "select", "pulse": {"family": "sin", "T_us": 1}})
    assert code == 3
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["diagnostics"] == {"panels": 1}


def test_manifest_contents(tmp_path):
    cfg = {"command": "select", "pulse": {"family": "square", "T_us": 2, "n_cells": 256},
           "grid": {"detuning_points": 101}}
    code, out = _run(tmp_path, cfg)
    man = json.loads((out / "manifest.json").read_text())
    assert code == 0
    assert man["tool"] == "spinmem" and man["version"]
    assert len(man["config_sha256"]) == 64
    assert man["unit_conversions"]["pulse.T_us"]
    for name, digest in man["artifacts"].items():
        assert sha256_file(out / name) == digest


def test_mhz_conversion_recorded(tmp_path):
    cfg = {"command": "fidelity", "grid": {"tau_max_us": 0.5, "tau_points": 11},
           "spectrum": {"components": [{"type": "gaussian", "center_MHz": 0, "sigma_MHz": 1, "weight": 1}]}}
    code, out = _run(tmp_path, cfg)
    man = json.loads((out / "manifest.json").read_text())
    assert any("2 pi" in v for v in man["unit_conversions"].values())


def test_determinism(tmp_path):
    cfg = {"command": "select", "pulse": {"family": "sinc", "T_us": 1, "n_cells": 512}}
    _, a = _run(tmp_path, cfg, "a")
    _, b = _run(tmp_path, cfg, "b")
    for name in ("pulse.csv", "selection.csv", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


@pytest.mark.parametrize("fig", [2, 4])
def test_figures(tmp_path, fig):
    assert cli.main(["--figure", str(fig), "--out", str(tmp_path / "f")]) == 0
    man = json.loads((tmp_path / "f" / "manifest.json").read_text())
    assert man["command"] == "figure" and man["artifacts"]


@pytest.mark.slow
def test_scenario_paper_defaults(tmp_path):
    assert cli.main(["scenario", "--paper-defaults", "--out", str(tmp_path / "s")]) == 0
    rep = json.loads((tmp_path / "s" / "report.json").read_text())
    summary = rep.get("summary", rep)
    assert 0.038 <= summary["tau_tr_us"] <= 0.041
    assert summary["storage_time_us"]["sin"] == pytest.approx(50, rel=0.15)
