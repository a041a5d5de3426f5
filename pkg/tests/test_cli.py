import csv
import json

import numpy as np
import pytest

from fracdn import acceptance, dnmap
from fracdn.cli import PRESETS, ConfigError, RunConfig, load_config, main
from fracdn.mlf import ml


@pytest.fixture(autouse=True)
def outdir(tmp_path, monkeypatch):
    monkeypatch.setenv("FRACDN_OUTPUT_DIR", str(tmp_path / "out"))
    return tmp_path / "out"


def write_cfg(path, **over):
    d = {
        "problem": {
            "grid": {"extents": [1.0], "n_cells": [64]},
            "coefficients": {"V": 1.0},
            "alpha": 0.6,
            "T0": 0.5,
            "s_in": {"segments": ["left"], "label": "in"},
            "s_out": {"segments": ["right"], "label": "out"},
            "input": {"width": 0.3},
        },
        "solver": {"modes": 32, "steps": 200},
    }
    d["problem"].update(over)
    path.write_text(json.dumps(d))
    return path


def test_ml_eval_single(capsys):
    assert main(["ml", "eval", "--alpha", "0.5", "--beta", "1", "--re", "-2", "--im", "0.5"]) == 0
    re, im, method, err = capsys.readouterr().out.split()
    ref = ml(0.5, 1.0, np.array([-2 + 0.5j]))[0]
    assert complex(float(re), float(im)) == pytest.approx(ref, abs=1e-14)
    assert method in ("series", "asymptotic", "contour")
    assert float(err) >= 0


def test_ml_eval_csv(tmp_path):
    src = tmp_path / "z.csv"
    src.write_text("re,im,alpha,beta\n0.5,0,0.5,1\n-30,1,0.8,0.8\n5,5,1.2,2\n")
    out = tmp_path / "e.csv"
    assert main(["ml", "eval", "--csv", str(src), "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert list(rows[0]) == ["alpha", "beta", "re_z", "im_z", "re_E", "im_E", "method", "error_estimate"]
    assert len(rows) == 3
    for r in rows:
        z = complex(float(r["re_z"]), float(r["im_z"]))
        v = ml(float(r["alpha"]), float(r["beta"]), np.array([z]))[0]
        assert complex(float(r["re_E"]), float(r["im_E"])) == pytest.approx(v, rel=1e-13, abs=1e-15)
        assert r["method"] in ("series", "asymptotic", "contour")


def test_ml_eval_requires_parameters():
    assert main(["ml", "eval", "--re", "1"]) == 2


def test_forward_solve(tmp_path, outdir, capsys):
    cfg = write_cfg(tmp_path / "c.json")
    assert main(["forward", "solve", "--config", str(cfg)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["task"] == "forward" and rep["passed"]
    assert (outdir / "traj.json").exists() and (outdir / "traj.csv").exists()


def test_dn_compute_spectral_and_oracle_agree(tmp_path):
    cfg = write_cfg(tmp_path / "c.json")
    assert main(["dn", "compute", "--config", str(cfg), "--out", str(tmp_path / "a.json")]) == 0
    assert main(["dn", "compute", "--config", str(cfg), "--oracle", "--out", str(tmp_path / "b.json")]) == 0
    a = np.array(json.loads((tmp_path / "a.json").read_text())["flux"])
    b = np.array(json.loads((tmp_path / "b.json").read_text())["flux"])
    assert dnmap.relative_discrepancy(a, b) <= 2e-2


def test_sector_then_invert(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.json", analytic=True, s_in={"segments": ["left", "right"]},
                    s_out={"segments": ["left", "right"]})
    sector = tmp_path / "f.csv"
    assert main(["dn", "sector", "--config", str(cfg), "--out", str(sector)]) == 0
    assert sector.with_suffix(".json").exists()
    capsys.readouterr()
    assert main(["invert", "recover", "--sector", str(sector.with_suffix(".json")), "--modes", "6",
                 "--out", str(tmp_path / "bsd_hat.json")]) == 0
    lam = [float(v) for v in json.loads(capsys.readouterr().out)["eigenvalues"]]
    assert np.allclose(lam, (np.pi * np.arange(1, 7)) ** 2, rtol=1e-8)


def test_spectral_bsd(tmp_path):
    cfg = write_cfg(tmp_path / "c.json")
    out = tmp_path / "bsd.json"
    assert main(["spectral", "bsd", "--config", str(cfg), "--modes", "10", "--out", str(out)]) == 0
    d = json.loads(out.read_text())
    assert len(d["eigenvalues"]) == 10


def test_gauge_check(tmp_path, capsys):
    cfg = tmp_path / "g.json"
    cfg.write_text(json.dumps({
        "problem": {
            "grid": {"extents": [1.0], "n_cells": [256]},
            "coefficients": {"V": 20.0},
            "alpha": 0.5,
            "T0": 0.5,
            "s_in": {"segments": ["left"]},
            "s_out": {"segments": ["right"]},
            "gauge": {"radius": 0.3, "amplitude": 0.2},
        },
        "solver": {"tolerances": {"gauge": 1e-4}},
    }))
    code = main(["gauge", "check", "--config", str(cfg)])
    rep = json.loads(capsys.readouterr().out)
    assert code == 0 and rep["passed"]
    assert rep["discrepancy"] <= 1e-4 < rep["control_discrepancy"]


def test_hassell_tao_analytic(capsys):
    assert main(["diag", "hassell-tao", "--bsd", "analytic:20", "--patch", "left"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["flagged"] == []
    assert len(out["ratios"]) == 20


def test_reproduce_subset_and_determinism(outdir, capsys):
    assert main(["reproduce", "--only", "1,5"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2 and all(ln.startswith("[PASS]") for ln in lines)
    first = (outdir / "acceptance_metrics.csv").read_text()
    rep = json.loads((outdir / "acceptance_report.json").read_text())
    assert rep["passed"] and len(rep["criteria"]) == 2
    assert main(["reproduce", "--only", "1,5"]) == 0
    assert (outdir / "acceptance_metrics.csv").read_text() == first


@pytest.mark.parametrize("alpha", [1.0, 0.0, 2.0, -0.3, "x"])
def test_invalid_alpha_exits_2(tmp_path, alpha, capsys):
    cfg = write_cfg(tmp_path / "c.json", alpha=alpha)
    assert main(["forward", "solve", "--config", str(cfg)]) == 2
    assert "problem.alpha" in capsys.readouterr().err


def test_missing_preset_exits_2(tmp_path, capsys):
    assert main(["reproduce", "--only", "1", "--config-dir", str(tmp_path)]) == 2
    assert "missing preset" in capsys.readouterr().err


def test_bad_json_and_unknown_keys(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError, match="<file>"):
        load_config(p)
    with pytest.raises(ConfigError, match="unknown keys"):
        RunConfig.from_dict({"problem": {}, "extra": 1})
    with pytest.raises(ConfigError, match="problem.T0"):
        RunConfig.from_dict({"problem": {"alpha": 0.5, "grid": {"extents": [1], "n_cells": [8]}, "T0": 2, "T": 1}})


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_config_round_trip(tmp_path, name):
    cfg = load_config(name)
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg.to_dict()))
    again = load_config(p)
    assert again.to_dict() == cfg.to_dict()
    assert again.hash() == cfg.hash()


def test_flipped_dn_sign_fails_criterion_4(monkeypatch):
    # mutation check: the acceptance run must notice a wrong flux sign
    monkeypatch.setattr(dnmap, "DN_SIGN", 1)
    r = acceptance.run_criterion(4)
    assert not r.passed
    assert r.metrics["sigma_consistent"] is False
