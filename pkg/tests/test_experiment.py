import csv
import json
import re

import numpy as np
import pytest

from weylkato.experiment import (CSV_HEADER, ExperimentConfig, ExperimentError, fit_remainder_exponent,
                                 fmt, load_config, run_experiment, window_average)

SMALL = {"geometry.lambda_basis": 400.0, "tgrid.t_min": 20.0, "tgrid.n": 20,
         "tgrid.samples_per_window": 40, "output.formats": ["csv", "json", "svg"]}


def small(**kw):
    v = dict(SMALL)
    v.update(kw)
    return ExperimentConfig(v)


def test_fit_recovers_power_laws():
    t = np.geomspace(10, 1e4, 30)
    assert fit_remainder_exponent(t, 5 * t).slope == pytest.approx(1.0, abs=1e-12)
    f = fit_remainder_exponent(t, -2 * t**1.25)
    assert f.slope == pytest.approx(1.25, abs=1e-12) and f.r2 == pytest.approx(1.0)
    # window averaging leaves a pure power law's exponent intact
    td = np.geomspace(10, 1e4, 3000)
    assert fit_remainder_exponent(td, 2 * td**1.25, window=1.2).slope == pytest.approx(1.25, abs=1e-3)


def test_fit_degenerate_inputs():
    t = np.geomspace(10, 100, 20)
    with pytest.raises(ValueError):
        fit_remainder_exponent(t, np.zeros_like(t))
    with pytest.raises(ValueError):
        fit_remainder_exponent(t[:5], t[:5])
    with pytest.raises(ValueError):
        fit_remainder_exponent(t, t[:-1])


def test_window_average():
    t = np.linspace(1, 10, 901)
    mids, means = window_average(t, -np.ones_like(t), factor=2.0)
    assert np.all(means == 1.0) and mids[0] == pytest.approx(1.5)
    _, signed = window_average(t, -np.ones_like(t), factor=2.0, signed=True)
    assert np.all(signed == -1.0)


def test_fmt():
    assert fmt(3) == "3" and fmt(np.int64(19)) == "19"
    assert fmt(1 / 3) == "0.3333333333"


def test_config_rejects_unknown_keys_and_schema(tmp_path):
    with pytest.raises(ValueError, match="unknown"):
        ExperimentConfig({"geometry.shape": "ball"})
    with pytest.raises(ValueError, match="schema"):
        ExperimentConfig({"schema": 2})
    with pytest.raises(ValueError):
        ExperimentConfig({"geometry.kind": "sphere"})
    p = tmp_path / "c.toml"
    p.write_text('schema = 1\n[geometry]\nlambda_basis = 300\n[potential]\ngamma = 0.5\n')
    cfg = load_config(p)
    assert cfg["geometry.lambda_basis"] == 300 and cfg.potential.gamma == 0.5
    p.write_text('schema = 1\n[geometry]\nlambda = 300\n')
    with pytest.raises(ValueError, match="unknown"):
        load_config(p)


def test_epsilon_defaults_to_r_cut():
    assert small(**{"potential.r_cut": 0.3}).correction_params.epsilon == 0.3


def test_free_torus_report(tmp_path):
    res = run_experiment(small(), tmp_path / "out")
    assert res.exit_code == 0
    s = res.summary
    assert s["correction"] == {"active": False}
    assert s["spectral"]["kind"] == "torus" and s["spectral"]["t_range"] == [20.0, 100.0]
    with open(res.paths["csv"], newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == CSV_HEADER and len(rows) == 21
    # V = 0: no correction, so both Weyl columns agree
    assert all(r[3] == r[4] for r in rows[1:])
    assert sorted(p.name for p in (tmp_path / "out").iterdir()) == ["plot.svg", "report.csv", "summary.json"]


def test_summary_is_deterministic(tmp_path):
    a = run_experiment(small(**{"potential.gamma": 1.0}), tmp_path / "a")
    b = run_experiment(small(**{"potential.gamma": 1.0}), tmp_path / "b")
    ja = json.loads((tmp_path / "a" / "summary.json").read_text())
    jb = json.loads((tmp_path / "b" / "summary.json").read_text())
    assert not ja["metadata"]["cache_hit"] and jb["metadata"]["cache_hit"]
    ja.pop("metadata"), jb.pop("metadata")
    assert ja == jb
    assert (tmp_path / "a" / "report.csv").read_bytes() == (tmp_path / "b" / "report.csv").read_bytes()
    assert a.exit_code == b.exit_code == 0


def test_singular_and_free_summaries_share_layout(tmp_path):
    free = run_experiment(small(), tmp_path / "f").summary
    sing = run_experiment(small(**{"potential.gamma": 1.0}), tmp_path / "s").summary
    assert set(free) == set(sing)
    assert set(free["spectral"]) == set(sing["spectral"])
    assert free["spectral"]["n_basis"] == sing["spectral"]["n_basis"]
    assert sing["correction"]["active"]
    assert sing["correction"]["predicted_exponent"] == 1.25
    assert sing["correction"]["predicted_coefficient"] == pytest.approx(-0.5 * 0.14367, rel=1e-4)


def test_svg_numbers_come_from_the_csv(tmp_path):
    run_experiment(small(**{"potential.gamma": 1.0}), tmp_path)
    svg = (tmp_path / "plot.svg").read_text()
    cells = set((tmp_path / "report.csv").read_text().replace("\n", ",").split(","))
    quoted = re.findall(r"(?:t|N|resid_N) = (-?[0-9.e+-]+)", svg)
    assert len(quoted) == 3 and all(q in cells for q in quoted)
    # no timestamp or random ids: a rerun gives the same bytes
    run_experiment(small(**{"potential.gamma": 1.0}), tmp_path / "again")
    assert (tmp_path / "again" / "plot.svg").read_text() == svg


def test_failed_acceptance_exits_2(tmp_path):
    res = run_experiment(small(**{"acceptance.max_exponent_N": 0.0}), tmp_path)
    assert res.exit_code == 2
    assert res.summary["acceptance"]["exponent_N"]["passed"] is False


def test_t_grid_outside_trust_region(tmp_path):
    with pytest.raises(ExperimentError, match="t_trust"):
        run_experiment(small(**{"tgrid.t_max": 500.0}), tmp_path)


def test_module_errors_carry_provenance(tmp_path):
    # epsilon above r_cut fails inside the correction stage
    cfg = small(**{"potential.gamma": 1.0, "correction.epsilon": 0.45,
                   "correction.max_n": 2, "correction.mc_samples": 10_000})
    with pytest.raises(ExperimentError, match=r"^\[correction\]"):
        run_experiment(cfg, tmp_path)


def test_no_temporary_files_left(tmp_path):
    run_experiment(small(), tmp_path)
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".")]


def test_cube_report_notes_log_factor(tmp_path):
    cfg = ExperimentConfig({"geometry.kind": "cube", "geometry.m_max": 8, "potential.gamma": 1.0,
                            "potential.r_cut": 0.2, "tgrid.n": 16, "tgrid.samples_per_window": 40})
    res = run_experiment(cfg, tmp_path)
    assert "log" in res.summary["spectral"]["note"]
    assert res.summary["spectral"]["basis_tail"] is False


def test_free_torus_leading_ratio_and_sharp_law(tmp_path):
    # lattice fluctuations of N(t) / Weyl exceed 3% at small bases; 3600 gives t_trust = 900
    cfg = ExperimentConfig({"geometry.lambda_basis": 3600.0, "acceptance.leading_ratio_tol": 0.03,
                            "acceptance.max_exponent_N": 1.1, "output.formats": ["json"]})
    res = run_experiment(cfg, tmp_path)
    s = res.summary["spectral"]
    assert s["t_range"] == [90.0, 900.0]
    assert abs(s["weyl_leading_ratio"] - 1) <= 0.03
    assert s["fits"]["N"]["slope"] <= 1.1
    assert res.exit_code == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["summary.json"]


@pytest.mark.parametrize("name", ["free_torus", "singular_torus", "cube"])
def test_shipped_configs_load(name):
    from pathlib import Path
    cfg = load_config(Path(__file__).parent.parent / "configs" / f"{name}.toml")
    assert cfg["schema"] == 1
