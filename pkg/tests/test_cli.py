import csv
import json
import math

import numpy as np
import pytest

from itoscint import cli
from itoscint.asymptotics import f_T, scint_T_limit
from itoscint.propagator import default_step

MC_HEADER = ["probe_r", "probe_x", "probe_t", "stat_name", "mc_mean", "mc_stderr", "asymptotic", "z_score",
             "n_realizations"]
CURVE_HEADER = ["abscissa", "s_T", "chi_ratio", "mean_intensity", "beta_case", "theta", "tau_over_T", "d",
                "sigma_m2", "r0", "rw", "k0"]


def write(tmp_path, data, name="c.json"):
    path = tmp_path / name
    path.write_text(json.dumps({"schema_version": cli.SCHEMA_VERSION, **data}))
    return str(path)


def read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_minimal_config_defaults(tmp_path):
    cfg = cli.parse_config(write(tmp_path, {}))
    rule = default_step(cfg.scaling, cfg.grid, cfg.medium)
    assert cfg.plan.n_steps == math.ceil(cfg.plan.z_final / rule)
    assert cfg.source.bessel_modes == 256
    cfg = cli.config_from_dict({"schema_version": cli.SCHEMA_VERSION, "monte_carlo": {"detector_T": 2.0}})
    assert cfg.experiment.time_step == pytest.approx(cfg.source.tau_s / 4)


def test_theta_out_of_range(tmp_path):
    with pytest.raises(cli.ConfigError, match=r"theta must lie in \(0,1\]"):
        cli.parse_config(write(tmp_path, {"source": {"theta": 1.5}}))


def test_diffusive_epsilon(tmp_path):
    with pytest.raises(cli.ConfigError, match=r"exp\(-e\)"):
        cli.parse_config(write(tmp_path, {"scaling": {"regime": "diffusive", "epsilon": 0.1}}))


@pytest.mark.parametrize("data, key", [
    ({"colour": 1}, "colour"),
    ({"source": {"width": 1}}, "source.width"),
    ({"monte_carlo": {"probes": [{"r": 0, "y": 1}]}}, "probes[0].y"),
    ({"sweep": {"parameter": "source.nothing", "values": [1]}}, "source.nothing"),
])
def test_unknown_keys_named(tmp_path, data, key):
    with pytest.raises(cli.ConfigError, match=key.replace("[", r"\[").replace("]", r"\]")):
        cli.parse_config(write(tmp_path, data))


def test_schema_version_required(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{}")
    with pytest.raises(cli.ConfigError, match="schema_version"):
        cli.parse_config(str(path))


def test_sweep_expands(tmp_path):
    cfg = cli.parse_config(write(tmp_path, {"sweep": {"parameter": "source.theta", "values": [0.1, 0.2, 0.4]}}))
    assert [c.source.theta for c in cli.sweep_configs(cfg)] == [0.1, 0.2, 0.4]


def test_analytic_theta_to_zero_is_flat(tmp_path):
    out = tmp_path / "a.csv"
    cfg = write(tmp_path, {"analytic": {"beta_case": "beta_eq_1_theta_to_0", "detector_T": 2.0}})
    assert cli.main(["analytic", "--config", cfg, "--out", str(out)]) == 0
    rows = read(out)
    assert rows[0] == CURVE_HEADER
    assert {float(r[1]) for r in rows[1:]} == {f_T(1.0, 2.0, method="closed")}


def test_analytic_beta_gt_1_is_flat(tmp_path):
    out = tmp_path / "a.csv"
    cfg = write(tmp_path, {"analytic": {"beta_case": "beta_gt_1", "detector_T": 0.5}})
    assert cli.main(["analytic", "--config", cfg, "--out", str(out)]) == 0
    assert {float(r[1]) for r in read(out)[1:]} == {1 + 2 * f_T(1.0, 0.5, method="closed")}


def test_analytic_curve_saturates(tmp_path):
    out = tmp_path / "a.csv"
    cfg = write(tmp_path, {"dim": 2, "source": {"theta": 0.3}, "analytic": {"detector_T": 0.7}})
    plot = tmp_path / "a.png"
    parsed = cli.parse_config(cfg)
    cli.cmd_analytic(parsed, str(out), str(plot))
    rows = read(out)
    assert float(rows[-1][0]) >= 1e4 * 3
    assert float(rows[-1][1]) == pytest.approx(scint_T_limit(parsed.source, 0.7), abs=1e-3)
    assert plot.stat().st_size > 0
    # every row carries the full parameter record with 17 significant digits
    assert all(len(r) == len(CURVE_HEADER) for r in rows[1:])
    assert float(rows[1][0]) == pytest.approx(0.01, rel=1e-12)
    assert all(len(v) >= 16 for v in rows[1][1:3])


def test_mc_seed_repeat_is_byte_stable(tmp_path):
    data = {"source": {"coherence_kind": "fully_coherent"}, "propagation": {"z_final": 0.5, "n_steps": 10},
            "scaling": {"k0": 2.0},
            "monte_carlo": {"n_realizations": 20, "probes": [{"r": 0, "x": 0}, {"r": 0, "x": 1}],
                            "statistics": ["mean_field", "intensity", "coherence"]}}
    cfg = write(tmp_path, data)
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    assert cli.main(["mc", "--config", cfg, "--out", str(a), "--seed", "5"]) in (0, 3)
    cli.main(["mc", "--config", cfg, "--out", str(b), "--seed", "5", "--threads", "2"])
    assert a.read_bytes() == b.read_bytes()
    cli.main(["mc", "--config", cfg, "--out", str(c), "--seed", "6"])
    assert a.read_bytes() != c.read_bytes()
    rows = read(a)
    assert rows[0] == MC_HEADER
    assert rows[1][3] == "mean_field_re" and rows[1][8] == "20"


def test_mc_two_dimensional_probes(tmp_path):
    data = {"dim": 2, "grid": {"n_per_axis": 128, "dx": 0.5}, "scaling": {"epsilon": 0.2},
            "propagation": {"z_final": 0.2, "n_steps": 4},
            "monte_carlo": {"n_realizations": 4, "probes": [{"r": 0, "x": 0}, {"r": [0, 0], "x": [1, 0]}],
                            "statistics": ["intensity"]}}
    out = tmp_path / "m.csv"
    assert cli.main(["mc", "--config", write(tmp_path, data), "--out", str(out)]) in (0, 3)
    assert read(out)[2][1] == "1 0"


def test_missing_output_fails_first(tmp_path, capsys):
    # an impossible budget would take hours; the error must come first
    cfg = write(tmp_path, {"monte_carlo": {"n_realizations": 10 ** 9}})
    assert cli.main(["mc", "--config", cfg]) == cli.EXIT_CONFIG
    assert "output path" in capsys.readouterr().err


def test_exit_codes(tmp_path):
    assert cli.main(["analytic", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path / "x.csv")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["analytic", "--config", str(bad), "--out", str(tmp_path / "x.csv")]) == 1


def test_validate_reports_and_fails_under_zero_tolerance(tmp_path, capsys):
    assert cli.main(["validate", "--criteria", "1,9"]) == 0
    out = capsys.readouterr().out
    assert "[PASS] criterion 1" in out and "[PASS] criterion 9" in out
    assert cli.main(["validate", "--criteria", "1", "--tolerance-scale", "0"]) == 3
    assert "[FAIL] criterion 1" in capsys.readouterr().out


@pytest.mark.parametrize("preset", ["theta", "tau", "contour"])
def test_figure_presets(tmp_path, preset):
    out = tmp_path / f"{preset}.png"
    assert cli.main(["figure", "--preset", preset, "--out", str(out)]) == 0
    assert out.stat().st_size > 0
    table = out.with_suffix(".csv")
    assert table.exists()
    assert b"shape reproduction" in out.read_bytes()
