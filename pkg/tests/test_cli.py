import csv
import io
import json

import pytest

from smvlc import cli
from smvlc.cabm import build_plan
from smvlc.capacity import mi_high_snr_limit
from smvlc.link import NoiseModel, reference_gains

SIX_LED_GAINS = [0.08, 0.15, 0.13, 0.25, 0.01, 0.22]


def _write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg) if isinstance(cfg, dict) else cfg)
    return str(path)


def _rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_default_configs_validate_and_roundtrip():
    for kind in cli.KINDS:
        d = cli.default_config(kind)
        assert cli.validate(d) == []
        cfg = cli.parse_config(d)
        again = cli.parse_config(cfg.to_json())
        assert again == cfg
        assert again.to_json() == cfg.to_json()


def test_table_defaults_fill_missing_fields():
    cfg = cli.parse_config({"kind": "mi-sweep", "bits": 4, "scenario": {"num_leds": 3},
                            "sweep": {"start": 0, "stop": 10, "points": 3}})
    assert cfg.sigma_sq_dbm == -104.0
    assert cfg.scenario.pd_area_cm2 == 1.0
    assert cfg.scenario.semi_angle_deg == 35.0 and cfg.scenario.fov_deg == 72.0
    assert cfg.scenario.room_dims_m == (5.0, 4.0, 3.0)
    assert cfg.scenario.pd_position_m[2] == 0.8
    assert cfg.sweep.variable == "snr_db"


def test_missing_noise_floor_is_one_diagnostic():
    d = cli.default_config("mi-sweep")
    d["noise"] = {"varsigma": 0.0}
    diags = cli.validate(d)
    assert len(diags) == 1 and "sigma_sq_dbm" in diags[0]


def test_single_led_only_for_plane_sweeps():
    d = cli.default_config("ber-sweep", num_leds=1)
    diags = cli.validate(d)
    assert len(diags) == 1 and "ber-plane" in diags[0]
    assert cli.validate(cli.default_config("ber-plane", num_leds=1, bits=2)) == []


def test_infeasible_bits_names_q_constraint():
    diags = cli.validate(cli.default_config("mi-sweep", num_leds=5, bits=2))
    assert any("q" in d and ">= 1" in d for d in diags)


def test_diagnostics_for_bad_input():
    assert "line 2" in cli.validate('{"kind": "mi-sweep",\n "bits": }')[0]
    assert cli.validate({"kind": "nope"})[0].startswith("kind")
    d = cli.default_config("mi-sweep")
    d["sweep"]["points"] = 0
    d["colour"] = "blue"
    diags = cli.validate(d)
    assert any(x.startswith("sweep.points") for x in diags)
    assert any(x.startswith("colour") for x in diags)
    d = cli.default_config("ber-plane")
    del d["pt_dbm"]
    assert any(x.startswith("pt_dbm") for x in cli.validate(d))
    d = cli.default_config("mi-sweep")
    del d["sweep"]
    assert cli.validate(d) == ["sweep: missing; kind 'mi-sweep' sweeps 'snr_db'"]


def test_mi_sweep_reaches_high_snr_constant(tmp_path):
    cfg = {"kind": "mi-sweep", "bits": 5, "scenario": {"num_leds": 5, "pd_position_m": [0.8, 2.5, 0.8]},
           "noise": {"sigma_sq_dbm": -104}, "sweep": {"start": -10, "stop": 50, "points": 61}}
    text = cli.run(cli.parse_config(cfg))
    rows = _rows(text)
    assert rows[0] == ["snr_db", "mi_exact", "mi_lower", "mi_hi_limit", "mi_lo_limit"]
    assert len(rows) == 62
    parsed = cli.parse_config(cfg)
    gains = reference_gains(parsed.scenario.channel(), NoiseModel.from_dbm(-104))
    limit = mi_high_snr_limit(build_plan(gains, 5))
    assert abs(float(rows[-1][1]) - limit) < 0.02
    assert all(len(r) == 5 for r in rows)


def test_ber_sweep_adaptive_beats_fixed_on_six_led_gains():
    cfg = cli.parse_config({"kind": "ber-sweep", "bits": 4, "scenario": {"gains": SIX_LED_GAINS},
                            "sweep": {"start": -16, "stop": -12, "points": 2}, "n_bits": 200_000,
                            "max_errors": None})
    rows = _rows(cli.run(cfg))
    assert rows[0] == ["pt_dbm", "ber_adaptive", "ber_fixed", "ci_adaptive", "ci_fixed"]
    top = [float(x) for x in rows[-1]]
    assert top[1] + top[3] < top[2] - top[4]


def test_numbers_use_nine_significant_digits():
    assert cli._fmt(1 / 3) == "0.333333333"
    assert cli._fmt(-10.0) == "-10"
    assert cli._fmt(1.23456789012e-7) == "1.23456789e-07"


def test_run_is_byte_identical(tmp_path):
    cfg = cli.default_config("ber-sweep", num_leds=3, bits=4)
    cfg["scenario"]["pd_position_m"] = [3.2, 0.7, 0.8]
    cfg["sweep"] = {"start": 30, "stop": 36, "points": 3}
    cfg["n_bits"] = 40_000
    path = _write(tmp_path, cfg)
    out = [tmp_path / f"o{k}.csv" for k in range(4)]
    assert cli.main(["run", path, "--out", str(out[0])]) == 0
    assert cli.main(["run", path, "--out", str(out[1])]) == 0
    assert cli.main(["run", path, "--out", str(out[2]), "--threads", "3"]) == 0
    assert cli.main(["run", path, "--out", str(out[3]), "--seed", "99"]) == 0
    assert out[0].read_bytes() == out[1].read_bytes() == out[2].read_bytes()
    assert out[0].read_bytes() != out[3].read_bytes()


def test_precode_compare_header():
    cfg = cli.default_config("precode-compare", num_leds=3, bits=3)
    cfg["scenario"]["pd_position_m"] = [3.2, 0.7, 0.8]
    cfg["sweep"] = {"start": 0, "stop": 20, "points": 3}
    cfg["solver"] = {"restarts": 1}
    rows = _rows(cli.run(cli.parse_config(cfg)))
    assert rows[0][-1] == "mi_lower_precoded"
    assert len(rows) == 4


def test_plane_and_varsigma_kinds():
    plane = cli.default_config("ber-plane", num_leds=1, bits=2)
    plane["sweep"] = {"variable": "pd_grid", "x_m": [1.5, 2.5, 2], "y_m": [2.0, 2.0, 1]}
    plane["n_bits"] = 20_000
    plane["pt_dbm"] = 25.0
    rows = _rows(cli.run(cli.parse_config(plane)))
    assert rows[0] == ["x_m", "y_m", "ber", "ci"] and len(rows) == 3
    assert float(rows[2][2]) < float(rows[1][2])
    vs = cli.default_config("mi-vs-varsigma", num_leds=3, bits=3)
    vs["scenario"]["pd_position_m"] = [3.2, 0.7, 0.8]
    vs["sweep"] = {"start": 0, "stop": 100, "points": 3}
    rows = _rows(cli.run(cli.parse_config(vs)))
    mi = [float(r[1]) for r in rows[1:]]
    assert mi[0] >= mi[1] >= mi[2]


def test_exit_codes(tmp_path, capsys, monkeypatch):
    good = _write(tmp_path, cli.default_config("mi-sweep"))
    assert cli.main(["validate", good]) == 0
    bad = _write(tmp_path, {"kind": "mi-sweep"}, "bad.json")
    assert cli.main(["validate", bad]) == 1
    assert "bits" in capsys.readouterr().err
    assert cli.main(["run", bad]) == 1
    assert cli.main(["run", str(tmp_path / "missing.json")]) == 1

    def boom(cfg, threads=1):
        raise RuntimeError("solver blew up")

    monkeypatch.setattr(cli, "run", boom)
    assert cli.main(["run", good]) == 2
    assert "solver blew up" in capsys.readouterr().err


def test_stdout_when_no_output(tmp_path, capsys):
    cfg = cli.default_config("mi-sweep", num_leds=2, bits=2)
    cfg["sweep"] = {"start": 0, "stop": 10, "points": 2}
    assert cli.main(["run", _write(tmp_path, cfg)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("snr_db,") and len(out.strip().splitlines()) == 3
