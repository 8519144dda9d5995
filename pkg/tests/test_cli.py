import csv
import json

import pytest

from ammkit.cli import main, read_config
from ammkit.errors import ConfigError

QUOTE = ["lp-quote", "--pi", "0.02", "--sigma", "0.02", "--gamma-c", "5e-7", "--mu", "0"]


def _json(path):
    with open(path) as fh:
        return json.load(fh)


def test_lp_quote_json(tmp_path):
    out = tmp_path / "q.json"
    assert main(QUOTE + ["--out", str(out)]) == 0
    doc = _json(out)
    assert doc["delta"] == pytest.approx(4 * 5e-7 / (0.16 - 0.0004), rel=1e-12)
    assert doc["delta"] == pytest.approx(1.2531e-5, rel=1e-4)
    assert doc["delta_L"] == doc["delta_U"] == pytest.approx(doc["delta"] / 2)
    text = out.read_text()
    assert list(json.loads(text)) == sorted(json.loads(text))


def test_lp_quote_prints_to_stdout(capsys):
    assert main(QUOTE) == 0
    assert json.loads(capsys.readouterr().out)["status"] == "ok"


def test_bad_flags_and_bad_values_exit_2(capsys):
    assert main(["lp-quote", "--bogus", "1"]) == 2
    assert main(["lp-quote", "--sigma", "0.02"]) == 2
    assert main(["lp-quote", "--pi", "-1", "--sigma", "0.02"]) == 2
    assert main(["solve-hjb", "--grid", "8x8"]) == 2
    assert main(["nonsense"]) == 2
    capsys.readouterr()


def test_missing_input_exits_3(tmp_path, capsys):
    assert main(["estimate", "--input", str(tmp_path / "nope.csv")]) == 3
    assert main(["backtest", "--events", str(tmp_path / "nope.csv")]) == 3
    empty = tmp_path / "empty.csv"
    empty.write_text("t,S,Z\n")
    assert main(["spillover", "--input", str(empty)]) == 3
    assert "data error" in capsys.readouterr().err


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# quote settings\npi = 0.02\nsigma = 0.02\ngamma-c = 5e-7\n")
    out = tmp_path / "q.json"
    assert main(["lp-quote", "--config", str(cfg), "--out", str(out)]) == 0
    assert _json(out)["delta"] == pytest.approx(1.2531e-5, rel=1e-4)
    assert main(["lp-quote", "--config", str(cfg), "--gamma-c", "1e-6", "--out", str(out)]) == 0
    assert _json(out)["delta"] == pytest.approx(2 * 1.2531e-5, rel=1e-4)


def test_config_parser(tmp_path):
    good = tmp_path / "a.cfg"
    good.write_text("a-b = 1  # trailing\n\nc=x\n")
    assert read_config(good) == {"a_b": "1", "c": "x"}
    bad = tmp_path / "b.cfg"
    bad.write_text("just words\n")
    with pytest.raises(ConfigError):
        read_config(bad)
    assert main(["lp-quote", "--config", str(bad)]) == 2
    assert main(["lp-quote", "--config", str(tmp_path / "missing.cfg")]) in (2, 3)


def test_simulate_then_estimate(tmp_path):
    path = tmp_path / "sim.csv"
    assert main(["simulate", "--steps", "3000", "--seed", "4", "--out", str(path)]) == 0
    rows = list(csv.reader(open(path)))
    assert rows[0][0] == "t" and len(rows) == 3002
    fit = tmp_path / "fit.json"
    assert main(["estimate", "--input", str(path), "--out", str(fit)]) == 0
    assert _json(fit)["sigma"] == pytest.approx(0.045, rel=0.1)


def test_seed_controls_simulation(tmp_path):
    a, b, c = (tmp_path / n for n in ("a", "b", "c"))
    for path, seed in ((a, 1), (b, 1), (c, 2)):
        assert main(["simulate", "--steps", "50", "--seed", str(seed), "--out", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes() != c.read_bytes()


def test_solve_hjb_writes_the_grid(tmp_path):
    out, grid = tmp_path / "s.json", tmp_path / "g.csv"
    assert main(["solve-hjb", "--model", "2", "--grid", "64x3x3", "--csv", str(grid), "--out", str(out)]) == 0
    rows = list(csv.reader(open(grid)))
    assert rows[0] == ["t", "u", "v", "theta0", "theta1", "theta2"]
    assert len(rows) == 1 + 64 * 9
