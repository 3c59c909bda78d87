import csv
import json

import numpy as np
import pytest

from interacting_bs import __version__
from interacting_bs.cli import main

from conftest import REF_FIT

FAST = ["--n-space", "400", "--steps-per-day", "4"]
POWER = json.dumps({"variant": "power_law_rho", "a": REF_FIT[0], "b": REF_FIT[1], "c": REF_FIT[2]})


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture
def power_market(tmp_path):
    out = tmp_path / "synth"
    assert main(["synth", "--bubble", POWER, "--out", str(out), "--seed", "1"] + FAST) == 0
    return out / "market.csv"


@pytest.fixture
def zero_market(tmp_path):
    out = tmp_path / "zero"
    assert main(["synth", "--zero-bubble", "--out", str(out)] + FAST) == 0
    return out / "market.csv"


def test_synth_writes_62_rows(power_market):
    rows = _rows(power_market)
    assert rows[0] == ["date", "underlying", "option"]
    assert len(rows) == 63
    assert float(rows[1][1]) == 1100.0
    meta = json.loads((power_market.parent / "synth.json").read_text())
    assert meta["bubble"]["variant"] == "power_law_rho"
    assert meta["seed"] == 1


def test_invalid_bubble_exits_2(tmp_path, capsys):
    assert main(["synth", "--bubble", '{"variant": "bogus"}', "--out", str(tmp_path)]) == 2
    assert "error:" in capsys.readouterr().err
    assert main(["synth", "--bubble", "{not json", "--out", str(tmp_path)]) == 2
    assert main(["synth", "--out", str(tmp_path)]) == 2


def test_missing_input_exits_2(tmp_path):
    assert main(["calibrate", "--input", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 2
    assert main(["calibrate", "--out", str(tmp_path)]) == 2


def test_malformed_input_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("date,underlying,option\n2007-01-02,1,1\n2007-01-02,1,1\n")
    assert main(["calibrate", "--input", str(bad), "--out", str(tmp_path)]) == 2
    assert "line 3" in capsys.readouterr().err


def test_infeasible_calibration_exits_1(tmp_path):
    bad = tmp_path / "neg.csv"
    bad.write_text("date,underlying,option\n" + "".join(f"2007-01-{d:02d},100,-1\n" for d in range(2, 12)))
    assert main(["calibrate", "--input", str(bad), "--out", str(tmp_path / "o")] + FAST) == 1


def test_zero_bubble_calibration(zero_market, tmp_path):
    out = tmp_path / "cal"
    assert main(["calibrate", "--input", str(zero_market), "--out", str(out)] + FAST) == 0
    doc = json.loads((out / "result.json").read_text())
    fit = doc["result"]["fit"]
    pot = np.array(doc["result"]["potential"])[:, 1]
    assert abs(fit["b"]) < 1e-6 or np.max(np.abs(pot)) < 1e-6
    for name in ("mispricing.csv", "rho.csv", "potential.csv", "bubble.csv",
                 "mispricing.svg", "rho.svg", "potential.svg", "bubble.svg"):
        assert (out / name).stat().st_size > 0


def test_calibrate_artifacts(power_market, tmp_path):
    out = tmp_path / "cal"
    assert main(["calibrate", "--input", str(power_market), "--out", str(out)] + FAST) == 0
    doc = json.loads((out / "result.json").read_text())
    fit = doc["result"]["fit"]
    rows = _rows(out / "rho.csv")
    assert rows[0] == ["day", "empirical", "fitted"]
    t = np.array([float(r[0]) for r in rows[1:]])
    fitted = np.array([float(r[2]) for r in rows[1:]])
    np.testing.assert_allclose(fitted, fit["a"] + fit["b"] * t ** fit["c"], rtol=1e-14)
    for key in ("command", "package_version", "seed", "params", "contract", "grid", "tolerances", "config"):
        assert key in doc
    assert doc["package_version"] == __version__
    assert doc["result"]["chi2_interacting"] < doc["result"]["chi2_bs"]
    pot = _rows(out / "potential.csv")
    assert float(pot[1][1]) == pytest.approx(-REF_FIT[1] * REF_FIT[2], rel=0.1)
    assert (out / "rho.svg").read_text().startswith("<svg")


def test_simulate_from_result(power_market, tmp_path):
    cal = tmp_path / "cal"
    assert main(["calibrate", "--input", str(power_market), "--out", str(cal)] + FAST) == 0
    sim = tmp_path / "sim"
    assert main(["simulate", "--input", str(power_market), "--result", str(cal / "result.json"),
                 "--out", str(sim)] + FAST) == 0
    doc = json.loads((sim / "result.json").read_text())
    assert doc["chi2_interacting"] < doc["chi2_bs"]
    assert _rows(sim / "prices.csv")[0] == ["day", "empirical", "bs", "interacting"]
    assert (sim / "prices.svg").exists()


def test_simulate_zero_potential_matches_bs(power_market, tmp_path):
    sim = tmp_path / "sim0"
    assert main(["simulate", "--input", str(power_market), "--zero-bubble", "--out", str(sim)] + FAST) == 0
    rows = np.array(_rows(sim / "prices.csv")[1:], dtype=float)
    bs, inter = rows[:, 2], rows[:, 3]
    assert np.max(np.abs(bs - inter)) < 1e-3 * max(bs.max(), 1.0)


def test_reruns_are_byte_identical(tmp_path):
    out = tmp_path / "run"
    args = ["synth", "--zero-bubble", "--seed", "5", "--n-days", "20", "--out", str(out)] + FAST
    assert main(args) == 0
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    assert main(args) == 0
    assert first == {p.name: p.read_bytes() for p in out.iterdir()}
    cal = ["calibrate", "--input", str(out / "market.csv"), "--out", str(tmp_path / "cal")] + FAST
    assert main(cal) == 0
    first = {p.name: p.read_bytes() for p in (tmp_path / "cal").iterdir()}
    assert main(cal) == 0
    assert first == {p.name: p.read_bytes() for p in (tmp_path / "cal").iterdir()}


def test_config_file_merge(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n-days": 10, "seed": 3, "sigma": 0.01, "n_space": 400, "steps_per_day": 4}))
    out = tmp_path / "o"
    assert main(["synth", "--zero-bubble", "--config", str(cfg), "--seed", "4", "--out", str(out)]) == 0
    meta = json.loads((out / "synth.json").read_text())
    assert meta["seed"] == 4
    assert meta["params"]["sigma"] == 0.01
    assert len(_rows(out / "market.csv")) == 11


def test_bad_config_exits_2(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("[1, 2]")
    assert main(["synth", "--zero-bubble", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_output_dir_from_environment(tmp_path, monkeypatch):
    target = tmp_path / "from_env"
    monkeypatch.setenv("INTERACTING_BS_OUTPUT_DIR", str(target))
    assert main(["synth", "--zero-bubble", "--n-days", "10"] + FAST) == 0
    assert (target / "market.csv").exists()


def test_history_estimation(tmp_path, zero_market):
    rng = np.random.default_rng(0)
    prices = 1000.0 * np.exp(np.cumsum(0.0046 * rng.standard_normal(100)))
    hist = tmp_path / "hist.csv"
    hist.write_text("date,underlying\n" + "".join(
        f"{d},{float(p)!r}\n" for d, p in zip(np.datetime_as_string(
            np.busday_offset("1999-06-01", np.arange(100), roll="forward")), prices)))
    out = tmp_path / "cal"
    assert main(["calibrate", "--input", str(zero_market), "--history", str(hist), "--mu-override", "0.0007",
                 "--out", str(out)] + FAST) == 0
    params = json.loads((out / "result.json").read_text())["params"]
    rets = np.diff(np.log(prices[-90:]))
    assert params["sigma"] == pytest.approx(rets.std(ddof=1), rel=1e-12)
    assert params["mu"] == 0.0007


def test_report(power_market, tmp_path):
    cal = tmp_path / "cal"
    assert main(["calibrate", "--input", str(power_market), "--out", str(cal)] + FAST) == 0
    (cal / "rho.svg").unlink()
    assert main(["report", "--dir", str(cal)]) == 0
    assert (cal / "rho.svg").exists()
    text = (cal / "report.md").read_text()
    assert "chi2_bs" in text and "![rho.svg](rho.svg)" in text
    assert main(["report", "--dir", str(tmp_path / "missing")]) == 2


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert __version__ in capsys.readouterr().out
