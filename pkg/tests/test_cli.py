import csv
import io
import json
import subprocess
import sys

import pytest

from ensemble_interface import cli


def run(args, capsys):
    code = cli.main(args)
    out, err = capsys.readouterr()
    return code, out, err


def table(text):
    body = [ln for ln in text.splitlines() if not ln.startswith("#@")]
    return list(csv.DictReader(io.StringIO("\n".join(body))))


def test_squeeze_variance(capsys):
    code, out, _ = run(["run", "squeeze", "--kappa", "1"], capsys)
    assert code == cli.EXIT_OK
    (row,) = table(out)
    assert float(row["variance"]) == pytest.approx(0.25, abs=1e-9)
    assert row["kappa"] == "1"


def test_teleport_sweep_minimum(capsys):
    code, out, _ = run(["run", "teleport", "--sweep", "kappa", "0:3:0.01"], capsys)
    assert code == 0
    rows = table(out)
    assert len(rows) == 301
    best = min(rows, key=lambda r: float(r["delta_epr"]))
    assert float(best["delta_epr"]) == pytest.approx(0.66, abs=0.01)
    # the closed-form optimum 1.4865 lands on the 1.49 grid point
    assert float(best["kappa"]) == pytest.approx(1.4865, abs=0.005)
    assert abs(float(best["kappa"]) - 1.48) <= 0.01 + 1e-12
    # rows sorted by the swept value; every row carries all parameters
    ks = [float(r["kappa"]) for r in rows]
    assert ks == sorted(ks)
    assert all(r["backaction"] == "closed_form" for r in rows)


def test_parallel_sweep_matches_serial(capsys):
    _, serial, _ = run(["run", "entangle", "--sweep", "kappa", "0:2:0.25"], capsys)
    _, parallel, _ = run(["run", "entangle", "--sweep", "kappa", "0:2:0.25", "--jobs", "4"], capsys)
    assert table(serial) == table(parallel)


def test_recorded_config_reproduces_output(capsys, tmp_path):
    first = tmp_path / "first.csv"
    code, _, _ = run(["run", "memory", "--kappa", "0.8", "--gain", "0.8", "--n_bar", "8", "--out", str(first)], capsys)
    assert code == 0
    second = tmp_path / "second.csv"
    code, _, _ = run(["run", "--config", str(first), "--out", str(second)], capsys)
    assert code == 0
    assert table(first.read_text()) == table(second.read_text())


def test_json_output_round_trip(capsys, tmp_path):
    out = tmp_path / "d.json"
    code, _, _ = run(["run", "dlcz", "--kappa", "0.1", "--format", "json", "--out", str(out)], capsys)
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["config"]["scenario"] == "dlcz"
    assert doc["artifacts"][0]["density"]["basis"] == ["00", "01", "10", "11"]
    again = tmp_path / "e.json"
    assert run(["run", "--config", str(out), "--format", "json", "--out", str(again)], capsys)[0] == 0
    assert json.loads(again.read_text())["rows"] == doc["rows"]


def test_config_file_with_override(capsys, tmp_path):
    cfg = tmp_path / "s.cfg"
    cfg.write_text("# squeezing run\nscenario = squeeze\nkappa = 2   # strong\n")
    code, out, _ = run(["run", "--config", str(cfg), "--kappa", "1"], capsys)
    assert code == 0
    assert float(table(out)[0]["variance"]) == pytest.approx(0.25)


def test_unknown_key_reports_location(capsys, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("scenario = squeeze\n\nkapa = 1\n")
    code, _, err = run(["run", "--config", str(cfg)], capsys)
    assert code == cli.EXIT_CONFIG
    assert f"{cfg}:3" in err and "kapa" in err


def test_unknown_override(capsys):
    code, _, err = run(["run", "squeeze", "--bogus", "1"], capsys)
    assert code == 2
    assert "--bogus" in err


@pytest.mark.parametrize(
    "args",
    [
        ["run", "nonsense"],
        ["run", "squeeze", "--kappa", "abc"],
        ["run", "squeeze", "--sweep", "kappa", "1:0:0.1"],
        ["run", "squeeze", "--sweep", "nope", "0:1:0.5"],
        ["run", "squeeze", "--sweep", "kappa"],
        ["run", "squeeze", "--format", "json", "--schema_version", "7"],
        ["run", "entangle", "--scheme", "three-pulse"],
        ["run"],
    ],
)
def test_config_errors_exit_2(args, capsys):
    code, _, err = run(args, capsys)
    assert code == cli.EXIT_CONFIG
    assert "config error" in err


def test_seed_required_for_sampling(capsys):
    code, _, err = run(["run", "squeeze", "--mc_samples", "100"], capsys)
    assert code == 2 and "seed" in err
    code, out, _ = run(["run", "squeeze", "--mc_samples", "100", "--seed", "5"], capsys)
    assert code == 0
    _, again, _ = run(["run", "squeeze", "--mc_samples", "100", "--seed", "5"], capsys)
    assert out == again
    assert "#@ seed = 5" in out


def test_numeric_precondition_exit_3(capsys):
    code, _, err = run(["run", "dlcz", "--kappa", "2", "--cutoff", "4"], capsys)
    assert code == cli.EXIT_NUMERIC
    assert "raise the cutoff" in err


def test_resonance_surfaces_as_numeric_error(capsys):
    code, _, err = run(["run", "polarizability", "--delta_mhz", "0"], capsys)
    assert code == 3
    assert "F'=5" in err


def test_negative_values(capsys):
    code, out, _ = run(["run", "polarizability", "--delta_mhz", "-5000"], capsys)
    assert code == 0
    assert float(table(out)[0]["delta_mhz"]) == -5000
    code, out, _ = run(["run", "polarizability", "--sweep", "delta_mhz", "-3000:-1000:1000"], capsys)
    assert code == 0
    assert [float(r["delta_mhz"]) for r in table(out)] == [-3000, -2000, -1000]


def test_comma_sweep(capsys):
    code, out, _ = run(["run", "entangle", "--sweep", "kappa", "0.5,1,2"], capsys)
    assert code == 0
    assert len(table(out)) == 3


def test_list(capsys):
    code, out, _ = run(["list"], capsys)
    assert code == 0
    for name in ("squeeze", "entangle", "memory", "teleport", "eit", "dlcz", "polarizability"):
        assert f"{name}:" in out


def test_nine_significant_digits():
    assert cli.fmt(1 / 3) == "0.333333333"
    assert cli.fmt(True) == "true"


def test_parse_config_text_rules():
    with pytest.raises(cli.ConfigError, match=":2"):
        cli.parse_config_text("a = 1\na = 2\n", "f")
    with pytest.raises(cli.ConfigError, match="key = value"):
        cli.parse_config_text("just words\n", "f")
    rec = cli.parse_config_text("#@ scenario = squeeze\nkappa,variance\n1,0.25\n", "f")
    assert set(rec) == {"scenario"}


def test_acceptance_subcommand_exit_code():
    proc = subprocess.run(
        [sys.executable, "-m", "ensemble_interface", "run", "acceptance"], capture_output=True, text=True, timeout=600
    )
    lines = [ln for ln in proc.stdout.splitlines() if ln.startswith(("[PASS]", "[FAIL]"))]
    assert len(lines) >= 9
    expected = cli.EXIT_OK if all(ln.startswith("[PASS]") for ln in lines) else cli.EXIT_ACCEPTANCE
    assert proc.returncode == expected
