import json
import subprocess
import sys

import pytest

from byblos.cli import bundled_scenarios, main, parse_seeds
from byblos.config import ConfigError

SCENARIOS = sorted(bundled_scenarios())


def test_all_scenarios_bundled():
    assert len(SCENARIOS) >= 12
    assert "gracious_nocontention" in SCENARIOS


@pytest.mark.parametrize("name", SCENARIOS)
def test_bundled_scenario_passes(name, capsys):
    assert main(["run", name]) == 0
    out = capsys.readouterr().out
    assert out.rstrip().endswith("RESULT PASS")


def test_invalid_quorum_exits_2(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text("[scenario]\nn = 4\nf = 1\n")
    assert main(["run", str(p)]) == 2
    assert "scenario.n" in capsys.readouterr().err


def test_malformed_toml_exits_2(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text("[scenario\nn = 5")
    assert main(["run", str(p)]) == 2
    assert "malformed" in capsys.readouterr().err


def test_missing_file_exits_2(capsys):
    assert main(["run", "/nonexistent/x.toml"]) == 2


def test_bad_arguments_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["run"])
    assert exc.value.code == 2


def test_outputs_are_deterministic(tmp_path):
    a, b = tmp_path / "a.trace", tmp_path / "b.trace"
    ra, rb = tmp_path / "a.json", tmp_path / "b.txt"
    assert main(["run", "gracious_contention", "--trace-out", str(a), "--report-out", str(ra)]) == 0
    assert main(["run", "gracious_contention", "--trace-out", str(b), "--report-out", str(rb)]) == 0
    assert a.read_bytes() == b.read_bytes()
    rep = json.loads(ra.read_text())
    assert rep["passed"] and rep["name"] == "gracious_contention"
    assert rb.read_text().rstrip().endswith("RESULT PASS")


def test_seed_flag_overrides(tmp_path):
    a, b = tmp_path / "a.trace", tmp_path / "b.trace"
    main(["run", "byzantine_silent", "--seed", "1", "--trace-out", str(a)])
    main(["run", "byzantine_silent", "--seed", "2", "--trace-out", str(b)])
    assert a.read_bytes() != b.read_bytes()


def test_out_dir_env(tmp_path, monkeypatch):
    monkeypatch.setenv("BYBLOS_OUT_DIR", str(tmp_path))
    assert main(["run", "gracious_nocontention", "--seed", "4"]) == 0
    assert (tmp_path / "gracious_nocontention-4.trace").exists()
    assert json.loads((tmp_path / "gracious_nocontention-4.report.json").read_text())["seed"] == 4
    assert main(["run", "gracious_nocontention", "--trace-out", "sub/x.trace"]) == 0
    assert (tmp_path / "sub" / "x.trace").exists()


def test_sweep(capsys):
    assert main(["sweep", "byzantine_equivocate", "--seeds", "0..4"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert [l.split()[:3] for l in out[:5]] == [["seed", str(i), "PASS"] for i in range(5)]
    assert out[-1] == "SWEEP 5/5 passed"


def test_sweep_parallel_matches_serial(capsys):
    main(["sweep", "byzantine_delay", "--seeds", "0..3"])
    serial = capsys.readouterr().out
    main(["sweep", "byzantine_delay", "--seeds", "0..3", "--jobs", "2"])
    assert capsys.readouterr().out == serial


def test_sweep_failure_prints_reproduce(tmp_path, capsys):
    # strict prefix fails under random reordering
    p = tmp_path / "reorder.toml"
    p.write_text("[scenario]\nname='r'\nn=5\nf=1\n[network]\ndelay='uniform'\n"
                 "[workload_gen]\nclients=4\ntxns=2\nkeys=4\n")
    assert main(["sweep", str(p), "--seeds", "0..0", "--strict-prefix"]) == 1
    out = capsys.readouterr().out
    assert "PROP prefix_strict FAIL" in out
    assert f"reproduce: byblos run {p} --seed 0" in out
    assert "SWEEP 0/1 passed" in out


def test_parse_seeds():
    assert list(parse_seeds("3..5")) == [3, 4, 5]
    assert list(parse_seeds("7")) == [7]
    with pytest.raises(ConfigError):
        parse_seeds("5..3")
    with pytest.raises(ConfigError):
        parse_seeds("a..b")


def test_scenarios_listing(capsys):
    assert main(["scenarios"]) == 0
    assert capsys.readouterr().out.split() == SCENARIOS


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "byblos", "run", "gracious_nocontention"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "RESULT PASS" in r.stdout
