import json
import math
import subprocess
import sys

import pytest

from measprep.cli import EXIT_IO, EXIT_OK, EXIT_PLANNER, EXIT_USAGE, main, parse_number, parse_pair


def run(tmp_path, name, *args):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, out


@pytest.mark.parametrize("text,value", [
    ("0.25", 0.25),
    ("pi", math.pi),
    ("-pi", -math.pi),
    ("pi/4", math.pi / 4),
    ("0.5pi", math.pi / 2),
    ("-0.5pi", -math.pi / 2),
    ("2*pi/3", 2 * math.pi / 3),
    (" 1e-3 ", 1e-3),
    ("3PI", 3 * math.pi),
])
def test_parse_number(text, value):
    assert parse_number(text) == pytest.approx(value, abs=1e-15)


def test_parse_pair():
    assert parse_pair("pi/2,-pi/4") == pytest.approx((math.pi / 2, -math.pi / 4))
    assert parse_pair([0.1, "pi"]) == pytest.approx((0.1, math.pi))


def test_three_axis_target_equals_initial(tmp_path, capsys):
    code, out = run(tmp_path, "o", "three-axis", "--theta-t", "pi/2", "--phi-t", "0.5pi", "--trajectories", "50")
    assert code == EXIT_OK
    assert "mean steps 0.0000" in capsys.readouterr().out
    assert (out / "histogram.csv").exists() and (out / "manifest.json").exists()


def test_three_axis_bad_theta(tmp_path, capsys):
    code, _ = run(tmp_path, "o", "three-axis", "--theta-t", "4", "--trajectories", "10")
    assert code == EXIT_USAGE
    assert "usage" in capsys.readouterr().err


def test_guided_missing_flag(tmp_path, capsys):
    code, _ = run(tmp_path, "o", "guided")
    assert code == EXIT_USAGE
    assert "--n-max" in capsys.readouterr().err


def test_guided_single_step(tmp_path):
    code, out = run(tmp_path, "o", "guided", "--n-max", "1", "--trajectories", "200", "--format", "json")
    assert code == EXIT_OK
    row = json.loads((out / "guided.json").read_text())["rows"][0]
    assert row["n"] == 1 and row["analytic"] == pytest.approx(0.0, abs=1e-30) and row["monte_carlo"] == 0.0


def test_unknown_flag_exits_with_usage():
    with pytest.raises(SystemExit) as e:
        main(["three-axis", "--bogus"])
    assert e.value.code == EXIT_USAGE


def test_sic_walk_hitting_rejects_projective(tmp_path, capsys):
    code, _ = run(tmp_path, "o", "sic-walk", "--epsilon", "1", "--mode", "hitting")
    assert code == EXIT_USAGE
    assert "epsilon < 1" in capsys.readouterr().err


def test_sic_walk_rejects_bad_epsilon(tmp_path):
    assert run(tmp_path, "o", "sic-walk", "--epsilon", "0")[0] == EXIT_USAGE
    assert run(tmp_path, "o", "sic-walk", "--epsilon", "1.5")[0] == EXIT_USAGE


def test_sic_walk_projective_walk_is_allowed(tmp_path):
    code, out = run(tmp_path, "o", "sic-walk", "--epsilon", "1", "--steps", "2500", "--sample-every", "250")
    assert code == EXIT_OK
    lines = (out / "samples.csv").read_text().splitlines()
    assert lines[0].startswith("# measprep.samples/")
    assert len(lines) == 3 + 10


def test_plan_identical_states(tmp_path, capsys):
    code, out = run(tmp_path, "o", "plan", "--initial", "1,2", "--target", "1,2")
    assert code == EXIT_OK
    assert "depth 0" in capsys.readouterr().out


def test_plan_failure_exit_code(tmp_path):
    code, _ = run(tmp_path, "o", "plan", "--initial", "0.3,2", "--target", "1.4,-0.5", "--max-depth", "1")
    assert code == EXIT_PLANNER


def test_plan_missing_states(tmp_path):
    assert run(tmp_path, "o", "plan")[0] == EXIT_USAGE


def test_plan_batch_replays(tmp_path):
    code, out = run(tmp_path, "o", "plan", "--batch", "3", "--seed", "5", "--format", "json")
    assert code == EXIT_OK
    rows = json.loads((out / "plan.json").read_text())["rows"]
    assert {r["pair"] for r in rows} == {0, 1, 2}
    assert all(r["depth"] <= 3 and r["final_distance"] <= 1e-6 for r in rows)


def test_config_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"theta_t": "pi/3", "trajectories": 123, "seed": 4}))
    code, out = run(tmp_path, "o", "three-axis", "--config", str(cfg), "--trajectories", "77")
    assert code == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["parameters"]["theta_t"] == "pi/3"
    assert manifest["parameters"]["trajectories"] == 77
    assert manifest["seed"] == 4
    assert manifest["parameters"]["phi_t"] == "pi/4"


def test_bad_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"nonsense": 1}))
    assert run(tmp_path, "o", "three-axis", "--config", str(cfg))[0] == EXIT_USAGE
    cfg.write_text("{not json")
    assert run(tmp_path, "o", "three-axis", "--config", str(cfg))[0] == EXIT_USAGE


def test_missing_config_is_io_error(tmp_path):
    assert run(tmp_path, "o", "three-axis", "--config", str(tmp_path / "absent.json"))[0] == EXIT_IO


def test_manifest_reproduces_outputs(tmp_path):
    code, first = run(tmp_path, "a", "sic-walk", "--epsilon", "0.3", "--steps", "5000", "--sample-every", "100",
                      "--seed", "11")
    assert code == EXIT_OK
    code, second = run(tmp_path, "b", "sic-walk", "--config", str(first / "manifest.json"))
    assert code == EXIT_OK
    assert (first / "samples.csv").read_bytes() == (second / "samples.csv").read_bytes()


@pytest.mark.parametrize("args,name", [
    (["three-axis", "--trajectories", "9000"], "histogram.csv"),
    (["sic-walk", "--epsilon", "0.5", "--mode", "hitting", "--trajectories", "2000", "--targets", "4"],
     "hitting.csv"),
    (["guided", "--n-max", "4", "--trajectories", "9000", "--format", "json"], "guided.json"),
])
def test_threads_do_not_change_files(tmp_path, args, name):
    _, a = run(tmp_path, "t1", *args, "--seed", "3", "--threads", "1")
    _, b = run(tmp_path, "t8", *args, "--seed", "3", "--threads", "8")
    assert (a / name).read_bytes() == (b / name).read_bytes()


def test_console_script_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "measprep.cli", "three-axis", "--trajectories", "100",
                          "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert res.returncode == 0
    assert "P(steps < 20)" in res.stdout
