import json
import subprocess
import sys

import pytest

from pomcpe.cli import build_config, main, make_parser

RUN = ["run", "--domain", "tiger", "--planner", "pomcp", "--c", "50", "--sims", "200",
       "--particles", "200", "--episodes", "3", "--seed", "42"]


def test_run_writes_results(tmp_path, capsys):
    out = tmp_path / "r.csv"
    assert main(RUN + ["--out", str(out)]) == 0
    assert out.read_text().startswith("seed,steps,discounted,cumulative,reached_goal\n")
    assert (tmp_path / "r.summary.json").exists()
    assert "episodes=3" in capsys.readouterr().out


def test_run_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(RUN + ["--out", str(a)])
    main(RUN + ["--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_module_entry_point(tmp_path):
    out = tmp_path / "r.csv"
    proc = subprocess.run([sys.executable, "-m", "pomcpe", *RUN, "--out", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert len(out.read_text().splitlines()) == 4


def test_config_file_with_overrides(tmp_path):
    cfg = {
        "domain": {"name": "hallway", "k1": 2, "k2": 2},
        "planner": "pomcpe",
        "planner_config": {"exploration_c": 20, "entropy_e": 500, "simulations": 123},
        "episodes": 7,
        "base_seed": 3,
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    args = make_parser().parse_args(["run", "--config", str(path), "--c", "7", "--k1", "1", "--k-threshold", "inf"])
    rc = build_config(args)
    assert rc.domain.k1 == 1 and rc.domain.k2 == 2
    assert rc.planner_config.exploration_c == 7
    assert rc.planner_config.entropy_e == 500
    assert rc.planner_config.simulations == 123
    assert rc.planner_config.k_threshold == float("inf")
    assert rc.episodes == 7 and rc.base_seed == 3


def test_time_flag_replaces_simulation_budget():
    args = make_parser().parse_args(["run", "--time-ms", "20"])
    pc = build_config(args).planner_config
    assert pc.time_ms == 20 and pc.simulations is None


def test_bad_config_value_exits_2(capsys):
    assert main(["run", "--domain", "tiger", "--episodes", "-1"]) == 2
    assert "error" in capsys.readouterr().err


def test_unwritable_output_exits_2(tmp_path):
    assert main(RUN + ["--out", str(tmp_path / "nope" / "r.csv")]) == 2


def test_validate_exit_code(capsys):
    assert main(["validate"]) == 0
    assert "all checks passed" in capsys.readouterr().out


def test_validate_broken_layout_file(tmp_path, capsys):
    from pomcpe.domains import build_layout
    from pomcpe.domains.hallway import dump_layout

    path = tmp_path / "broken.txt"
    path.write_text(dump_layout(build_layout(1, 1).without_room("R.f")))
    assert main(["validate", "--layout", str(path)]) == 1
    assert "FAIL  layout" in capsys.readouterr().out


def test_dump_domain(tmp_path, capsys):
    out = tmp_path / "map.txt"
    assert main(["dump-domain", "--domain", "hallway", "--k1", "1", "--k2", "1", "--out", str(out)]) == 0
    rooms = [ln for ln in out.read_text().splitlines() if not ln.startswith("#")]
    assert len(rooms) == 22
    assert main(["dump-domain", "--domain", "tiger"]) == 0
    assert "tiger-left" in capsys.readouterr().out


def test_gridsearch(capsys):
    rc = main(["gridsearch", "--domain", "tiger", "--planner", "pomcpe", "--cs", "10,50", "--es", "0",
               "--sims", "100", "--particles", "100", "--episodes-per-cell", "2"])
    assert rc == 0
    lines = [ln for ln in capsys.readouterr().out.splitlines() if "c=" in ln]
    assert len(lines) == 2


def test_unknown_subcommand():
    with pytest.raises(SystemExit):
        main(["fly"])
