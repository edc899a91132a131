import json
import os

import numpy as np
import pytest
import yaml

from pshenvelope import cli
from pshenvelope.config import config_from_dict, parse_config, parse_config_text
from pshenvelope.errors import ParseError, ValidationError
from pshenvelope.grid import build_grid, read_function, sample, write_function
from pshenvelope.domain import ball

CONFIGS = os.path.join(os.path.dirname(cli.__file__), "configs")

MINIMAL = """\
domain: {kind: ball, n: 1, radius: 1.0}
h: 1/32
obstacle: "0"
f: "4"
method: obstacle
"""


def test_minimal_config():
    cfg = parse_config_text(MINIMAL)
    assert cfg.h == 1 / 32 and cfg.method == "obstacle" and cfg.n == 1
    assert cfg.f == "4"


def test_negative_density_rejected():
    with pytest.raises(ValidationError, match="density must be >= 0"):
        parse_config_text(MINIMAL.replace('f: "4"', 'f: "-1"'))
    with pytest.raises(ValidationError, match="^f:"):
        parse_config_text(MINIMAL.replace('f: "4"', 'f: "re(z)"'))


def test_unknown_key_suggestion():
    with pytest.raises(ParseError, match=r"'metod' \(line 6\); did you mean 'method'"):
        parse_config_text(MINIMAL + "metod: berman\n")
    cfg = parse_config_text(MINIMAL + "metod: berman\n", strict=False)
    assert cfg.method == "obstacle"


def test_malformed_yaml_has_position():
    with pytest.raises(ParseError, match="line 3, column 1"):
        parse_config_text("h: 1\nf: [1, 2\n")
    with pytest.raises(ParseError, match="line 2"):
        parse_config_text("h: 1\n  f: 2\n")


@pytest.mark.parametrize("field,value", [("h", "-1"), ("tol", 0), ("mode", "fast"), ("method", "newton"),
                                         ("j_schedule", [4, 2]), ("p", 1)])
def test_validation_names_the_field(field, value):
    d = yaml.safe_load(MINIMAL)
    d[field] = value
    with pytest.raises(ValidationError, match=field):
        config_from_dict(d)


def test_missing_file_rejected(tmp_path):
    with pytest.raises(ValidationError, match="does not exist"):
        config_from_dict({"obstacle": {"file": str(tmp_path / "nope.pshg")}})


def test_effective_config_round_trips():
    cfg = parse_config(os.path.join(CONFIGS, "berman_kink.yaml"))
    again = config_from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()
    assert cfg.g == "obstacle_density" and len(cfg.j_schedule) == 11


def test_shipped_configs_parse():
    names = sorted(os.listdir(CONFIGS))
    assert len(names) >= 5
    for name in names:
        parse_config(os.path.join(CONFIGS, name), strict=True)


def test_cli_envelope_disc_benchmark(tmp_path, capsys):
    out = tmp_path / "out"
    code = cli.main(["envelope", "--config", os.path.join(CONFIGS, "disc_benchmark.yaml"), "--out", str(out)])
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["sup_error_vs_exact"] <= 2 * (1 / 32)
    assert rep["config"]["f"] == 4.0 and rep["config"]["tol"] == 1e-8
    P = read_function(out / "result.pshg")
    C = read_function(out / "contact.pshg")
    assert P.grid.same_as(C.grid)
    assert "sup-error" in capsys.readouterr().out


def test_cli_obstacle_from_file(tmp_path):
    g = build_grid(ball(), 1 / 16)
    write_function(tmp_path / "u.pshg", sample("min(abs(z - 0.3)**2, abs(z + 0.3)**2)", g))
    (tmp_path / "run.yaml").write_text("h: 1/16\nobstacle: {file: u.pshg}\nf: 1\n")
    assert cli.main(["envelope", "--config", str(tmp_path / "run.yaml"), "--out", str(tmp_path / "o")]) == 0
    P = read_function(tmp_path / "o" / "result.pshg")
    assert np.all(P.values[g.interior] <= sample("min(abs(z - 0.3)**2, abs(z + 0.3)**2)", g).values[g.interior]
                  + 1e-7)


def test_cli_modes_give_identical_files(tmp_path):
    cfg = os.path.join(CONFIGS, "disc_benchmark.yaml")
    for mode in ("seq", "redblack"):
        assert cli.main(["envelope", "--config", cfg, "--out", str(tmp_path / mode), "--mode", mode]) == 0
    a = (tmp_path / "seq" / "result.pshg").read_bytes()
    b = (tmp_path / "redblack" / "result.pshg").read_bytes()
    assert a == b


def test_cli_berman_and_capacity(tmp_path):
    kink = tmp_path / "kink.yaml"
    kink.write_text(open(os.path.join(CONFIGS, "berman_kink.yaml")).read().replace("1/32", "1/16"))
    assert cli.main(["berman", "--config", str(kink), "--out", str(tmp_path / "b")]) == 0
    rep = json.loads((tmp_path / "b" / "report.json").read_text())
    assert rep["trace_order"]["increasing_ok"] and rep["trace_order"]["below_obstacle_ok"]
    assert (tmp_path / "b" / "trace.csv").exists()

    cap = tmp_path / "cap.yaml"
    cap.write_text(open(os.path.join(CONFIGS, "capacity_disc.yaml")).read())
    assert cli.main(["capacity", "--config", str(cap), "--out", str(tmp_path / "c")]) == 0
    rep = json.loads((tmp_path / "c" / "report.json").read_text())
    assert abs(rep["capacity"] / 9.0647 - 1) <= 0.1


def test_cli_convergence(tmp_path):
    cfg = os.path.join(CONFIGS, "disc_benchmark.yaml")
    assert cli.main(["convergence", "1/8,1/16,1/32", "--config", cfg, "--out", str(tmp_path)]) == 0
    rows = json.loads((tmp_path / "convergence.json").read_text())["rows"]
    errs = [r["sup_error"] for r in rows]
    assert errs == sorted(errs, reverse=True)
    assert "diff_to_previous" in rows[1]


def test_cli_verify_single(tmp_path):
    assert cli.main(["verify", "translation", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "summary.json").read_text())["passed"] == ["translation"]


def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(MINIMAL + "metod: berman\n")
    code = cli.main(["envelope", "--config", str(bad), "--strict", "--out", str(tmp_path / "o")])
    assert code == 2
    rec = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert rec["exit_code"] == 2 and "method" in rec["message"]
    assert cli.main(["verify", "trnslation", "--out", str(tmp_path / "v")]) == 2


def test_cli_unwritable_out(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("keep")
    code = cli.main(["envelope", "--out", str(blocker / "sub")])
    assert code == 2
    assert blocker.read_text() == "keep"
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error_type"] == "ConfigError"


def test_cli_runtime_failure_keeps_record(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(MINIMAL + "max_iter: 2\n")
    assert cli.main(["envelope", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3
    rec = json.loads((tmp_path / "o" / "failure.json").read_text())
    assert rec["error_type"] == "MaxIterExceeded"
    assert not (tmp_path / "o" / "result.pshg").exists()


def test_cli_failed_check_exit_code(tmp_path, monkeypatch):
    from pshenvelope import experiments

    def failing(mode=None, **kw):
        return experiments.ExperimentReport("translation", passed=False)

    monkeypatch.setattr(cli, "run_check", lambda name, mode=None, **kw: failing())
    assert cli.main(["verify", "translation", "--out", str(tmp_path)]) == 1
    assert json.loads((tmp_path / "failure.json").read_text())["status"] == "failed"
