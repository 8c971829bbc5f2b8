import io
import json

import pytest

from csbp_genealogy.cli import config_to_argv, execute, main
from csbp_genealogy.errors import ContractError


def run(argv):
    buf = io.StringIO()
    code = execute(argv, buf)
    return code, buf.getvalue()


def test_metadata_header():
    code, out = run(["mrca", "--mech", "feller", "--T", "1", "--x", "1", "--k", "2"])
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("# tool: csbp-genealogy")
    assert any(line.startswith("# config_sha256: ") for line in lines)
    header = [line for line in lines if not line.startswith("#")][0]
    assert header == "k,T,x,probability,error"


def test_verify_gamma_passes():
    code, out = run(["verify", "gamma"])
    assert code == 0 and "# status: pass" in out


def test_band_violation_exit_code():
    code, _ = run(["particle", "mrca", "--mech", "feller", "--x", "1", "--T", "1", "--k", "2",
                   "--n", "20", "--replicas", "200", "--reference", "0.05"])
    assert code == 2


def test_operational_errors(tmp_path, capsys):
    assert main(["laplace", "eval", "--mech", "nope", "--t", "1", "--lam", "1"]) == 1
    assert main(["no-such-command"]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text('{"command": "verify gamma",\n "seed": }')
    assert main(["run", str(bad)]) == 1
    assert "line 2" in capsys.readouterr().err


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"command": "verify gamma", "colour": "red"}))
    assert main(["run", str(cfg)]) == 1


def test_run_config_matches_direct_call(tmp_path):
    cfg = tmp_path / "c.json"
    out = tmp_path / "o.csv"
    cfg.write_text(json.dumps({"command": "rates", "params": {"family": "bs", "k": [4]},
                               "seed": 3, "output": str(out)}))
    assert main(["run", str(cfg)]) == 0
    _, direct = run(["rates", "--family", "bs", "--k", "4", "--seed", "3"])
    assert out.read_text() == direct


def test_config_to_argv():
    argv = config_to_argv({"command": "verify mixture",
                           "params": {"k": [[1], [2]], "population": ["fixed:2", "feller"],
                                      "replicas": 100, "flag": True, "skip": False}})
    assert argv == ["verify", "mixture", "--k", "1;2", "--population", "fixed:2",
                    "--population", "feller", "--replicas", "100", "--flag"]


def test_json_format():
    code, out = run(["rates", "--family", "kingman", "--k", "3", "--format", "json"])
    doc = json.loads(out)
    assert code == 0 and doc["ok"] and doc["meta"]["command"] == "rates"
    assert doc["columns"][0] == "alpha"


def test_reruns_are_byte_identical():
    argv = ["coalescent", "simulate", "--family", "bs", "--k", "3", "--runs", "2000", "--seed", "11"]
    assert run(argv) == run(argv)
    assert run(argv + ["--threads", "2"])[1] == run(argv)[1]


def test_seed_changes_output_and_hash():
    a = run(["coalescent", "simulate", "--family", "kingman", "--k", "3", "--runs", "500", "--seed", "1"])[1]
    b = run(["coalescent", "simulate", "--family", "kingman", "--k", "3", "--runs", "500", "--seed", "2"])[1]
    assert a != b


def test_forest_subcommands():
    code, out = run(["forest", "enumerate", "--k", "2", "--m", "1"])
    assert code == 0
    code, out = run(["forest", "law", "--mech", "feller", "--mesh", "0,1", "--x", "1", "--lam", "1", "--k", "2"])
    assert code == 0
    code, out = run(["forest-law-p", "--mech", "feller", "--mesh", "0,1", "--x", "1", "--k", "2"])
    assert code == 0
    note = [line for line in out.splitlines() if "survival=" in line][0]
    total, surv = (float(v.split("=")[1]) for v in note.split()[-2:])
    assert total == pytest.approx(surv, rel=1e-8)


def test_mechanism_validate_json(tmp_path):
    f = tmp_path / "m.json"
    f.write_text(json.dumps({"d": 1, "kappa": [[0.0]], "beta": [0.5]}))
    assert run(["mechanism", "validate", "--mech", str(f)])[0] == 0


def test_json_handles_numpy_values():
    code, out = run(["verify", "mixture", "--replicas", "500", "--format", "json"])
    doc = json.loads(out)
    assert isinstance(doc["ok"], bool) and doc["rows"]


def test_flag_aliases_and_count_only():
    a = run(["laplace", "eval", "--mech", "feller", "--t", "1", "--lambda", "1", "--degree", "2"])
    b = run(["laplace", "eval", "--mech", "feller", "--t", "1", "--lam", "1", "--degree", "2"])
    assert a == b and a[0] == 0
    code, out = run(["forest", "enumerate", "--k", "2,1", "--m", "2", "--count-only"])
    assert code == 0 and out.strip().splitlines()[-1].endswith(",252")
    assert run(["mechanism", "validate", "atom2"])[0] == 0
    with pytest.raises(ContractError):
        run(["mechanism", "validate"])
