import json

import pytest

from mimoeval.cli import main
from mimoeval.errors import MimoEvalError
from mimoeval.experiment import ExperimentConfig, parse_antennas, run_experiment, verify_bundle


def _config(tmp_path, **kw):
    data = {
        "generator": {"kind": "rayleigh", "users": 4, "ports": 32, "subcarriers": 9, "seed": 1},
        "analyses": ["spread", "capacity"],
        "params": {"rho_db": 10, "antennas": [4, 16, 32], "subsets": 40, "seed": 5},
        "out": str(tmp_path / "out"),
    }
    data.update(kw)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(data))
    return path


def test_parse_antennas():
    assert parse_antennas("4,32,128") == (4, 32, 128)
    assert parse_antennas("4:16:4") == (4, 8, 12, 16)
    assert parse_antennas([8, 9]) == (8, 9)
    with pytest.raises(MimoEvalError):
        parse_antennas("4:16:0")


def test_config_validation(tmp_path):
    with pytest.raises(MimoEvalError):
        ExperimentConfig(analyses=[], out=str(tmp_path), generator={})
    with pytest.raises(MimoEvalError):
        ExperimentConfig(analyses=["spread"], out=str(tmp_path), input=str(tmp_path / "missing.ctf"))
    with pytest.raises(MimoEvalError):
        ExperimentConfig(analyses=["plot"], out=str(tmp_path), generator={})
    with pytest.raises(MimoEvalError):
        ExperimentConfig.from_dict({"analyses": ["spread"], "out": "x", "generator": {}, "bogus": 1})


def test_run_writes_inventory(tmp_path):
    assert main(["run", str(_config(tmp_path))]) == 0
    out = tmp_path / "out"
    names = sorted(p.name for p in out.iterdir())
    assert names == ["capacity_cdf.csv", "channel.ctf", "manifest.json", "report.json", "spread_cdf.csv"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "complete"
    assert {e["path"] for e in manifest["outputs"]} == set(names) - {"manifest.json"}
    assert manifest["seeds"] == {"master_seed": 5, "generator_seed": 1}
    report = json.loads((out / "report.json").read_text())
    assert report["spread"]["normalization"] == "NORM1"
    assert report["capacity"]["normalization"] == "NORM2"
    assert verify_bundle(out) == []


def test_run_verify_flag(tmp_path, capsys):
    assert main(["run", str(_config(tmp_path)), "--verify"]) == 0
    assert "reproduced" in capsys.readouterr().out


def test_oversized_subset_fails(tmp_path, capsys):
    cfg = _config(tmp_path, params={"antennas": [4, 64], "subsets": 5})
    assert main(["run", str(cfg)]) != 0
    assert "BadSubset" in capsys.readouterr().err
    out = tmp_path / "out"
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "failed"
    assert manifest["error"]["type"] == "BadSubset"
    # partial outputs are removed
    assert sorted(p.name for p in out.iterdir()) == ["manifest.json"]


def test_tamper_detected(tmp_path):
    run_experiment(ExperimentConfig.load(_config(tmp_path)), threads=1)
    out = tmp_path / "out"
    (out / "report.json").write_text("{}")
    assert verify_bundle(out)
    assert main(["verify", str(out)]) == 1


def test_subcommands(tmp_path):
    ctf = tmp_path / "g.ctf"
    assert main(["generate", "--scenario", "FAR_APART", "--users", "2", "--ports", "16",
                 "--subcarriers", "9", "--out", str(ctf)]) == 0
    assert (tmp_path / "g.truth.json").exists()
    assert main(["spread", "--in", str(ctf), "--out", str(tmp_path / "s"), "--antennas", "4:16:12",
                 "--subsets", "10", "--cdf-points", "5"]) == 0
    assert main(["capacity", "--in", str(ctf), "--out", str(tmp_path / "c"), "--antennas", "4,16",
                 "--subsets", "10", "--rho-db", "20", "--norm", "2"]) == 0
    report = json.loads((tmp_path / "c" / "report.json").read_text())
    assert report["capacity"]["normalization"] == "NORM2"
    assert main(["fingerprint", "--in", str(ctf), "--out", str(tmp_path / "f"), "--mpcs", "3"]) == 0
    assert (tmp_path / "f" / "fingerprint_user1.csv").exists()
    with pytest.raises(SystemExit):
        main(["spread", "--in", str(ctf), "--out", str(tmp_path / "x"), "--norm", "2"])


def test_geometric_default_capacity_norm(tmp_path):
    gen = {"kind": "geometric", "scenario": "FAR_APART", "users": 2, "ports": 16, "subcarriers": 5}
    cfg = _config(tmp_path, generator=gen, analyses=["capacity"],
                  params={"antennas": [4], "subsets": 5})
    assert main(["run", str(cfg)]) == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["capacity"]["normalization"] == "NORM1"
    assert (tmp_path / "out" / "ground_truth.json").exists()
