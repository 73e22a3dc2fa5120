import csv
import io
import json
import subprocess
import sys
from fractions import Fraction

import pytest

from rigiditylab.cli import main
from rigiditylab.errors import ConfigError
from rigiditylab.experiment import (
    ExperimentConfig, parse_int, parse_point, preset_config, presets, run,
)
from rigiditylab.reports import csv_text, dumps, to_plain, write_json


def write(tmp_path, name, obj):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.fixture
def pow2_spec(tmp_path):
    return write(tmp_path, "pow2.json", {"kind": "geometric", "base": 2, "count": 40})


@pytest.mark.parametrize("text, value", [
    ("10^9", 10**9), ("2**20", 2**20), (17, 17), ("1e6", 10**6), ("123", 123),
])
def test_parse_int(text, value):
    assert parse_int(text) == value


def test_parse_int_rejects():
    with pytest.raises(ConfigError):
        parse_int("abc", "x")
    with pytest.raises(ConfigError):
        parse_int(True, "x")


def test_parse_point():
    assert parse_point("1/3").angle.fraction == Fraction(1, 3)
    assert parse_point(0.25).turns() == 0.25


def test_to_plain_big_ints_and_fractions():
    assert to_plain({"a": 2**80, "b": 5, "c": Fraction(1, 3), "d": float("inf")}) == \
        {"a": str(2**80), "b": 5, "c": "1/3", "d": "inf"}


def test_csv_rfc4180():
    text = csv_text(["a", "b"], [[1, 'x,"y"'], [2**70, None]])
    assert text == 'a,b\r\n1,"x,""y"""\r\n' + str(2**70) + ",\r\n"
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[1] == ["1", 'x,"y"']


def test_atomic_write_leaves_no_temp(tmp_path):
    write_json(tmp_path / "r.json", {"b": 1, "a": 2})
    assert [p.name for p in tmp_path.iterdir()] == ["r.json"]
    assert (tmp_path / "r.json").read_text().index('"a"') < (tmp_path / "r.json").read_text().index('"b"')


def test_config_validation_paths():
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_json({"analyses": []})
    assert info.value.path == "analyses"
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_json({"analyses": [{"kind": "nope"}]})
    assert info.value.path == "analyses[0].kind"
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_json({"analyses": [{"kind": "hartman", "sequence": "missing"}]})
    assert info.value.path == "analyses[0].sequence"
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_json({"analyses": [{"kind": "hartman", "sequence": {
            "spec": {"kind": "geometric", "base": 1}, "count": 4}}]})
    assert info.value.path == "analyses[0].sequence.spec"


def test_presets_known():
    names = [n for n, _ in presets()]
    assert names == sorted(["erdos-taylor-bohr", "bourgain-random", "prop4-counterexample",
                            "block-kazhdan", "furstenberg-survey"])
    cfg = preset_config("bourgain-random")
    assert cfg.sequences["sample"]["spec"]["N"] == 10**6
    assert cfg.sequences["sample"]["spec"]["model"] == "log_over_n"
    assert preset_config("prop4-counterexample").sequences["union"]["spec"]["base"] == \
        {"kind": "geometric", "base": 2}
    with pytest.raises(KeyError):
        preset_config("nope")


def test_partial_failure_recorded(tmp_path):
    cfg = ExperimentConfig.from_json({"analyses": [
        {"kind": "hartman", "sequence": {"spec": {"kind": "geometric", "base": 2}, "count": 10},
         "z": ["1/3"], "ladder": [50]},
        {"kind": "hartman", "sequence": {"spec": {"kind": "geometric", "base": 2}, "count": 10},
         "z": ["1/3"], "ladder": [9]},
    ]})
    rep = run(cfg, tmp_path)
    statuses = [r["status"] for r in rep.results.values()]
    assert statuses == ["error", "ok"] and not rep.ok
    saved = json.loads((tmp_path / "report.json").read_text())
    assert saved["config"]["analyses"][1]["ladder"] == [9]
    assert "timings" in saved and saved["version"]


def test_rerun_embedded_config_reproduces(tmp_path):
    rep = run(preset_config("prop4-counterexample", seed=3))
    again = run(ExperimentConfig.from_json(json.loads(dumps(rep.to_json()))["config"]))
    assert again.stable_json() == rep.stable_json()


def test_cli_presets(capsys):
    assert main(["presets"]) == 0
    assert "bourgain-random" in capsys.readouterr().out


def test_cli_run_preset(tmp_path):
    assert main(["run", "--preset", "prop4-counterexample", "--out", str(tmp_path),
                 "--format", "csv", "--threads", "2"]) == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert "report.json" in names and "00-nullpotence_profile.csv" in names


def test_cli_config_error_exit(tmp_path):
    bad = write(tmp_path, "bad.json", {"analyses": []})
    assert main(["run", "--config", bad]) == 2
    assert main(["run", "--preset", "nope"]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2


def test_cli_analysis_failure_exit(tmp_path):
    cfg = write(tmp_path, "c.json", {"analyses": [
        {"kind": "relations", "sequence": {"spec": {"kind": "geometric", "base": 2}, "count": 30},
         "p": 1, "C": 2, "expect_value": 1}]})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 1


def test_cli_threads_env(tmp_path, monkeypatch):
    monkeypatch.setenv("RIGIDITYLAB_THREADS", "3")
    assert main(["run", "--preset", "prop4-counterexample", "--out", str(tmp_path)]) == 0
    saved = json.loads((tmp_path / "report.json").read_text())
    assert saved["config"]["threads"] == 3
    monkeypatch.setenv("RIGIDITYLAB_THREADS", "x")
    assert main(["run", "--preset", "prop4-counterexample"]) == 2


def test_cli_sequence_generate(pow2_spec, capsys):
    assert main(["sequence", "generate", "--spec", pow2_spec, "--count", "70",
                 "--format", "csv"]) == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[0] == ["k", "n_k"] and rows[-1] == ["69", str(2**69)]


def test_cli_nullpotence_profile(tmp_path, capsys):
    spec = write(tmp_path, "tu.json", {"kind": "translate_union",
                                       "base": {"kind": "geometric", "base": 2}, "count": 80})
    assert main(["nullpotence", "profile", "--spec", spec, "--r", "2", "--K-ladder", "0,8,16,24",
                 "--N", "10^9", "--format", "csv"]) == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[0] == ["K", "min_representable", "witness"]
    assert [r[1] for r in rows[1:]] == ["1", "1", "1", "1"]


def test_cli_rigidity_commands(tmp_path, pow2_spec, capsys):
    m = write(tmp_path, "m.json", {"kind": "roots", "order": 16})
    assert main(["rigidity", "defect", "--spec", pow2_spec, "--measure", m,
                 "--window", "0:21"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["defects"][4:] == [0.0] * 17
    assert main(["rigidity", "gamma", "--spec", pow2_spec, "--eps", "0.5",
                 "--denom-max", "8"]) == 0
    assert "1/8" in json.loads(capsys.readouterr().out)["hits"]
    assert main(["rigidity", "defect", "--spec", pow2_spec, "--measure", m,
                 "--window", "0:99"]) == 2


def test_cli_kazhdan_commands(pow2_spec, capsys):
    assert main(["kazhdan", "hartman", "--spec", pow2_spec, "--z", "1/3", "--ladder", "9,19"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["reports"][0]["values"][-1] == pytest.approx(0.5)
    assert main(["kazhdan", "search", "--spec", pow2_spec, "--eps", "0.1"]) == 0
    assert json.loads(capsys.readouterr().out)["success"]


def test_cli_bohr_commands(tmp_path, capsys):
    t = write(tmp_path, "t.json", ["1/3", "1/5"])
    assert main(["bohr", "witness", "--targets", t, "--eps", "0.1", "--blocks", "1..8"]) == 0
    cert = json.loads(capsys.readouterr().out)
    assert cert["certified"] and max(cert["values"]) < 0.1
    assert main(["bohr", "witness", "--targets", t, "--eps", "1e-9", "--blocks", "1..3"]) == 1
    m = write(tmp_path, "m.json", {"kind": "roots", "order": 8})
    assert main(["bohr", "sublevel", "--measure", m, "--eps", "0.25", "--N", "10^2"]) == 0
    assert json.loads(capsys.readouterr().out)["members"] == list(range(8, 101, 8))
    assert main(["bohr", "sublevel", "--measure", m, "--eps", "0.25", "--N", "16",
                 "--bitmap"]) == 0
    assert json.loads(capsys.readouterr().out)["bitmap"] == "0000000100000001"


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "rigiditylab", "--version"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "rigiditylab" in out.stdout
