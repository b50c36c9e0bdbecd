import csv
import hashlib
import json
import subprocess
import sys

import jsonschema
import pytest
from conftest import oracle_s_hl

from choquard import cli
from choquard.config import ExperimentConfig
from choquard.errors import ConfigError


def _run(tmp_path, *argv, sub="out"):
    out = tmp_path / sub
    code = cli.main([*argv, "--out-dir", str(out)])
    return code, out


def _validate(path, schema):
    jsonschema.Draft202012Validator(cli.load_schema(schema)).validate(json.loads(path.read_text()))


# -- config -------------------------------------------------------------------


def test_text_roundtrip():
    c = ExperimentConfig(command="bubble-scan", dim=4, mu=2.0, lam=1.0, eps_grid=[0.4, 0.2], delta=0.8, plots=True)
    assert ExperimentConfig.from_text(c.to_text()) == c
    assert ExperimentConfig.from_json(c.to_json()) == c


def test_text_format_is_flat():
    text = ExperimentConfig(command="solve", seed=7).to_text()
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    assert all("=" in ln for ln in lines)
    assert "seed=7" in lines


@pytest.mark.parametrize(
    "bad",
    [
        {"command": "nope"},
        {"dim": 2},
        {"mu": 3.0},
        {"command": "bubble-scan", "eps_grid": []},
        {"command": "solve", "init": "field"},
        {"n": 2},
        {"command": "bench-riesz", "sizes": [8.5]},
    ],
)
def test_validation_rejects(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_mapping({**ExperimentConfig().__dict__, **bad}).validate()


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text("command=constants\nbogus=1\n")


# -- runs ---------------------------------------------------------------------


def test_constants_json(tmp_path, capsys):
    # [DERIVED] constants-module oracle
    code, out = _run(tmp_path, "constants", "--dim", "3", "--mu", "1", "--json")
    assert code == 0
    data = json.loads(capsys.readouterr().out)
    assert data["nonlocal_S_HL"] == pytest.approx(oracle_s_hl(3, 1.0), rel=1e-10)
    assert f"{data['nonlocal_S_HL']:.4f}" == "4.6398"
    assert json.loads((out / "constants.json").read_text()) == data
    _validate(out / "constants.json", "constants")
    _validate(out / "manifest.json", "manifest")


def test_empty_eps_grid_exit_3(tmp_path):
    # [TRIVIAL]
    code, out = _run(tmp_path, "bubble-scan", "--dim", "3", "--n", "17", "--eps-grid", "")
    assert code == cli.EXIT_CONFIG
    assert not (out / "manifest.json").exists()


def test_missing_init_field_is_io_error(tmp_path):
    code, _ = _run(tmp_path, "solve", "--n", "10", "--init", "field", "--init-field", str(tmp_path / "missing.chqf"))
    assert code == cli.EXIT_IO


def test_bubble_scan_deterministic(tmp_path):
    # [TRIVIAL] equal config and seed give equal bytes
    args = ["bubble-scan", "--dim", "3", "--mu", "1", "--n", "41", "--eps-grid", "0.25,0.2,0.15", "--seed", "3"]
    c1, a = _run(tmp_path, *args, sub="a")
    c2, b = _run(tmp_path, *args, "--threads", "2", sub="b")
    assert c1 == c2 == 0
    assert (a / "bubble_scan.csv").read_bytes() == (b / "bubble_scan.csv").read_bytes()
    with open(a / "bubble_scan.csv", newline="") as fh:
        header = next(csv.reader(fh))
    assert header == ["epsilon", "grad_sq", "l2_sq", "nl_double", "a_epsilon", "tail_D", "tail_E", "deficit"]


def _files(out):
    return {e["path"]: e for e in json.loads((out / "manifest.json").read_text())["files"]}


def test_manifest_hashes_stable(tmp_path):
    args = ["solve", "--dim", "3", "--n", "10", "--lambda", "2", "--max-iters", "15", "--seed", "4", "--init", "random"]
    # out_dir is part of the config, so both runs share it
    c1, a = _run(tmp_path, *args)
    first, fa = (a / "manifest.json").read_bytes(), _files(a)
    saved = {name: (a / name).read_bytes() for name in fa}
    c2, b = _run(tmp_path, *args)
    assert c1 == c2 == 0
    assert _files(b) == fa
    assert (b / "manifest.json").read_bytes() == first
    for name, entry in fa.items():
        raw = (a / name).read_bytes()
        assert raw == saved[name]
        assert hashlib.sha256(raw).hexdigest() == entry["sha256"] and len(raw) == entry["bytes"]
    _validate(a / "solve.json", "solve")
    _validate(a / "solve_field.chqf.json", "sidecar")


def test_field_dump_then_energy(tmp_path):
    code, out = _run(tmp_path, "field", "dump", str(tmp_path / "u.chqf"), "--n", "10", "--init", "gaussian")
    assert code == 0
    _validate(out / "field.json", "field")
    code, out = _run(tmp_path, "energy", "--field", str(tmp_path / "u.chqf"), "--lambda", "1.5", sub="e")
    assert code == 0
    _validate(out / "energy.json", "energy")


def test_spectrum_csv(tmp_path):
    code, out = _run(tmp_path, "spectrum", "--n", "12", "--k", "4")
    assert code == 0
    rows = list(csv.DictReader(open(out / "spectrum.csv", newline="")))
    assert [r["index"] for r in rows] == ["1", "2", "3", "4"]
    vals = [float(r["eigenvalue"]) for r in rows]
    # degenerate triples may come back a few ulps out of order
    assert all(b >= a * (1 - 1e-12) for a, b in zip(vals, vals[1:]))


def test_linking_and_nonexist_schemas(tmp_path):
    code, out = _run(tmp_path, "linking", "--dim", "3", "--n", "20", "--lambda", "25", "--eps", "0.215", "--starts", "4")
    assert code == 0
    _validate(out / "linking.json", "linking")
    code, out = _run(tmp_path, "nonexist", "--n", "10", "--starts", "2", "--max-iters", "20", sub="p")
    assert code == 0
    _validate(out / "nonexist.json", "nonexist")


def test_bench_riesz_csv(tmp_path):
    code, out = _run(tmp_path, "bench-riesz", "--sizes", "8,10", "--repeats", "1")
    assert code == 0
    header = (out / "bench_riesz.csv").read_text().splitlines()[0]
    assert header == "size,path,wall_ns_median,max_rel_err_vs_direct"


def test_all_schemas_are_valid_documents():
    for stem in set(cli.SCHEMAS.values()):
        jsonschema.Draft202012Validator.check_schema(cli.load_schema(stem))


def test_help_lists_every_subcommand():
    text = cli.build_parser().format_help()
    for name in ("constants", "field", "spectrum", "energy", "bubble-scan", "solve", "linking", "nonexist", "bench-riesz"):
        assert name in text
    for flag in ("--threads", "--seed", "--out-dir"):
        assert flag in text


def test_module_entry_point(tmp_path):
    r = subprocess.run(
        [sys.executable, "-m", "choquard.cli", "constants", "--dim", "4", "--mu", "2", "--out-dir", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert r.returncode == 0, r.stderr
    assert json.loads((tmp_path / "constants.json").read_text())["dim"] == 4
