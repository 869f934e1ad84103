from __future__ import annotations

import csv
import json
import math
import xml.etree.ElementTree as ET
from importlib import resources
from pathlib import Path

import jsonschema
import pytest

from liouvillelab.cli import RunConfig, load_config, main, run, svg_line_plot
from liouvillelab.errors import ConfigError

PI = math.pi
SVG_NS = "{http://www.w3.org/2000/svg}"


def schema(name: str) -> dict:
    return json.loads(resources.files("liouvillelab").joinpath(f"schemas/{name}.schema.json").read_text())


def write_config(tmp_path: Path, d: dict, name: str = "config.json") -> Path:
    p = tmp_path / name
    p.write_text(json.dumps(d, indent=2))
    return p


SIGNED = {"name": "sinh_gordon_signed", "rho": 2 * PI, "a": 1.0}

VERIFY_CONFIG = {
    "domain": "unit-disk",
    "problem": {"variant": SIGNED},
    "mesh": {"target_h": 0.2},
    "seed": 3,
    "experiments": [
        {"id": "uniq", "kind": "uniqueness", "K": 6},
        {"id": "sym", "kind": "symmetry", "K": 4},
        {"id": "bol", "kind": "bol", "problem": {"variant": {"name": "gelfand", "rho": 1.0}}, "radius": 0.5},
        {"id": "fold", "kind": "fold"},
        {"id": "trivial", "kind": "trivial_branch"},
        {"id": "toda", "kind": "toda_collapse", "K": 4,
         "problem": {"variant": {"name": "toda", "A": 2, "A_prime": 1, "B": 1, "B_prime": 2}}},
        {"id": "sweep", "kind": "threshold_sweep", "param": "rho", "grid": [PI, 2 * PI, 3 * PI], "K": 4},
    ],
}


# ------------------------------------------------------------------ config
def test_config_schema_accepts_example():
    jsonschema.validate(VERIFY_CONFIG, schema("config"))


def test_config_errors_are_collected():
    with pytest.raises(ConfigError) as exc:
        RunConfig.from_dict({"bogus": 1, "seed": -1, "mesh": {"target_h": 0}, "experiments": [{"kind": "nope"}]})
    msg = str(exc.value)
    for frag in ("bogus: unknown field", "seed:", "mesh.target_h", "experiments[0].kind"):
        assert frag in msg


def test_seed_range():
    RunConfig.from_dict({"seed": 2 ** 64 - 1})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"seed": 2 ** 64})


def test_missing_mesh_file(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        load_config(write_config(tmp_path, {"mesh": {"file": "nowhere.json"}}))


def test_toml_front_end_matches_json(tmp_path):
    toml = tmp_path / "c.toml"
    toml.write_text('seed = 3\n[mesh]\ntarget_h = 0.2\n[problem.variant]\nname = "gelfand"\nrho = 1.0\n')
    js = write_config(tmp_path, {"seed": 3, "mesh": {"target_h": 0.2},
                                 "problem": {"variant": {"name": "gelfand", "rho": 1.0}}})
    a, b = load_config(toml), load_config(js)
    assert a.digest == b.digest
    assert a.problem == b.problem


def test_bad_json_reports_line_and_column(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "seed": 1,\n  "mesh": {target_h: 0.1}\n}\n')
    assert main(["verify", "--config", str(p), "--quiet"]) == 2
    assert "bad.json:3:" in capsys.readouterr().err


# ---------------------------------------------------------------- run/verify
@pytest.fixture(scope="module")
def verify_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("verify")
    cfg = write_config(tmp, VERIFY_CONFIG)
    status = main(["verify", "--config", str(cfg), "--out", str(tmp / "a"), "--quiet"])
    return tmp, cfg, status


def test_verify_exit_and_manifest(verify_run):
    tmp, _, status = verify_run
    assert status == 0
    man = json.loads((tmp / "a" / "manifest.json").read_text())
    jsonschema.validate(man, schema("manifest"))
    assert man["errors"] == {}
    assert man["exit_status"] == 0
    assert set(man["verdicts"].values()) <= {"consistent", "inconclusive"}
    for p in man["reports"].values():
        assert Path(p).exists()
    for paths in man["artifacts"].values():
        assert all(Path(p).exists() for p in paths)
    rows = list(csv.DictReader(open(tmp / "a" / "summary.csv")))
    assert {r["experiment"] for r in rows} == set(man["reports"])
    assert set(rows[0]) == {"experiment", "theorem", "margin", "verdict", "runtime"}


def test_reports_validate_against_schema(verify_run):
    tmp, _, _ = verify_run
    reports = sorted((tmp / "a" / "reports").glob("*.json"))
    assert reports
    for p in reports:
        d = json.loads(p.read_text())
        jsonschema.validate(d, schema("report"))
        assert "runtime" not in d
    for p in (tmp / "a" / "sweeps").glob("*.json"):
        jsonschema.validate(json.loads(p.read_text()), schema("sweep"))


def test_verify_artifacts(verify_run):
    tmp, _, _ = verify_run
    out = tmp / "a"
    assert (out / "traces" / "fold.csv").exists()
    root = ET.parse(out / "plots" / "fold.svg").getroot()
    assert root.tag == SVG_NS + "svg"
    sweep = json.loads((out / "sweeps" / "sweep.json").read_text())
    assert [r["n_clusters"] for r in sweep["rows"]] == [1, 1, 1]


def test_rerun_is_byte_identical(verify_run):
    tmp, cfg, _ = verify_run
    assert main(["verify", "--config", str(cfg), "--out", str(tmp / "b"), "--quiet", "--jobs", "3"]) == 0
    for p in sorted((tmp / "a" / "reports").glob("*.json")):
        assert p.read_bytes() == (tmp / "b" / "reports" / p.name).read_bytes(), p.name
    for sub in ("traces", "sweeps", "plots"):
        for p in sorted((tmp / "a" / sub).glob("*")):
            assert p.read_bytes() == (tmp / "b" / sub / p.name).read_bytes(), p.name


def test_verify_single_experiment(verify_run):
    tmp, cfg, _ = verify_run
    assert main(["verify", "--config", str(cfg), "--out", str(tmp / "c"), "--experiment", "uniq", "--quiet"]) == 0
    man = json.loads((tmp / "c" / "manifest.json").read_text())
    assert list(man["reports"]) == ["uniq"]
    assert main(["verify", "--config", str(cfg), "--out", str(tmp / "c"), "--experiment", "none", "--quiet"]) == 2


def test_imbalanced_toda_is_recorded(tmp_path):
    cfg = {"mesh": {"target_h": 0.2}, "problem": {"variant": {"name": "toda", "A": 2, "A_prime": 2, "B": 1,
                                                              "B_prime": 2}},
           "experiments": [{"id": "t", "kind": "toda_collapse", "K": 2}]}
    man = run(RunConfig.from_dict(cfg), str(tmp_path / "o"))
    assert "ConditionViolatedError" in man.errors["t"]
    assert man.exit_status == 1
    assert main(["verify", "--config", str(write_config(tmp_path, cfg)), "--out", str(tmp_path / "p"),
                 "--quiet"]) == 1


def test_empty_experiment_list(tmp_path):
    assert main(["verify", "--config", str(write_config(tmp_path, {"experiments": []})), "--out",
                 str(tmp_path / "o"), "--quiet"]) == 0
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["reports"] == {} and man["exit_status"] == 0


# ---------------------------------------------------------------- commands
def test_solve_signed_gives_zero_field(tmp_path):
    cfg = write_config(tmp_path, {"problem": {"variant": SIGNED}, "mesh": {"target_h": 0.2}})
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "s"), "--quiet"]) == 0
    snap = json.loads((tmp_path / "s" / "field.json").read_text())
    jsonschema.validate(snap, schema("field"))
    assert all(v == 0.0 for v in snap["fields"][0])
    assert snap["result"]["converged"]


def test_plot_profile_csv(tmp_path):
    cfg = write_config(tmp_path, {"problem": {"variant": {"name": "gelfand", "rho": 1.0}}, "mesh": {"target_h": 0.2}})
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "s"), "--quiet"]) == 0
    prof = tmp_path / "s" / "profile.csv"
    assert main(["plot", str(prof), "--quiet"]) == 0
    root = ET.parse(prof.with_suffix(".svg")).getroot()
    assert root.tag == SVG_NS + "svg"
    assert len(list(root.iter(SVG_NS + "polyline"))) == 1
    assert len(list(root.iter(SVG_NS + "line"))) >= 2  # axes
    assert main(["plot", str(tmp_path / "s" / "field.json"), "--out", str(tmp_path / "plots"), "--quiet"]) == 0
    assert (tmp_path / "plots" / "field.svg").exists()


def test_svg_is_deterministic():
    a = svg_line_plot([("y", [0, 1, 2], [0, 1, 4])], "x", "y", "t")
    assert a == svg_line_plot([("y", [0, 1, 2], [0, 1, 4])], "x", "y", "t")
    ET.fromstring(a)


def test_mesh_command(tmp_path):
    assert main(["mesh", "--domain", "unit-disk", "--target-h", "0.2", "--refine", "1", "--out", str(tmp_path),
                 "--quiet"]) == 0
    d = json.loads((tmp_path / "mesh.json").read_text())
    jsonschema.validate(d, schema("mesh"))
    assert main(["mesh", "--domain", '{"shape": "ellipse", "params": [1.3, 0.8]}', "--target-h", "0.2", "--out",
                 str(tmp_path / "e"), "--quiet"]) == 0


def test_sweep_command(tmp_path):
    cfg = write_config(tmp_path, {"problem": {"variant": SIGNED}, "mesh": {"target_h": 0.2},
                                  "experiments": [{"id": "sw", "kind": "threshold_sweep", "param": "rho",
                                                   "start": PI, "stop": 2 * PI, "step": PI / 2, "K": 3}]})
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"]) == 0
    d = json.loads((tmp_path / "o" / "sweeps" / "sw.json").read_text())
    assert len(d["rows"]) == 3


@pytest.mark.parametrize("argv", [["bogus"], ["verify", "--nope"], ["verify"], [], ["suite", "--seed", "-1"],
                                  ["suite", "--jobs", "0"]])
def test_usage_errors_exit_2(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err
