import csv
import json

import numpy as np
import pytest
from pydantic import ValidationError

from spiralflow import anisotropy as an
from spiralflow.cli import main, shrink_report
from spiralflow.scenario import (Scenario, ScenarioError, apply_overrides, load, preset_data,
                                 preset_names)

PRESETS = ["unit-triangle", "square-corotating", "triple-spiral", "pentagon-merge",
           "pentagon-merge-2", "center-facet", "pentagon-square-mix", "triangle-interlace",
           "illusory-loop", "illusory-spiral"]
FAST = ["--set", "domain.dx=0.05", "--set", "time.T=0.02", "--set", "time.snapshots=[0,0.01,0.02]"]


def test_all_presets_ship_and_validate():
    assert sorted(PRESETS) == preset_names()
    for name in PRESETS:
        sc = load(name)
        assert sc.name == name
        sc.grid()
        if sc.layers is not None:
            sc.layer_spec().check_grid(sc.grid())


def test_malformed_anisotropy_names_the_field(tmp_path, capsys):
    data = preset_data("unit-triangle")
    data["anisotropy"] = {"normals": [[1, 0], [0, 1]]}
    with pytest.raises(ValidationError) as err:
        load_dict(data)
    assert "anisotropy.normals" in ".".join(str(p) for p in err.value.errors()[0]["loc"])
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    assert main(["run", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "anisotropy.normals" in capsys.readouterr().err


def load_dict(data):
    return Scenario.model_validate(data)


def test_unknown_keys_and_overrides():
    data = preset_data("unit-triangle")
    with pytest.raises(ValidationError):
        load_dict({**data, "colour": "red"})
    out = apply_overrides(data, ["domain.s=2", "time.T=0.1", "centers.0.x=0.25", "name=abc"])
    assert out["domain"]["s"] == 2 and out["time"]["T"] == 0.1
    assert out["centers"][0]["x"] == 0.25 and out["name"] == "abc"
    assert data["time"]["T"] == 0.4
    with pytest.raises(ScenarioError):
        apply_overrides(data, ["nonsense"])
    assert main(["run", "no-such-preset"]) == 2


def test_mode_constraints():
    data = preset_data("unit-triangle")
    with pytest.raises(ValidationError):
        load_dict({**data, "centers": [{"x": 0, "y": 0, "m": 2}]})
    inter = preset_data("triangle-interlace")
    with pytest.raises(ValidationError):
        load_dict({**inter, "centers": [{"x": 0, "y": 0, "m": 1}]})


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_compare_smoke_run(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", "unit-triangle", *FAST, "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["scenario"]["domain"]["dx"] == 0.05
    assert len(man["snapshots"]) >= 4
    rows = read_csv(out / "metrics.csv")
    t = [float(r["t"]) for r in rows]
    assert t == sorted(t) and len(t) == 3
    assert float(rows[0]["A"]) < 0.05
    diag = read_csv(out / "diagnostics.csv")
    assert len(diag) == 10
    snap = read_csv(out / "snapshots" / man["snapshots"][-1])
    assert {"polyline", "closed", "vertex", "x", "y", "t"} <= set(snap[0])
    # reruns are byte-identical
    again = tmp_path / "again"
    assert main(["run", "unit-triangle", *FAST, "--out", str(again)]) == 0
    assert (out / "metrics.csv").read_bytes() == (again / "metrics.csv").read_bytes()


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv("SPIRALFLOW_OUTPUT_ROOT", str(tmp_path))
    args = ["run", "triangle-interlace", "--set", "domain.dx=0.1", "--set", "time.T=0.004",
            "--set", "time.snapshots=[]"]
    assert main(args) == 0
    assert (tmp_path / "runs" / "triangle-interlace" / "manifest.json").exists()


def test_solver_failure_exit_code(tmp_path):
    args = ["run", "unit-triangle", *FAST, "--set", "solver.max_outer=1",
            "--out", str(tmp_path / "x")]
    assert main(args) == 3


def test_io_failure_exit_code(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", "unit-triangle", *FAST, "--out", str(blocker / "sub")]) == 5


@pytest.mark.slow
def test_unit_triangle_smoke_at_standard_resolution(tmp_path):
    out = tmp_path / "s1"
    assert main(["run", "unit-triangle", "--set", "time.T=0.1",
                 "--set", "time.snapshots=[0,0.05,0.1]", "--out", str(out)]) == 0
    rows = read_csv(out / "metrics.csv")
    assert len(rows) >= 2 and float(rows[0]["A"]) < 0.05


def test_shrink_test_command(capsys):
    assert main(["shrink-test", "--anisotropy", "square", "--trials", "200",
                 "--mu", "0.01", "1", "100"]) == 0
    assert "max deviation" in capsys.readouterr().out
    rep = shrink_report(an.square(), 1000, 0)
    assert rep["over_slack"] == 0 and rep["max_objective_excess"] < 1e-3
    # y = z returns z
    z = np.array([0.3, -0.7])
    for a in (an.square(), an.triangle(), an.pentagon()):
        assert np.array_equal(an.shrink(a, z, z, 1.0), z)


def test_list_presets(capsys):
    assert main(["list-presets"]) == 0
    out = capsys.readouterr().out
    for name in PRESETS:
        assert name in out
