import json
import math
from pathlib import Path

import pytest

from polybubble.cli import main
from polybubble.config import ConfigError, RunConfig, config_hash

ROOT = Path(__file__).resolve().parents[1]


def write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def base(**kw):
    doc = {"N": 5, "beta": 0.0, "potential": {"family": "well"}}
    doc.update(kw)
    return doc


def run(tmp_path, cmd, doc, *extra):
    out = tmp_path / "out"
    return main([cmd, "--config", write(tmp_path, doc), "--out", str(out), *extra]), out


# ---------------------------------------------------------------- config


def test_config_defaults_and_hash():
    a = RunConfig.from_dict(base())
    b = RunConfig.from_dict(base())
    assert a.hash == b.hash == config_hash(a.doc)
    assert a.doc["k_list"] == [6, 8, 12, 16, 24]
    assert a.override(seed=3).hash != a.hash


@pytest.mark.parametrize("doc", [
    {"N": 5, "beta": 0.0},
    base(N=4),
    base(potential={"family": "bowl"}),
    base(extra=1),
    base(kappa=2.0),
    base(potential={"family": "well", "params": {"y0_2": [0.0]}}),
    base(quadrature={"n_samples": 0}),
])
def test_config_rejections(doc):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(doc)


# ---------------------------------------------------------------- commands


def test_constants_beta0(tmp_path):
    code, out = run(tmp_path, "constants", base())
    assert code == 0
    rep = json.loads((out / "constants.json").read_text())
    assert rep["kappa"] == 1.0 and rep["s"] == pytest.approx(1.0, abs=1e-14)
    assert rep["constants"]["B_w"] == pytest.approx(15**1.5 * math.pi**3 / 2, rel=1e-8)
    assert rep["meta"]["config_hash"] and rep["meta"]["version"]


def test_constants_beta1_n6(tmp_path):
    code, out = run(tmp_path, "constants", {"N": 6, "beta": 1.0, "potential": {"family": "well"}})
    rep = json.loads((out / "constants.json").read_text())
    assert code == 0 and rep["s"] == pytest.approx(2 / 3, rel=1e-12)
    assert all(abs(r["residual"]) < 1e-9 for r in rep["kappa_roots"])


def test_corrupted_config_exit_2(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{ not json")
    assert main(["constants", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert run(tmp_path, "constants", base(N="five"))[0] == 2
    assert main(["constants", "--config", str(p)]) == 2
    assert run(tmp_path, "constants", base(), "--workers", "0")[0] == 2


def test_residual_scaling_usage(tmp_path):
    assert run(tmp_path, "residual-scaling", base(k_list=[]))[0] == 2
    code, out = run(tmp_path, "residual-scaling", base(k_list=[6], residual={"refine": 1}))
    assert code == 3
    assert (out / "residual_scaling.csv").exists()


def test_reduce_well(tmp_path):
    code, out = run(tmp_path, "reduce", base())
    rep = json.loads((out / "reduce.json").read_text())
    assert code == 0
    assert rep["state"]["t"] == pytest.approx(15 / 32, rel=1e-10)
    assert rep["degree"]["degree"] in (1, -1)
    assert rep["degree"]["stable_under_refinement"]


def test_reduce_constant_potential_exit_4(tmp_path):
    assert run(tmp_path, "reduce", base(potential={"family": "constant"}))[0] == 4


def test_reduce_seed_outside_box_exit_4(tmp_path):
    code, out = run(tmp_path, "reduce", base(reduce={"seed": [5.0, 1.0, 0.0, 0.0, 0.0]}))
    assert code == 4
    assert "outside" in json.loads((out / "reduce.json").read_text())["failure"]


def test_audit_lite_passes_and_is_deterministic(tmp_path):
    cfg = str(ROOT / "configs" / "audit_lite.json")
    assert main(["full-audit", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["full-audit", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "full_audit.json" in files and "pohozaev.csv" in files
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_changes_report(tmp_path):
    cfg = str(ROOT / "configs" / "audit_lite.json")
    main(["pohozaev", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["pohozaev", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "7"])
    a = json.loads((tmp_path / "a" / "pohozaev.json").read_text())
    b = json.loads((tmp_path / "b" / "pohozaev.json").read_text())
    assert b["meta"]["seed"] == 7 and a["meta"]["config_hash"] != b["meta"]["config_hash"]


def test_csv_header_comment(tmp_path):
    cfg = str(ROOT / "configs" / "audit_lite.json")
    main(["pohozaev", "--config", cfg, "--out", str(tmp_path)])
    first = (tmp_path / "pohozaev.csv").read_text().splitlines()[0]
    assert first.startswith("# config_hash=") and "seed=0" in first
