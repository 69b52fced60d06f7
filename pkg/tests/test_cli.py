import json
from pathlib import Path

import pytest

from attrition_lab import cli, oracle

SMALL = ["simulate.n=400", "simulate.deviation_n=100", "oracle.tables.random=2", "oracle.tables.corners=false",
         "witness.n=5000", "witness.informative_n=500", "witness.L=[2]"]


def run(tmp_path, command, *extra, config=None, name="out"):
    out = tmp_path / name
    code = cli.run(command, config, str(out), overrides=list(SMALL) + list(extra))
    return code, out


def test_design_csv(tmp_path):
    code, out = run(tmp_path, "design")
    assert code == 0
    lines = (out / "scheme.csv").read_text().splitlines()
    assert lines[0] == "k,q,RH,RL,Q,work,fabricate,margin,min_ic_margin"
    assert lines[2] == "2,1/2,28/13,28/13,4,0,0,0,0"
    assert json.loads((out / "design.json").read_text())["Q"] == "4"
    assert (out / "scheme.png").read_bytes()[:4] == b"\x89PNG"


def test_thresholds_bounded_certificate(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("supply:\n  kind: pmf\n  weights: ['1/3', '1/3', '1/3']\n")
    code, out = run(tmp_path, "thresholds", config=str(cfg))
    assert code == 0
    res = json.loads((out / "thresholds.json").read_text())
    assert res["certificate"]["verdict"] == "IMPOSSIBLE-bounded-support"
    assert res["constants"]["sqrtG"] == "128000"


def test_invalid_config_exit_1(tmp_path):
    code, out = run(tmp_path, "grid", "grid.p_lo=3/5")
    assert code == 1
    err = json.loads((out / "errors.json").read_text())
    assert err["exit_code"] == 1 and err["errors"][0]["stage"] == "config"
    bad = tmp_path / "bad.yaml"
    bad.write_text("nonsense: 1\n")
    assert run(tmp_path, "grid", config=str(bad), name="b")[0] == 1


def test_infeasible_design_exit_2(tmp_path):
    code, out = run(tmp_path, "design", "scheme.Q=2")
    assert code == 2
    assert json.loads((out / "errors.json").read_text())["errors"][0]["stage"] == "design"


def test_oracle_blood_test(tmp_path):
    code, out = run(tmp_path, "oracle")
    assert code == 0
    certs = json.loads((out / "certificates.json").read_text())
    assert certs["informative_tables"] == []
    assert all(not c["informative"] for e in certs["certificates"] for c in e["certificates"])
    assert not (out / "errors.json").exists()


def test_planted_informative_certificate_exit_2(tmp_path, monkeypatch):
    real = oracle.enumerate_equilibria

    def planted(game, *a, **kw):
        certs = real(game, *a, **kw)
        certs[0].informative = True
        return certs

    monkeypatch.setattr(oracle, "enumerate_equilibria", planted)
    code, out = run(tmp_path, "oracle")
    assert code == 2
    err = json.loads((out / "errors.json").read_text())
    assert err["errors"][0]["stage"] == "oracle"


def test_all_is_deterministic(tmp_path):
    code_a, a = run(tmp_path, "all", name="a")
    code_b, b = run(tmp_path, "all", name="b")
    assert code_a == code_b == 0
    files = sorted(p.name for p in a.iterdir())
    for name in files:
        if name != "manifest.json":
            assert (a / name).read_bytes() == (b / name).read_bytes(), name
    ma, mb = (json.loads((d / "manifest.json").read_text()) for d in (a, b))
    ma.pop("wall_clock_s"), mb.pop("wall_clock_s")
    assert ma == mb
    report = json.loads((a / "report.json").read_text())
    assert report["cross"]["Q"] == "4" and report["schema"].endswith("/1")
    assert (a / "report.csv").read_text().startswith("key,value\n")


def test_jobs_do_not_change_outputs(tmp_path):
    out1 = tmp_path / "j1"
    out2 = tmp_path / "j2"
    assert cli.run("simulate", None, str(out1), jobs=1, overrides=SMALL) == 0
    assert cli.run("simulate", None, str(out2), jobs=2, overrides=SMALL) == 0
    for name in ("simulate.json", "simulate.csv", "report.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_empty_simulation_report(tmp_path):
    code, out = run(tmp_path, "simulate", "simulate.n=0", "simulate.deviation_n=0")
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["simulation"]["stats"]["exit_top"] is None


def test_witness_outputs(tmp_path):
    code, out = run(tmp_path, "witness")
    assert code == 0
    rows = (out / "witness.csv").read_text().splitlines()
    assert rows[0] == "check,value,se,bound,holds"
    assert any(r.startswith("uniform pair collision (exact),19/100") for r in rows)


def test_main_and_env(tmp_path, monkeypatch):
    monkeypatch.setenv("ATTRITION_LAB_OUT", str(tmp_path / "env"))
    monkeypatch.setenv("ATTRITION_LAB_SEED", "5")
    assert cli.main(["grid"]) == 0
    man = json.loads((tmp_path / "env" / "manifest.json").read_text())
    assert man["seed"] == 5 and "grid.csv" in man["outputs"]
    with pytest.raises(SystemExit):
        cli.main(["bogus"])
