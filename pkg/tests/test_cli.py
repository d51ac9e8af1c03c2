import json
import subprocess
import sys

import jsonschema
import pytest

from qldlab import cli

SCHEMA_DIR = "docs"


def run_cli(args):
    return cli.main(args)


def test_list_contains_registry(capsys):
    assert run_cli(["list"]) == 0
    out = capsys.readouterr().out
    for name in ("haar", "stabilizer", "brickwork", "gibbs-gue", "gibbs-rsps",
                 "biclique", "comp-basis", "edge-count"):
        assert name in out


def test_list_filter(capsys):
    run_cli(["list", "--filter", "gibbs"])
    out = capsys.readouterr().out
    assert "gibbs-gue" in out and "brickwork" not in out


def test_design_check_example(tmp_path, capsys):
    out = tmp_path / "report.json"
    code = run_cli(["design-check", "--ensemble", "stabilizer:n=1", "--k", "3",
                    "--mode", "exact", "--seed", "1", "--out", str(out),
                    "--format", "json"])
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["epsilon"] < 1e-12
    with open(f"{SCHEMA_DIR}/design_report.schema.json") as fh:
        jsonschema.validate(doc, json.load(fh))


def test_advantage_example(tmp_path, capsys):
    out = tmp_path / "adv.json"
    code = run_cli(["advantage", "--ensemble", "point:zero-state,n=1",
                    "--plan", "comp-basis,m=1", "--k", "1", "--seed", "1",
                    "--out", str(out), "--format", "json"])
    assert code == 0
    summary = capsys.readouterr().out
    assert "total=1" in summary
    doc = json.loads(out.read_text())
    assert doc["total"] == pytest.approx(1.0)
    with open(f"{SCHEMA_DIR}/advantage_report.schema.json") as fh:
        jsonschema.validate(doc, json.load(fh))


def test_malformed_descriptor_exit1(capsys):
    code = run_cli(["advantage", "--ensemble", "bogus:n=1",
                    "--plan", "comp-basis,m=1", "--k", "1", "--seed", "1"])
    assert code == 1
    assert "bogus" in capsys.readouterr().err


def test_missing_field_exit1(capsys):
    code = run_cli(["advantage", "--ensemble", "haar:n=1",
                    "--plan", "comp-basis", "--k", "1", "--seed", "1"])
    assert code == 1
    assert "m" in capsys.readouterr().err


def test_missing_seed_exit1(capsys):
    code = run_cli(["advantage", "--ensemble", "haar:n=1",
                    "--plan", "comp-basis,m=1", "--k", "1"])
    assert code == 1
    assert "seed" in capsys.readouterr().err


def test_resource_cap_exit2(capsys):
    code = run_cli(["design-check", "--ensemble", "haar:n=8", "--k", "3",
                    "--seed", "1"])
    assert code == 2


def test_config_file_with_overrides(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"ensemble": "stabilizer:n=1", "k": 3,
                               "mode": "exact", "seed": 5}))
    out = tmp_path / "r.json"
    code = run_cli(["design-check", "--config", str(cfg), "--k", "4",
                    "--out", str(out), "--format", "json"])
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["order"] == 4 and doc["epsilon"] > 1e-3


def test_config_parse_error(tmp_path, capsys):
    cfg = tmp_path / "broken.json"
    cfg.write_text("{not json")
    code = run_cli(["design-check", "--config", str(cfg), "--seed", "1"])
    assert code == 1
    assert "line" in capsys.readouterr().err


def test_biclique_power_csv_header(tmp_path):
    out = tmp_path / "p.csv"
    code = run_cli(["biclique-power", "--n", "8", "--lambdas", "2,4",
                    "--trials", "20", "--seed", "3", "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "n,d,lambda,m,detector,trials,power,ci_low,ci_high,seed"
    assert len(lines) == 3


def test_biclique_power_json_schema(tmp_path):
    out = tmp_path / "p.json"
    run_cli(["biclique-power", "--n", "8", "--lambdas", "2,4", "--trials", "20",
             "--seed", "3", "--out", str(out), "--format", "json"])
    doc = json.loads(out.read_text())
    with open(f"{SCHEMA_DIR}/phase_diagram.schema.json") as fh:
        jsonschema.validate(doc, json.load(fh))


def test_biclique_mass_csv(tmp_path):
    out = tmp_path / "mass.csv"
    code = run_cli(["biclique-mass", "--n", "2", "--m", "2", "--lam", "1",
                    "--wmax", "2", "--seed", "2", "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "positions,size,mu"
    # |W| = 1 rows are exactly zero
    for line in lines[1:]:
        pos, size, mu = line.split(",")
        if size == "1":
            assert float(mu) == 0.0


def test_haar_verify_passes(tmp_path):
    out = tmp_path / "checks.csv"
    code = run_cli(["haar-verify", "--seed", "2", "--samples", "4000",
                    "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "check,value,bound,passed"
    assert all(line.rsplit(",", 1)[1] == "1" for line in lines[1:])


def test_mitigation_subcommand(tmp_path):
    out = tmp_path / "mit.csv"
    code = run_cli(["mitigation", "--n", "3", "--l", "2", "--kappa", "0.3",
                    "--trials", "40", "--seed", "4", "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "quantity,value,bound,passed"


def test_json_artifacts_validate_against_schemas(tmp_path):
    with open(f"{SCHEMA_DIR}/audit_rows.schema.json") as fh:
        audit_schema = json.load(fh)
    with open(f"{SCHEMA_DIR}/mass_table.schema.json") as fh:
        mass_schema = json.load(fh)
    mit = tmp_path / "mit.json"
    run_cli(["mitigation", "--n", "3", "--l", "1", "--kappa", "0.5",
             "--trials", "20", "--seed", "4", "--out", str(mit),
             "--format", "json"])
    jsonschema.validate(json.loads(mit.read_text()), audit_schema)
    hv = tmp_path / "hv.json"
    run_cli(["haar-verify", "--seed", "2", "--samples", "2000",
             "--out", str(hv), "--format", "json"])
    jsonschema.validate(json.loads(hv.read_text()), audit_schema)
    mass = tmp_path / "mass.json"
    run_cli(["biclique-mass", "--n", "2", "--m", "2", "--lam", "1",
             "--wmax", "2", "--seed", "2", "--out", str(mass),
             "--format", "json"])
    jsonschema.validate(json.loads(mass.read_text()), mass_schema)


@pytest.mark.parametrize("args", [
    ["design-check", "--ensemble", "stabilizer:n=2", "--k", "3", "--mode", "exact"],
    ["biclique-power", "--n", "16", "--lambdas", "4,8,12", "--trials", "60"],
    ["advantage", "--ensemble", "stabilizer:n=1", "--plan", "local-haar,m=2", "--k", "2"],
])
def test_byte_identical_across_thread_counts(tmp_path, args):
    paths = []
    for threads in ("1", "4"):
        out = tmp_path / f"out-{threads}.csv"
        fig = tmp_path / f"fig-{threads}.png"
        code = run_cli(args + ["--seed", "77", "--out", str(out),
                               "--fig", str(fig), "--threads", threads])
        assert code == 0
        paths.append((out.read_bytes(), fig.read_bytes()))
    assert paths[0][0] == paths[1][0]
    assert paths[0][1] == paths[1][1]


def test_entry_point_subprocess():
    proc = subprocess.run(
        [sys.executable, "-m", "qldlab.cli", "design-check", "--ensemble",
         "haar:d=2", "--k", "2", "--seed", "1"],
        capture_output=True, text=True)
    assert proc.returncode == 0
    assert "eps=" in proc.stdout


def test_atomic_write_replaces(tmp_path):
    out = tmp_path / "x.csv"
    out.write_text("old")
    run_cli(["biclique-mass", "--n", "2", "--m", "1", "--lam", "1",
             "--wmax", "1", "--seed", "2", "--out", str(out)])
    content = out.read_text()
    assert content.startswith("positions,") and "old" not in content
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".tmp-")]


def test_haar_verify_exit3_on_failed_check(tmp_path, capsys):
    # starving the moment check of samples makes its 0.02 tolerance fail
    code = run_cli(["haar-verify", "--seed", "1", "--samples", "40"])
    assert code == 3
    assert "AUDIT FAILED" in capsys.readouterr().err


def test_advantage_mode_exact(tmp_path, capsys):
    code = run_cli(["advantage", "--ensemble", "point:zero-state,n=1",
                    "--plan", "comp-basis,m=1", "--k", "1", "--mode", "exact",
                    "--seed", "1"])
    assert code == 0
    assert "total=1" in capsys.readouterr().out
    code = run_cli(["advantage", "--ensemble", "gibbs-gue:n=2",
                    "--plan", "comp-basis,m=2", "--k", "1", "--mode", "exact",
                    "--seed", "1"])
    assert code == 1


def test_remaining_figure_paths(tmp_path):
    fig1 = tmp_path / "mit.png"
    code = run_cli(["mitigation", "--n", "3", "--l", "2", "--kappa", "0.3",
                    "--trials", "20", "--seed", "4", "--fig", str(fig1)])
    assert code == 0 and fig1.stat().st_size > 0
    fig2 = tmp_path / "mass.png"
    code = run_cli(["biclique-mass", "--n", "2", "--m", "2", "--lam", "1",
                    "--wmax", "2", "--seed", "2", "--fig", str(fig2)])
    assert code == 0 and fig2.stat().st_size > 0
