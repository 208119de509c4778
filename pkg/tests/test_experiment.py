import io
import json

import numpy as np
import pytest

from losstomo.cli import main, split_suite
from losstomo.estimators import EstimatorId
from losstomo.experiment import (DEFAULT_SIZES, ExperimentConfig, ExperimentResult, column_names, emit_table,
                                 preset, run_experiment)
from losstomo.simulate import read_trace
from losstomo.tree import save_tree, star_tree


def test_default_sizes():
    assert DEFAULT_SIZES == (300, 600, 900, 1200, 1500, 1800, 2100, 2400, 2700, 3000, 4800, 9900)


def test_config_validation():
    t, suite = preset("uniform")
    with pytest.raises(ValueError):
        ExperimentConfig(t, [0], 1, suite)
    with pytest.raises(ValueError):
        ExperimentConfig(t, [100], 0, suite)
    with pytest.raises(ValueError):
        ExperimentConfig(t, [100], 1, [])
    with pytest.raises(ValueError):
        ExperimentConfig(t, [100], 1, suite, node=2)
    with pytest.raises(ValueError):
        preset("nope")


def test_preset_suite_order():
    _, suite = preset("mixed")
    assert column_names(suite) == ["Full", "Pair", "Triple", "SinglePair", "SingleTriple"]
    assert suite[3] == EstimatorId.local((2, 8)) and suite[4] == EstimatorId.local((2, 3, 8))


def test_deterministic_bytes():
    t, suite = preset("uniform")
    cfg = ExperimentConfig(t, [300, 600], 5, suite, seed=3)
    a = emit_table(run_experiment(cfg), "csv")
    b = emit_table(run_experiment(cfg), "csv")
    assert a == b
    assert emit_table(run_experiment(cfg), "markdown") == emit_table(run_experiment(cfg), "markdown")


def test_lossless_single_replication():
    t = star_tree([1.0] * 8, 1.0)
    res = run_experiment(ExperimentConfig(t, [300, 900], 1))
    assert all(c.mean == 0.0 and c.var == 0.0 for c in res.cells)


def test_csv_header():
    t, suite = preset("uniform")
    text = emit_table(run_experiment(ExperimentConfig(t, [300], 2, suite)), "csv")
    lines = text.splitlines()
    assert lines[0] == "n,estimator,mean,var"
    assert [ln.split(",")[1] for ln in lines[1:]] == ["Full", "Pair", "Triple", "SinglePair", "SingleTriple"]


def test_markdown_shape():
    t, suite = preset("uniform")
    text = emit_table(run_experiment(ExperimentConfig(t, DEFAULT_SIZES, 2, suite)), "markdown")
    lines = text.splitlines()
    assert len(lines) == 2 + 12
    assert lines[0].count("|") == 2 + 2 * 5
    assert all(ln.count("|") == 2 + 2 * 5 for ln in lines[2:])
    assert lines[0].startswith("| samples | Full Mean | Full Var | Pair Mean")


def test_empty_result_refused(tmp_path):
    t, suite = preset("uniform")
    cfg = ExperimentConfig(t, [300], 1, suite)
    dest = tmp_path / "out.csv"
    with pytest.raises(ValueError):
        emit_table(ExperimentResult(cfg, []), "csv", dest)
    assert not dest.exists()
    with pytest.raises(ValueError):
        emit_table(run_experiment(cfg), "xml")


def test_emit_to_file(tmp_path):
    t, suite = preset("uniform")
    res = run_experiment(ExperimentConfig(t, [300], 2, suite))
    dest = tmp_path / "t.md"
    text = emit_table(res, "markdown", dest)
    assert dest.read_text() == text


def test_invalid_cells_marked():
    # a node with two silent-ish descendants at tiny n: some replications cannot be estimated
    t = star_tree([0.05, 0.05, 0.05], 0.9)
    res = run_experiment(ExperimentConfig(t, [5], 3, [EstimatorId.composite(3)]))
    c = res.cells[0]
    assert c.n_valid < 3
    if c.n_valid == 0:
        assert "invalid" in emit_table(res, "csv")


def test_mixed_losses_local_pair_noisier():
    t, suite = preset("mixed")
    res = run_experiment(ExperimentConfig(t, [300], 200, suite, seed=1))
    assert res.cell(300, suite[3]).var >= res.cell(300, suite[1]).var


def test_variance_shrinks_with_n():
    t, suite = preset("uniform")
    res = run_experiment(ExperimentConfig(t, [300, 9900], 40, suite, seed=2))
    for eid in suite:
        assert res.cell(9900, eid).var < res.cell(300, eid).var


def test_missing_data_experiment():
    t, suite = preset("uniform")
    res = run_experiment(ExperimentConfig(t, [3000], 5, [EstimatorId.weighted(2)], missing=0.1))
    assert abs(res.cells[0].mean - 0.01) < 0.01


# -- command line -----------------------------------------------------------------

def test_split_suite():
    assert split_suite("full,pair,local(2,3),grouped(2,3|4,5)") == [
        EstimatorId.full(), EstimatorId.composite(2), EstimatorId.local((2, 3)),
        EstimatorId.grouped((2, 3), (4, 5))]


def test_cli_simulate_and_estimate(tmp_path, capsys):
    topo = tmp_path / "topo.json"
    save_tree(star_tree([0.95, 0.9, 0.97], 0.9), topo)
    trace = tmp_path / "trace.csv"
    assert main(["simulate", "--topology", str(topo), "--n", "500", "--seed", "1", "--out", str(trace)]) == 0
    tr = read_trace(trace)
    assert tr.n == 500 and tr.receivers == (2, 3, 4)
    out = tmp_path / "est.tsv"
    assert main(["estimate", "--topology", str(topo), "--trace", str(trace), "--suite", "pair,local(2,3)",
                 "--out", str(out)]) == 0
    text = out.read_text()
    assert text.startswith("node\testimator") and "local(2,3)" in text


def test_cli_simulate_missing_stdout(capsys):
    assert main(["simulate", "--topology", "uniform", "--n", "50", "--missing", "0.3"]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "2,3,4,5,6,7,8,9" and "?" in out


def test_cli_experiment_markdown(capsys):
    assert main(["experiment", "--topology", "uniform", "--n", "300,600", "--reps", "2",
                 "--format", "markdown"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 4 and "SingleTriple Mean" in lines[0]


def test_cli_experiment_custom_suite(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["experiment", "--topology", "lossy-root", "--n", "300", "--reps", "2",
                 "--suite", "full,weighted(2)", "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "n,estimator,mean,var" and len(rows) == 3


def test_cli_variance(capsys):
    assert main(["variance", "--topology", "uniform", "--suite", "pair,full"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "i\tv_exact\ts_k\tresidual\tempirical_ratio"
    assert lines[1].startswith("composite(2)\t") and lines[2].startswith("full\t")


def test_cli_errors(tmp_path, capsys):
    assert main(["simulate", "--topology", str(tmp_path / "missing.json")]) != 0
    assert "error" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"parents": [None, 1], "alpha": [None, 0.9]}))
    assert main(["estimate", "--topology", str(bad)]) != 0
    assert main(["experiment", "--topology", "uniform", "--n", "0"]) != 0
    assert main(["experiment", "--topology", "uniform", "--suite", "bogus"]) != 0
    assert main(["simulate", "--topology", "uniform", "--missing", "1.5"]) != 0
    with pytest.raises(SystemExit):
        main(["frobnicate"])
