import json
import math

import numpy as np
import pytest
import yaml

from contrastsurv.cli import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, main, validate_document, RUN_SCHEMA
from contrastsurv.cox import CoxLinearModel
from contrastsurv.data_model import (ClinicalTable, CohortDataset, ExpressionMatrix, Scale, housekeeping_normalize,
                                     load_expression_tsv, log2_transform, rpkm_to_counts, write_clinical_tsv,
                                     write_expression_tsv)
from contrastsurv.pipeline import CVGrid, PrognosisModel, SplitSpec, Standardizer, cross_validate, train_test_split
from contrastsurv.pipeline.synthetic import synthetic_cohort

GRID = {"cl_layers": [[8, 4]], "cl_max_epochs": 5, "cl_patience": 3, "cl_batch_size": 32, "taps": [1, 2],
        "en_lambdas": [0.05], "en_alphas": [0.5], "gbt_max_depths": [2], "gbt_n_trees": [5],
        "nn_hidden": [[4]], "nn_max_epochs": 10, "clf_max_depths": [2], "clf_n_trees": [5]}
SYN = {"n_samples": 100, "n_genes": 15, "latent_dim": 3, "signal_strength": 2.0, "censor_rate": 0.3, "seed": 4}


def write_yaml(path, doc):
    path.write_text(yaml.safe_dump(doc))
    return path


def raw_inputs(tmp_path, rpkm=False):
    rng = np.random.default_rng(0)
    genes = ["VCP", "RAB7A", "GPI", "A", "B", "C"]
    ids = [f"p{i}" for i in range(8)]
    scale = Scale.RPKM if rpkm else Scale.RAW_COUNT
    m = ExpressionMatrix(ids, genes, rng.exponential(scale=20, size=(8, 6)).round(3), scale)
    write_expression_tsv(m, tmp_path / "expr.tsv")
    write_clinical_tsv(ClinicalTable(ids, rng.integers(10, 3000, size=8), rng.integers(0, 2, size=8)),
                       tmp_path / "clin.tsv")
    lengths = {g: int(v) for g, v in zip(genes, rng.integers(100, 5000, size=6))}
    (tmp_path / "lengths.tsv").write_text("gene_id\tlength\n" + "".join(f"{g}\t{v}\n" for g, v in lengths.items()))
    return m, lengths


def test_prepare_deterministic(tmp_path):
    raw_inputs(tmp_path)
    cfg = write_yaml(tmp_path / "prep.yaml", {"expression": "expr.tsv", "clinical": "clin.tsv",
                                             "normalize": {"target_mean": 50.0}})
    outs = []
    for name in ("a", "b"):
        assert main(["prepare", "--config", str(cfg), "--out", str(tmp_path / name)]) == EXIT_OK
        outs.append({f: (tmp_path / name / f).read_bytes()
                     for f in ("expression.tsv", "clinical.tsv", "prepare_report.json")})
    assert outs[0] == outs[1]
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["digest_algorithm"] == "sha256" and len(manifest["input_digests"]) == 2
    assert load_expression_tsv(tmp_path / "a" / "expression.tsv").scale is Scale.LOG2


def test_prepare_missing_event_column(tmp_path, capsys):
    raw_inputs(tmp_path)
    (tmp_path / "clin.tsv").write_text("sample_id\ttime_days\np0\t10\n")
    code = main(["prepare", "--expression", str(tmp_path / "expr.tsv"), "--clinical", str(tmp_path / "clin.tsv"),
                 "--out", str(tmp_path / "o")])
    assert code == EXIT_INVALID
    assert "event" in capsys.readouterr().err


def test_prepare_rpkm_composition(tmp_path):
    m, lengths = raw_inputs(tmp_path, rpkm=True)
    cfg = write_yaml(tmp_path / "prep.yaml", {"expression": "expr.tsv", "clinical": "clin.tsv",
                                             "gene_lengths": "lengths.tsv", "normalize": {"target_mean": 30.0}})
    assert main(["prepare", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
    manual = log2_transform(housekeeping_normalize(rpkm_to_counts(m, lengths),
                                                   ["VCP", "RAB7A", "GPI"], 30.0)[0])
    got = load_expression_tsv(tmp_path / "o" / "expression.tsv")
    assert np.array_equal(got.values, manual.values)


def run_config(tmp_path, **extra):
    doc = {"data": {"synthetic": SYN}, "methods": ["cl_cox_en", "cox_en"], "n_repeats": 2, "seed": 7,
           "grid": GRID, "comparisons": [["cl_cox_en", "cox_en"]], **extra}
    return write_yaml(tmp_path / "run.yaml", doc)


def test_run_smoke_and_determinism(tmp_path):
    cfg = run_config(tmp_path, save_model=True)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "r1")]) == EXIT_OK
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "r2"), "--workers", "2"]) == EXIT_OK
    a = (tmp_path / "r1" / "report.json").read_bytes()
    assert a == (tmp_path / "r2" / "report.json").read_bytes()
    rep = json.loads(a)
    assert len(rep["repeats"]) == 2 and rep["complete"] and rep["seeds"] == [7, 8]
    comps = [c for c in rep["comparisons"] if c["metric"] == "c_index"]
    assert comps and 0 <= comps[0]["p_value"] <= 1
    for r in rep["repeats"]:
        assert r["audit"]["violations"] == 0
    for name in rep["outputs"]:
        assert (tmp_path / "r1" / name).exists()
    assert (tmp_path / "r1" / "models" / "cox_en.json").exists()
    csvs = [n for n in rep["outputs"] if n.endswith(".csv")]
    assert csvs
    assert all(b"\r" not in (tmp_path / "r1" / n).read_bytes() for n in csvs)


def pooled_config(tmp_path, **extra):
    cohorts = [{"synthetic": {**SYN, "seed": 4}, "cancer_type": "AAA"},
               {"synthetic": {**SYN, "n_samples": 60, "seed": 5}, "cancer_type": "BBB"}]
    doc = {"data": {"cohorts": cohorts}, "pool": {"name": "pair", "members": ["AAA", "BBB"]},
           "methods": ["cl_cox_en"], "n_repeats": 1, "seed": 3, "grid": GRID, "figures": False, **extra}
    return write_yaml(tmp_path / "pooled.yaml", doc)


def test_run_pooled(tmp_path):
    assert main(["run", "--config", str(pooled_config(tmp_path)), "--out", str(tmp_path / "p")]) == EXIT_OK
    rep = json.loads((tmp_path / "p" / "report.json").read_text())
    assert sorted(rep["summary"]) == ["cl_cox_en@AAA", "cl_cox_en@BBB"]
    audit = rep["repeats"][0]["audit"]
    assert audit["violations"] == 0 and audit["fit_calls"] > 0


def test_run_pool_without_cohorts(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "r.yaml", {"data": {"synthetic": SYN}, "methods": ["cl_cox_en"], "pool": "glioma"})
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_INVALID
    assert "cohorts" in capsys.readouterr().err


def test_run_invalid_config_lists_all_problems(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "bad.yaml", {"data": {"synthetic": SYN}, "methods": ["nope"], "bogus": 1,
                                             "n_repeats": "two"})
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_INVALID
    err = capsys.readouterr().err
    assert "bogus" in err and "nope" in err and "n_repeats" in err


def test_run_failure_exit_code(tmp_path, capsys):
    # more folds than training samples: every repeat fails at runtime
    cfg = write_yaml(tmp_path / "r.yaml", {"data": {"synthetic": {**SYN, "n_samples": 10, "censor_rate": 0.0}},
                                           "methods": ["cox_en"], "grid": {**GRID, "fold_count": 10},
                                           "figures": False})
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_RUNTIME
    assert "repeat 0" in capsys.readouterr().err


def test_schema_validator_reports_types():
    probs = validate_document({"data": {}, "methods": "cox_en", "figures": "yes"}, RUN_SCHEMA)
    assert "wrong type for methods: expected list" in probs
    assert "wrong type for figures: expected boolean" in probs


def _trained_bundle(tmp_path):
    ds, _ = synthetic_cohort(80, 12, 3, 2.0, 0.3, seed=1)
    train, _ = train_test_split(ds, SplitSpec(0.8, 0))
    res = cross_validate(train, CVGrid.from_dict(GRID), "cl_then_cox", "en", seed=0)
    res.model.save(tmp_path / "model.json")
    d = tmp_path / "bundle"
    d.mkdir()
    write_expression_tsv(train.expression, d / "expression.tsv")
    return train, res.model


def read_predictions(path):
    lines = path.read_text().splitlines()
    header = lines[0].split("\t")
    return header, [dict(zip(header, l.split("\t"))) for l in lines[1:]]


def test_predict_reproduces_training_scores(tmp_path):
    train, model = _trained_bundle(tmp_path)
    code = main(["predict", "--model", str(tmp_path / "model.json"), "--data", str(tmp_path / "bundle"),
                 "--out", str(tmp_path / "p"), "--times", "365,1095"])
    assert code == EXIT_OK
    header, rows = read_predictions(tmp_path / "p" / "predictions.tsv")
    assert header == ["sample_id", "log_HR", "HR", "risk_group", "S_365", "S_1095"]
    got = np.array([float(r["log_HR"]) for r in rows])
    assert np.array_equal(got, model.train_scores)
    assert [r["sample_id"] for r in rows] == list(train.sample_ids)


def test_predict_drops_extra_genes(tmp_path):
    train, model = _trained_bundle(tmp_path)
    m = train.expression
    extra = ExpressionMatrix(m.sample_ids, (*m.gene_ids, "EXTRA1", "EXTRA2"),
                             np.hstack([m.values, np.ones((len(m.sample_ids), 2))]), Scale.LOG2)
    write_expression_tsv(extra, tmp_path / "extra.tsv")
    assert main(["predict", "--model", str(tmp_path / "model.json"), "--expression", str(tmp_path / "extra.tsv"),
                 "--out", str(tmp_path / "p")]) == EXIT_OK
    _, rows = read_predictions(tmp_path / "p" / "predictions.tsv")
    assert np.array_equal([float(r["log_HR"]) for r in rows], model.train_scores)


def test_predict_missing_genes_exit_2(tmp_path):
    train, _ = _trained_bundle(tmp_path)
    m = train.expression
    cut = ExpressionMatrix(m.sample_ids, m.gene_ids[:6], m.values[:, :6], Scale.LOG2)
    write_expression_tsv(cut, tmp_path / "cut.tsv")
    args = ["predict", "--model", str(tmp_path / "model.json"), "--expression", str(tmp_path / "cut.tsv"),
            "--out", str(tmp_path / "p")]
    assert main(args) == EXIT_INVALID
    assert main([*args, "--max-missing-fraction", "1.0"]) == EXIT_OK


def test_predict_null_model_all_low(tmp_path):
    genes = ("a", "b")
    model = PrognosisModel("cox_en", "cox", genes, Standardizer(np.zeros(2), np.ones(2)),
                           CoxLinearModel(np.zeros(2)), cutoffs={"median_hr": 1.0})
    model.save(tmp_path / "null.json")
    write_expression_tsv(ExpressionMatrix(["x", "y"], genes, [[1.0, 2.0], [3.0, 4.0]], Scale.LOG2),
                         tmp_path / "e.tsv")
    assert main(["predict", "--model", str(tmp_path / "null.json"), "--expression", str(tmp_path / "e.tsv"),
                 "--out", str(tmp_path / "p")]) == EXIT_OK
    _, rows = read_predictions(tmp_path / "p" / "predictions.tsv")
    assert all(r["HR"] == "1.0" and r["risk_group"] == "low" for r in rows)


def test_predict_bad_inputs(tmp_path):
    assert main(["predict", "--model", str(tmp_path / "none.json"), "--data", str(tmp_path),
                 "--out", str(tmp_path / "p")]) == EXIT_INVALID
    (tmp_path / "junk.json").write_text("{}")
    assert main(["predict", "--model", str(tmp_path / "junk.json"), "--data", str(tmp_path),
                 "--out", str(tmp_path / "p")]) == EXIT_INVALID


def test_simulate(tmp_path):
    args = ["simulate", "--n-samples", "30", "--n-genes", "5", "--latent-dim", "2", "--signal-strength", "1",
            "--censor-rate", "0.2", "--seed", "3", "--out", str(tmp_path / "s")]
    assert main(args) == EXIT_OK
    assert (tmp_path / "s" / "truth.tsv").read_text().startswith("sample_id\tlog_hazard\n")
    assert main(args[:-2] + ["--out", str(tmp_path / "t")]) == EXIT_OK
    assert (tmp_path / "s" / "expression.tsv").read_bytes() == (tmp_path / "t" / "expression.tsv").read_bytes()
    assert main(["simulate", "--n-samples", "30", "--out", str(tmp_path / "u")]) == EXIT_INVALID


def test_workers_env(tmp_path, monkeypatch):
    monkeypatch.setenv("CONTRASTSURV_WORKERS", "zero")
    cfg = run_config(tmp_path)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_INVALID
