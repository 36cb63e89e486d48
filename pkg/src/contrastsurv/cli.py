"""Command-line entry point: ``contrastsurv {prepare,run,predict,simulate}``.

Exit codes: 0 success, 1 runtime failure, 2 invalid input or configuration.
Every command writes ``manifest.json`` into its output directory before any
other file.
"""

from __future__ import annotations

import argparse
import functools
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .data_model import (DEFAULT_HOUSEKEEPING_GENES, CohortDataset, DataError, Scale, align_genes,
                         drop_negative_genes, file_sha256, housekeeping_normalize, join_cohort,
                         load_clinical_tsv, load_expression_tsv, log2_transform, reference_mean,
                         rpkm_to_counts, write_clinical_tsv, write_expression_tsv)
from .metrics import write_csv
from .pipeline.cv import METHODS, CVGrid
from .pipeline.experiment import run_pooled_repeat, run_repeat
from .pipeline.harness import metric_table, repeat_harness
from .pipeline.model import PrognosisModel
from .pipeline.pooling import PoolSpec, load_pool_specs
from .pipeline.synthetic import synthetic_cohort

log = logging.getLogger("contrastsurv")

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2
WORKERS_ENV = "CONTRASTSURV_WORKERS"


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


# ---------------------------------------------------------------------------
# config documents

NUMBER = (int, float)
SYNTHETIC_SCHEMA = {
    "n_samples": (True, int), "n_genes": (True, int), "latent_dim": (True, int),
    "signal_strength": (True, NUMBER), "censor_rate": (True, NUMBER), "seed": (False, int),
    "noise": (False, NUMBER), "cancer_type": (False, str), "id_prefix": (False, str),
}
COHORT_SCHEMA = {
    "prepared": (False, str), "expression": (False, str), "clinical": (False, str),
    "cancer_type": (False, str), "synthetic": (False, SYNTHETIC_SCHEMA),
}
RUN_SCHEMA = {
    "data": (True, {**COHORT_SCHEMA, "cohorts": (False, list)}),
    "methods": (True, list),
    "n_repeats": (False, int),
    "seed": (False, int),
    "train_fraction": (False, NUMBER),
    "min_risk_set": (False, int),
    "comparisons": (False, list),
    "grid": (False, dict),
    "pool": (False, (str, dict)),
    "save_model": (False, bool),
    "figures": (False, bool),
    "workers": (False, int),
}
PREPARE_SCHEMA = {
    "expression": (True, str), "clinical": (True, str), "cancer_type": (False, str),
    "orientation": (False, str), "scale": (False, str), "gene_lengths": (False, str),
    "normalize": (False, {"target_mean": (False, NUMBER), "target_expression": (False, str),
                          "reference_genes": (False, list)}),
    "align_to": (False, str),
}


def _type_name(kind) -> str:
    if isinstance(kind, tuple):
        return " or ".join(_type_name(k) for k in kind)
    return {int: "integer", float: "number", str: "string", bool: "boolean",
            list: "list", dict: "mapping"}.get(kind, str(kind))


def validate_document(doc, schema: dict, where: str = "") -> list[str]:
    """All problems with ``doc`` against ``schema``: unknown, missing and mistyped keys."""
    if not isinstance(doc, dict):
        return [f"{where or 'config'}: expected a mapping"]
    problems = []
    for key in sorted(set(doc) - set(schema)):
        problems.append(f"unknown key: {where}{key}")
    for key, (required, kind) in schema.items():
        path = f"{where}{key}"
        if key not in doc:
            if required:
                problems.append(f"missing key: {path}")
            continue
        value = doc[key]
        if isinstance(kind, dict):
            problems.extend(validate_document(value, kind, path + "."))
            continue
        kinds = kind if isinstance(kind, tuple) else (kind,)
        ok = isinstance(value, kinds) and not (isinstance(value, bool) and bool not in kinds)
        if not ok:
            problems.append(f"wrong type for {path}: expected {_type_name(kind)}")
    return problems


def load_config(path) -> dict:
    """Read a YAML (or JSON) config file."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError([f"config file not found: {path}"]) from None
    except yaml.YAMLError as exc:
        raise ConfigError([f"config file {path} does not parse: {exc}"]) from None
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError([f"config file {path} must hold a mapping"])
    return doc


# ---------------------------------------------------------------------------
# manifest and output helpers

@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int | None
    input_digests: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    version: str = __version__
    digest_algorithm: str = "sha256"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["config_sha256"] = hashlib.sha256(canonical_json(self.config).encode()).hexdigest()
        return d


def clean_json(obj):
    """Convert numpy scalars/arrays to Python values and non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): clean_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean_json(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean_json(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def canonical_json(obj) -> str:
    return json.dumps(clean_json(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


def write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(clean_json(obj), sort_keys=True, indent=2, allow_nan=False))
        fh.write("\n")


def _digests(paths) -> dict:
    out = {}
    for p in paths:
        p = Path(p)
        if p.is_dir():
            for f in sorted(q for q in p.iterdir() if q.is_file()):
                out[str(f)] = file_sha256(f)
        else:
            out[str(p)] = file_sha256(p)
    return out


def _start(out: Path, manifest: RunManifest) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_json(manifest.to_dict(), out / "manifest.json")


def _resolve(base: Path, p: str) -> Path:
    q = Path(p)
    return q if q.is_absolute() else base / q


def _require_files(paths) -> None:
    missing = [str(p) for p in paths if not Path(p).exists()]
    if missing:
        raise ConfigError([f"input not found: {m}" for m in missing])


def _safe_name(s: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in s)


# ---------------------------------------------------------------------------
# prepare

def _read_lengths(path) -> dict:
    lengths = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.rstrip("\n").split("\t")
            if n == 1 and parts[0] in ("gene_id", "gene"):
                continue
            try:
                lengths[parts[0]] = float(parts[1])
            except (IndexError, ValueError):
                raise DataError(f"{path}: line {n}: expected 'gene<TAB>length'") from None
    return lengths


def _read_gene_list(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]


def prepare_dataset(cfg: dict, base: Path) -> tuple[CohortDataset, dict]:
    """Load, join, convert, normalize, log-transform and align one cohort."""
    expr = load_expression_tsv(_resolve(base, cfg["expression"]), cfg.get("orientation", "samples_as_rows"))
    if "scale" in cfg:
        try:
            expr = expr.replace(scale=Scale(cfg["scale"]))
        except ValueError:
            raise ConfigError([f"unknown scale {cfg['scale']!r}"]) from None
    clin, dropped_rows = load_clinical_tsv(_resolve(base, cfg["clinical"]))
    ds, join = join_cohort(expr, clin, cfg.get("cancer_type", "unknown"))
    m = ds.expression
    report: dict = {"join": join.to_dict(), "dropped_clinical_rows": list(dropped_rows),
                    "input_scale": m.scale.value, "dropped_negative_genes": [], "normalization": None}
    if m.scale is Scale.RPKM:
        if "gene_lengths" not in cfg:
            raise ConfigError(["RPKM input needs gene_lengths"])
        m = rpkm_to_counts(m, _read_lengths(_resolve(base, cfg["gene_lengths"])))
    if m.scale is Scale.RAW_COUNT:
        m, neg = drop_negative_genes(m)
        report["dropped_negative_genes"] = list(neg)
        norm = cfg.get("normalize")
        if norm is not None:
            genes = norm.get("reference_genes", list(DEFAULT_HOUSEKEEPING_GENES))
            if "target_mean" in norm:
                target = float(norm["target_mean"])
            elif "target_expression" in norm:
                tgt = load_expression_tsv(_resolve(base, norm["target_expression"]))
                target = reference_mean(tgt, genes)[0]
            else:
                raise ConfigError(["normalize needs target_mean or target_expression"])
            m, nf = housekeeping_normalize(m, genes, target)
            report["normalization"] = asdict(nf)
        m = log2_transform(m)
    elif cfg.get("normalize") is not None:
        raise ConfigError(["normalization needs raw counts or RPKM input, not log2 values"])
    if "align_to" in cfg:
        m = align_genes(m, _read_gene_list(_resolve(base, cfg["align_to"])))
        report["alignment"] = m.alignment.to_dict()
    ds = CohortDataset(m, ds.clinical, ds.cancer_type)
    report["n_samples"], report["n_genes"] = m.shape
    return ds, report


def write_bundle(ds: CohortDataset, out: Path) -> list[str]:
    write_expression_tsv(ds.expression, out / "expression.tsv")
    write_clinical_tsv(ds.clinical, out / "clinical.tsv")
    return ["expression.tsv", "clinical.tsv"]


def cmd_prepare(args) -> int:
    base = Path(".")
    cfg = {}
    if args.config:
        cfg = load_config(args.config)
        base = Path(args.config).parent
    for key in ("expression", "clinical", "cancer_type", "gene_lengths", "scale", "align_to", "orientation"):
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    if args.normalize_target is not None:
        cfg.setdefault("normalize", {})["target_mean"] = args.normalize_target
    problems = validate_document(cfg, PREPARE_SCHEMA)
    if problems:
        raise ConfigError(problems)
    inputs = [_resolve(base, cfg[k]) for k in ("expression", "clinical", "gene_lengths", "align_to") if k in cfg]
    if "target_expression" in cfg.get("normalize", {}):
        inputs.append(_resolve(base, cfg["normalize"]["target_expression"]))
    _require_files(inputs)
    out = Path(args.out)
    outputs = ["expression.tsv", "clinical.tsv", "prepare_report.json"]
    _start(out, RunManifest("prepare", cfg, None, _digests(inputs), outputs))
    ds, report = prepare_dataset(cfg, base)
    write_bundle(ds, out)
    write_json(report, out / "prepare_report.json")
    log.info("prepared %d samples x %d genes into %s", *ds.expression.shape, out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate

def cmd_simulate(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    for key in SYNTHETIC_SCHEMA:
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    if args.seed is not None:
        cfg["seed"] = args.seed
    problems = validate_document(cfg, SYNTHETIC_SCHEMA)
    if problems:
        raise ConfigError(problems)
    out = Path(args.out)
    _start(out, RunManifest("simulate", cfg, cfg.get("seed", 0), {},
                            ["expression.tsv", "clinical.tsv", "truth.tsv"]))
    ds, truth = _synthetic(cfg)
    write_bundle(ds, out)
    rows = [("sample_id", "log_hazard")] + [(s, repr(float(v))) for s, v in zip(ds.sample_ids, truth.log_hazard)]
    write_csv(rows, out / "truth.tsv", delimiter="\t")
    return EXIT_OK


def _synthetic(cfg: dict):
    kw = dict(cfg)
    kw.setdefault("seed", 0)
    try:
        return synthetic_cohort(**kw)
    except ValueError as exc:
        raise ConfigError([f"synthetic cohort: {exc}"]) from None


# ---------------------------------------------------------------------------
# run

def _load_cohort(spec: dict, base: Path) -> tuple[CohortDataset, list[Path]]:
    sources = [k for k in ("prepared", "synthetic", "expression") if k in spec]
    if len(sources) != 1:
        raise ConfigError(["data needs exactly one of: prepared, synthetic, expression + clinical"])
    if "synthetic" in spec:
        syn = dict(spec["synthetic"])
        if "cancer_type" in spec:
            syn["cancer_type"] = spec["cancer_type"]
            # distinct ids per cohort so synthetic cohorts can be pooled
            syn.setdefault("id_prefix", f"{spec['cancer_type']}_")
        return _synthetic(syn)[0], []
    if "prepared" in spec:
        d = _resolve(base, spec["prepared"])
        paths = [d / "expression.tsv", d / "clinical.tsv"]
    else:
        if "clinical" not in spec:
            raise ConfigError(["missing key: data.clinical"])
        paths = [_resolve(base, spec["expression"]), _resolve(base, spec["clinical"])]
    _require_files(paths)
    expr = load_expression_tsv(paths[0])
    if expr.scale is not Scale.LOG2:
        raise ConfigError([f"{paths[0]}: expected log2 expression; run 'prepare' first"])
    clin, _ = load_clinical_tsv(paths[1])
    ds, _ = join_cohort(expr, clin, spec.get("cancer_type", "unknown"))
    return ds, paths


def _check_run_config(cfg: dict) -> tuple[CVGrid, list[str], list[tuple[str, str]]]:
    problems = validate_document(cfg, RUN_SCHEMA)
    methods = [str(m) for m in cfg.get("methods", [])] if isinstance(cfg.get("methods"), list) else []
    problems += [f"unknown method: {m}" for m in methods if m not in METHODS]
    if "methods" in cfg and not methods:
        problems.append("methods: list is empty")
    comparisons = []
    raw_comparisons = cfg.get("comparisons", [])
    for c in raw_comparisons if isinstance(raw_comparisons, list) else []:
        if not (isinstance(c, (list, tuple)) and len(c) == 2):
            problems.append(f"comparisons entries must be [method_a, method_b], got {c!r}")
            continue
        comparisons.append((str(c[0]), str(c[1])))
    grid = None
    try:
        grid = CVGrid.from_dict(cfg["grid"] if isinstance(cfg.get("grid"), dict) else {})
    except (TypeError, ValueError) as exc:
        problems.append(f"grid: {exc}")
    if isinstance(cfg.get("n_repeats"), int) and cfg["n_repeats"] < 1:
        problems.append("n_repeats must be positive")
    tf = cfg.get("train_fraction", 0.8)
    if isinstance(tf, (int, float)) and not 0 < tf < 1:
        problems.append("train_fraction must lie strictly between 0 and 1")
    if problems:
        raise ConfigError(problems)
    return grid, methods, comparisons


def _pool_spec(cfg) -> PoolSpec | None:
    pool = cfg.get("pool")
    if pool is None:
        return None
    if isinstance(pool, str):
        named = {p.name: p for p in load_pool_specs()}
        if pool not in named:
            raise ConfigError([f"unknown pool {pool!r}; known: {', '.join(sorted(named))}"])
        return named[pool]
    problems = validate_document(pool, {"name": (True, str), "members": (True, list)}, "pool.")
    if problems:
        raise ConfigError(problems)
    try:
        return PoolSpec(pool["name"], tuple(pool["members"]))
    except ValueError as exc:
        raise ConfigError([str(exc)]) from None


def _export_curves(report, out: Path, figures: bool) -> list[str]:
    written = []
    cdir = out / "curves"
    cdir.mkdir(exist_ok=True)
    for seed in sorted(report.curves):
        for method, cv in sorted(report.curves[seed].items()):
            stem = f"{_safe_name(method)}_seed{seed}"
            for key in ("km_high", "km_low"):
                if key in cv:
                    name = f"curves/{stem}_{key}.csv"
                    write_csv(cv[key].to_csv_rows(), out / name)
                    written.append(name)
            if "roc" in cv:
                name = f"curves/{stem}_roc.csv"
                write_csv(cv["roc"].to_csv_rows(), out / name)
                written.append(name)
    if figures and report.curves:
        from .plotting import plot_boxplot, plot_km, plot_roc
        fdir = out / "figures"
        fdir.mkdir(exist_ok=True)
        first = min(report.curves)
        rec = next(r for r in report.repeats if r["seed"] == first)
        rocs = {}
        for method, cv in sorted(report.curves[first].items()):
            if "km_high" in cv and "km_low" in cv:
                name = f"figures/km_{_safe_name(method)}.png"
                p = rec["methods"][method]["test"].get("logrank_p")
                plot_km({"high": cv["km_high"], "low": cv["km_low"]}, out / name,
                        title=f"{method}, seed {first}", p_value=p)
                written.append(name)
            if "roc" in cv:
                rocs[method] = cv["roc"]
        if rocs:
            plot_roc(rocs, out / "figures/roc.png", title=f"test split, seed {first}")
            written.append("figures/roc.png")
        table = metric_table(report.repeats)
        for metric, label in (("c_index", "c-index"), ("auc", "AUC"), ("ibs", "IBS")):
            vals = {m: t[metric] for m, t in sorted(table.items())
                    if any(v is not None for v in t.get(metric, []))}
            if vals:
                name = f"figures/boxplot_{metric}.png"
                plot_boxplot(vals, out / name, ylabel=label)
                written.append(name)
    return written


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    base = Path(args.config).parent
    grid, methods, comparisons = _check_run_config(cfg)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    workers = args.workers if args.workers is not None else cfg.get("workers", _workers_default())
    data = cfg["data"]
    pool = _pool_spec(cfg)
    cohort_specs = data.get("cohorts")
    if cohort_specs is not None:
        if set(data) - {"cohorts"}:
            raise ConfigError(["data.cohorts cannot be combined with other data keys"])
        problems = []
        for i, c in enumerate(cohort_specs):
            problems.extend(validate_document(c, COHORT_SCHEMA, f"data.cohorts[{i}]."))
        if problems:
            raise ConfigError(problems)
    else:
        if pool is not None:
            raise ConfigError(["pool needs data.cohorts"])
        cohort_specs = [data]
    loaded = [_load_cohort(c, base) for c in cohort_specs]
    inputs = [p for _, paths in loaded for p in paths]
    out = Path(args.out)
    # workers is left out: scheduling does not change results
    resolved = {**{k: v for k, v in cfg.items() if k != "workers"}, "seed": seed, "grid": grid.to_dict()}
    _start(out, RunManifest("run", resolved, seed, _digests(inputs),
                            ["report.json", "curves/", "figures/", "models/"]))
    tf = float(cfg.get("train_fraction", 0.8))
    mrs = int(cfg.get("min_risk_set", 20))
    save_model = bool(cfg.get("save_model", False))
    if len(loaded) > 1 or pool is not None:
        closure = functools.partial(run_pooled_repeat, [d for d, _ in loaded], pool, methods, grid,
                                    train_fraction=tf, min_risk_set=mrs)
    else:
        closure = functools.partial(run_repeat, loaded[0][0], methods, grid, train_fraction=tf,
                                    min_risk_set=mrs, keep_models=save_model)
    report = repeat_harness(closure, int(cfg.get("n_repeats", 1)), seed, workers, comparisons,
                            config=resolved)
    models = {}
    for s in sorted(report.curves):
        for method, cv in report.curves[s].items():
            m = cv.pop("model", None)
            if m is not None and method not in models:
                models[method] = m
    written = _export_curves(report, out, bool(cfg.get("figures", True)))
    if models:
        (out / "models").mkdir(exist_ok=True)
        for method, m in sorted(models.items()):
            m.save(out / "models" / f"{_safe_name(method)}.json")
            written.append(f"models/{_safe_name(method)}.json")
    doc = report.to_dict()
    doc["outputs"] = sorted(written)
    write_json(doc, out / "report.json")
    for f in report.failures:
        print(f"error: repeat {f['repeat']} (seed {f['seed']}) failed: {f['error']}", file=sys.stderr)
    return EXIT_RUNTIME if report.failures else EXIT_OK


# ---------------------------------------------------------------------------
# predict

def cmd_predict(args) -> int:
    try:
        model = PrognosisModel.load(args.model)
    except FileNotFoundError:
        raise ConfigError([f"model file not found: {args.model}"]) from None
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigError([f"{args.model}: not a model file ({exc})"]) from None
    if args.data:
        expr_path = Path(args.data) / "expression.tsv"
    elif args.expression:
        expr_path = Path(args.expression)
    else:
        raise ConfigError(["predict needs --data or --expression"])
    _require_files([expr_path])
    try:
        times = [float(t) for t in args.times.split(",") if t.strip()] if args.times else []
    except ValueError:
        raise ConfigError([f"--times must be comma-separated numbers, got {args.times!r}"]) from None
    if times and model.task != "cox":
        raise ConfigError(["survival times need a Cox model"])
    out = Path(args.out)
    cfg = {"model": str(args.model), "expression": str(expr_path), "times": times,
           "max_missing_fraction": args.max_missing_fraction}
    _start(out, RunManifest("predict", cfg, None, _digests([args.model, expr_path]), ["predictions.tsv"]))
    expr = load_expression_tsv(expr_path)
    if expr.scale is not Scale.LOG2:
        raise ConfigError([f"{expr_path}: expected log2 expression; run 'prepare' first"])
    aligned = expr if tuple(expr.gene_ids) == model.gene_ids else align_genes(expr, model.gene_ids)
    rep = aligned.alignment
    if rep is not None:
        if rep.dropped:
            log.info("dropped %d gene(s) unknown to the model", len(rep.dropped))
        frac = len(rep.missing) / max(1, len(model.gene_ids))
        if frac > args.max_missing_fraction:
            raise ConfigError([f"{len(rep.missing)} of {len(model.gene_ids)} model genes are missing "
                               f"(limit {args.max_missing_fraction:.0%})"])
    scores, _ = model.score_matrix(aligned)
    groups = model.risk_groups(scores)
    if model.task == "cox":
        header = ["sample_id", "log_HR", "HR", "risk_group"] + [f"S_{_fmt_time(t)}" for t in times]
        surv = model.survival(scores, times)
        rows = [[sid, repr(float(s)), repr(float(np.exp(s))), g, *(repr(float(v)) for v in sv)]
                for sid, s, g, sv in zip(aligned.sample_ids, scores, groups, surv)]
    else:
        from .neural import sigmoid
        header = ["sample_id", "log_odds", "p_high", "risk_group"]
        rows = [[sid, repr(float(s)), repr(float(sigmoid(np.array([s]))[0])), g]
                for sid, s, g in zip(aligned.sample_ids, scores, groups)]
    write_csv([header, *rows], out / "predictions.tsv", delimiter="\t")
    return EXIT_OK


def _fmt_time(t: float) -> str:
    return str(int(t)) if float(t).is_integer() else repr(float(t))


# ---------------------------------------------------------------------------

def _workers_default() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None or raw == "":
        return 1
    try:
        w = int(raw)
    except ValueError:
        raise ConfigError([f"{WORKERS_ENV} must be an integer, got {raw!r}"]) from None
    if w < 1:
        raise ConfigError([f"{WORKERS_ENV} must be positive"])
    return w


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="contrastsurv", description="Contrastive survival models for expression data")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=False):
        sp.add_argument("--config", required=config_required, help="YAML or JSON config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--workers", type=int, help=f"parallel repeats (default ${WORKERS_ENV} or 1)")

    sp = sub.add_parser("prepare", help="build a prepared dataset bundle")
    common(sp)
    sp.add_argument("--expression")
    sp.add_argument("--clinical")
    sp.add_argument("--cancer-type", dest="cancer_type")
    sp.add_argument("--orientation", choices=["samples_as_rows", "genes_as_rows"])
    sp.add_argument("--scale", choices=[s.value for s in Scale])
    sp.add_argument("--gene-lengths", dest="gene_lengths")
    sp.add_argument("--normalize-target", dest="normalize_target", type=float,
                    help="target mean of the housekeeping genes (raw-count scale)")
    sp.add_argument("--align-to", dest="align_to", help="file with one gene id per line")
    sp.set_defaults(func=cmd_prepare)

    sp = sub.add_parser("run", help="run a configured experiment")
    common(sp, config_required=True)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("predict", help="score samples with a saved model")
    common(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", help="prepared bundle directory")
    sp.add_argument("--expression", help="log2 expression TSV")
    sp.add_argument("--times", help="comma-separated days for survival probabilities")
    sp.add_argument("--max-missing-fraction", dest="max_missing_fraction", type=float, default=0.1)
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("simulate", help="write a synthetic cohort as a prepared bundle")
    common(sp)
    sp.add_argument("--n-samples", dest="n_samples", type=int)
    sp.add_argument("--n-genes", dest="n_genes", type=int)
    sp.add_argument("--latent-dim", dest="latent_dim", type=int)
    sp.add_argument("--signal-strength", dest="signal_strength", type=float)
    sp.add_argument("--censor-rate", dest="censor_rate", type=float)
    sp.add_argument("--noise", type=float)
    sp.add_argument("--cancer-type", dest="cancer_type")
    sp.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.workers is not None and args.workers < 1:
            raise ConfigError(["--workers must be positive"])
        return args.func(args)
    except ConfigError as exc:
        for msg in exc.problems:
            print(f"error: {msg}", file=sys.stderr)
        return EXIT_INVALID
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # anything else is a runtime failure
        log.debug("runtime failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
