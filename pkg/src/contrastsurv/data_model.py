"""Expression matrices, clinical tables and the preprocessing applied to them.

Matrices are immutable: every transform returns a new :class:`ExpressionMatrix`.
The on-disk format is TSV (optionally gzip-compressed) with identifiers in the
first row and first column. An optional leading ``# scale=<name>`` line records
the value scale.
"""

from __future__ import annotations

import csv
import gzip
import hashlib
import io
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

# Ten of the eleven uniformly expressed reference genes present in pan-cancer RNA-seq.
DEFAULT_HOUSEKEEPING_GENES = (
    "C1orf43", "CHMP2A", "GPI", "PSMB2", "PSMB4",
    "RAB7A", "REEP5", "SNRPD3", "VCP", "VPS29",
)


class DataError(ValueError):
    """Raised for malformed inputs or violated data invariants."""


class Scale(str, Enum):
    RAW_COUNT = "raw_count"
    RPKM = "rpkm"
    LOG2 = "log2"


@dataclass(frozen=True)
class AlignmentReport:
    matched: int
    missing: tuple[str, ...]
    dropped: tuple[str, ...]

    def to_dict(self) -> dict:
        return {"matched": self.matched, "missing": list(self.missing),
                "dropped": list(self.dropped)}


def _check_unique(ids: Sequence[str], what: str) -> None:
    seen = set()
    dups = []
    for i in ids:
        if i in seen and i not in dups:
            dups.append(i)
        seen.add(i)
    if dups:
        raise DataError(f"duplicate {what} id(s): {', '.join(dups)}")


def _frozen(values: np.ndarray) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ExpressionMatrix:
    """Samples x genes matrix of expression values."""

    sample_ids: tuple[str, ...]
    gene_ids: tuple[str, ...]
    values: np.ndarray
    scale: Scale = Scale.RAW_COUNT
    alignment: AlignmentReport | None = None

    def __post_init__(self):
        object.__setattr__(self, "sample_ids", tuple(str(s) for s in self.sample_ids))
        object.__setattr__(self, "gene_ids", tuple(str(g) for g in self.gene_ids))
        object.__setattr__(self, "scale", Scale(self.scale))
        vals = _frozen(self.values)
        if vals.ndim != 2 or vals.shape != (len(self.sample_ids), len(self.gene_ids)):
            raise DataError(
                f"values shape {vals.shape} does not match "
                f"{len(self.sample_ids)} samples x {len(self.gene_ids)} genes")
        _check_unique(self.sample_ids, "sample")
        _check_unique(self.gene_ids, "gene")
        if not np.all(np.isfinite(vals)):
            raise DataError("expression values must be finite")
        if self.scale is not Scale.LOG2 and np.any(vals < 0):
            raise DataError("negative expression value in a non-log matrix")
        object.__setattr__(self, "values", vals)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def replace(self, **changes) -> "ExpressionMatrix":
        kw = dict(sample_ids=self.sample_ids, gene_ids=self.gene_ids,
                  values=self.values, scale=self.scale, alignment=self.alignment)
        kw.update(changes)
        return ExpressionMatrix(**kw)

    def select_samples(self, idx: Sequence[int] | np.ndarray) -> "ExpressionMatrix":
        idx = np.asarray(idx, dtype=int)
        return self.replace(sample_ids=[self.sample_ids[i] for i in idx],
                            values=self.values[idx])


@dataclass(frozen=True, eq=False)
class ClinicalTable:
    """Per-sample progression-free interval (days) and event indicator."""

    sample_ids: tuple[str, ...]
    time: np.ndarray
    event: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sample_ids", tuple(str(s) for s in self.sample_ids))
        t = _frozen(self.time)
        e = np.array(self.event, dtype=int, copy=True)
        if not (len(self.sample_ids) == t.shape[0] == e.shape[0]) or t.ndim != 1:
            raise DataError("clinical columns must have equal length")
        _check_unique(self.sample_ids, "sample")
        if not np.all(np.isfinite(t)) or np.any(t < 0):
            raise DataError("times must be finite and non-negative")
        if not np.all(np.isin(e, (0, 1))):
            raise DataError("event indicator must be 0 or 1")
        e.setflags(write=False)
        object.__setattr__(self, "time", t)
        object.__setattr__(self, "event", e)

    def __len__(self) -> int:
        return len(self.sample_ids)

    def select(self, idx: Sequence[int] | np.ndarray) -> "ClinicalTable":
        idx = np.asarray(idx, dtype=int)
        return ClinicalTable([self.sample_ids[i] for i in idx], self.time[idx], self.event[idx])


@dataclass(frozen=True)
class NormalizationFactor:
    reference_genes: tuple[str, ...]
    e_target: float
    e_cohort: float
    factor: float

    def __post_init__(self):
        if not self.e_cohort > 0 or not self.factor > 0:
            raise DataError("normalization factor must be positive")


@dataclass(frozen=True, eq=False)
class CohortDataset:
    """Aligned expression (log2 scale) and clinical data for one cancer type.

    ``provenance`` tags which split the samples come from (``"all"``,
    ``"train"``, ``"test"``); fitting code refuses anything not train-tagged.
    """

    expression: ExpressionMatrix
    clinical: ClinicalTable
    cancer_type: str = "unknown"
    provenance: str = "all"

    def __post_init__(self):
        if self.expression.sample_ids != self.clinical.sample_ids:
            raise DataError("expression and clinical sample ids differ")

    def __len__(self) -> int:
        return len(self.clinical)

    @property
    def x(self) -> np.ndarray:
        return self.expression.values

    @property
    def times(self) -> np.ndarray:
        return self.clinical.time

    @property
    def events(self) -> np.ndarray:
        return self.clinical.event

    @property
    def sample_ids(self) -> tuple[str, ...]:
        return self.clinical.sample_ids

    def subset(self, idx: Sequence[int] | np.ndarray, provenance: str | None = None) -> "CohortDataset":
        return CohortDataset(self.expression.select_samples(idx), self.clinical.select(idx),
                             self.cancer_type, provenance or self.provenance)


@dataclass(frozen=True)
class JoinReport:
    kept: int
    dropped_missing_clinical: tuple[str, ...] = field(default_factory=tuple)
    dropped_missing_expression: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {"kept": self.kept,
                "dropped_missing_clinical": list(self.dropped_missing_clinical),
                "dropped_missing_expression": list(self.dropped_missing_expression)}


# ---------------------------------------------------------------------------
# I/O

def _open_text(path: Path, mode: str):
    path = Path(path)
    if path.suffix == ".gz":
        if "w" in mode:
            # mtime=0 keeps compressed output byte-identical across runs
            raw = gzip.GzipFile(path, mode="wb", mtime=0)
            return io.TextIOWrapper(raw, encoding="utf-8", newline="")
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8", newline="")
    return open(path, mode, encoding="utf-8", newline="")


def _fmt(x: float) -> str:
    r = repr(float(x))
    return r[:-2] if r.endswith(".0") else r


def load_expression_tsv(path, orientation: str = "samples_as_rows") -> ExpressionMatrix:
    """Read an expression matrix from a TSV or TSV.gz file.

    Args:
        path: file to read.
        orientation: ``"samples_as_rows"`` or ``"genes_as_rows"``.

    Raises:
        DataError: on a cell that does not parse as a real (location reported),
            a ragged row, or duplicate identifiers.
    """
    if orientation not in ("samples_as_rows", "genes_as_rows"):
        raise DataError(f"unknown orientation {orientation!r}")
    scale = Scale.RAW_COUNT
    with _open_text(path, "r") as fh:
        lines = fh.read().splitlines()
    start = 0
    while start < len(lines) and lines[start].startswith("#"):
        meta = lines[start][1:].strip()
        if meta.startswith("scale="):
            scale = Scale(meta.split("=", 1)[1].strip())
        start += 1
    rows = list(csv.reader(lines[start:], delimiter="\t"))
    if not rows:
        raise DataError(f"{path}: empty matrix file")
    header = rows[0]
    col_ids = header[1:]
    row_ids = []
    data = np.empty((len(rows) - 1, len(col_ids)))
    for r, row in enumerate(rows[1:]):
        line = start + r + 2
        if len(row) != len(header):
            raise DataError(f"{path}: line {line} has {len(row)} fields, expected {len(header)}")
        row_ids.append(row[0])
        for c, cell in enumerate(row[1:]):
            try:
                data[r, c] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: line {line}, column {c + 2} ({col_ids[c]!r}): "
                    f"cannot parse {cell!r} as a number") from None
    if orientation == "genes_as_rows":
        return ExpressionMatrix(col_ids, row_ids, data.T, scale)
    return ExpressionMatrix(row_ids, col_ids, data, scale)


def write_expression_tsv(m: ExpressionMatrix, path) -> None:
    """Write ``m`` with samples as rows; full float precision."""
    with _open_text(path, "w") as fh:
        fh.write(f"# scale={m.scale.value}\n")
        fh.write("\t".join(["sample_id", *m.gene_ids]) + "\n")
        for sid, row in zip(m.sample_ids, m.values):
            fh.write("\t".join([sid, *(_fmt(v) for v in row)]) + "\n")


CLINICAL_COLUMNS = ("sample_id", "time_days", "event")


def load_clinical_tsv(path) -> tuple[ClinicalTable, tuple[str, ...]]:
    """Read a clinical table; rows with a missing time are dropped.

    Returns the table and the ids of dropped rows.
    """
    with _open_text(path, "r") as fh:
        reader = csv.DictReader((ln for ln in fh if not ln.startswith("#")), delimiter="\t")
        fields = reader.fieldnames or []
        for col in CLINICAL_COLUMNS:
            if col not in fields:
                raise DataError(f"{path}: missing clinical column {col!r}")
        ids, times, events, dropped = [], [], [], []
        for line, row in enumerate(reader, start=2):
            t = (row["time_days"] or "").strip()
            if t == "" or t.upper() in ("NA", "NAN"):
                dropped.append(row["sample_id"])
                continue
            try:
                times.append(float(t))
                events.append(int(float(row["event"])))
            except ValueError:
                raise DataError(f"{path}: line {line}: bad time/event value") from None
            ids.append(row["sample_id"])
    return ClinicalTable(ids, times, events), tuple(dropped)


def write_clinical_tsv(c: ClinicalTable, path) -> None:
    with _open_text(path, "w") as fh:
        fh.write("\t".join(CLINICAL_COLUMNS) + "\n")
        for sid, t, e in zip(c.sample_ids, c.time, c.event):
            fh.write(f"{sid}\t{_fmt(t)}\t{int(e)}\n")


def join_cohort(expression: ExpressionMatrix, clinical: ClinicalTable,
                cancer_type: str = "unknown") -> tuple[CohortDataset, JoinReport]:
    """Inner-join on sample id, keeping expression order."""
    pos = {s: i for i, s in enumerate(clinical.sample_ids)}
    keep = [i for i, s in enumerate(expression.sample_ids) if s in pos]
    no_clin = tuple(s for s in expression.sample_ids if s not in pos)
    expr_ids = set(expression.sample_ids)
    no_expr = tuple(s for s in clinical.sample_ids if s not in expr_ids)
    if not keep:
        raise DataError("no samples shared between expression and clinical tables")
    expr = expression.select_samples(keep)
    clin = clinical.select([pos[s] for s in expr.sample_ids])
    return CohortDataset(expr, clin, cancer_type), JoinReport(len(keep), no_clin, no_expr)


# ---------------------------------------------------------------------------
# Transforms

def drop_negative_genes(m: ExpressionMatrix) -> tuple[ExpressionMatrix, tuple[str, ...]]:
    """Remove every gene that has a negative value in any sample."""
    bad = np.any(m.values < 0, axis=0)
    dropped = tuple(g for g, b in zip(m.gene_ids, bad) if b)
    if dropped:
        log.info("dropping %d gene(s) with negative values", len(dropped))
    keep = ~bad
    return m.replace(gene_ids=[g for g, k in zip(m.gene_ids, keep) if k],
                     values=m.values[:, keep]), dropped


def log2_transform(m: ExpressionMatrix) -> ExpressionMatrix:
    if m.scale is Scale.LOG2:
        raise DataError("matrix is already log2-transformed")
    if np.any(m.values < 0):
        raise DataError("negative expression values cannot be log-transformed")
    return m.replace(values=np.log1p(m.values) / np.log(2.0), scale=Scale.LOG2)


def rpkm_to_counts(m: ExpressionMatrix, gene_lengths: Mapping[str, float]) -> ExpressionMatrix:
    """Convert RPKM values to read counts by multiplying with gene length."""
    if m.scale is not Scale.RPKM:
        raise DataError(f"expected an RPKM matrix, got scale {m.scale.value}")
    lengths = _lengths(m.gene_ids, gene_lengths)
    return m.replace(values=m.values * lengths, scale=Scale.RAW_COUNT)


def counts_to_rpkm(m: ExpressionMatrix, gene_lengths: Mapping[str, float]) -> ExpressionMatrix:
    """Inverse of :func:`rpkm_to_counts` for the same lengths."""
    if m.scale is not Scale.RAW_COUNT:
        raise DataError(f"expected a raw-count matrix, got scale {m.scale.value}")
    return m.replace(values=m.values / _lengths(m.gene_ids, gene_lengths), scale=Scale.RPKM)


def _lengths(genes: Sequence[str], gene_lengths: Mapping[str, float]) -> np.ndarray:
    missing = [g for g in genes if g not in gene_lengths]
    if missing:
        raise DataError(f"no gene length for: {', '.join(missing)}")
    lengths = np.array([float(gene_lengths[g]) for g in genes])
    if np.any(~(lengths > 0)):
        raise DataError("gene lengths must be positive")
    return lengths


def reference_mean(m: ExpressionMatrix, reference_genes: Iterable[str]) -> tuple[float, tuple[str, ...]]:
    """Grand mean over (present reference gene x sample) cells."""
    col = {g: i for i, g in enumerate(m.gene_ids)}
    present = tuple(g for g in reference_genes if g in col)
    if not present:
        raise DataError("none of the reference genes is present in the cohort")
    return float(m.values[:, [col[g] for g in present]].mean()), present


def housekeeping_normalize(cohort: ExpressionMatrix, reference_genes: Sequence[str],
                           e_target: float) -> tuple[ExpressionMatrix, NormalizationFactor]:
    """Rescale ``cohort`` so its reference-gene mean equals ``e_target``."""
    if cohort.scale is not Scale.RAW_COUNT:
        raise DataError("housekeeping normalization expects raw counts")
    e_cohort, present = reference_mean(cohort, reference_genes)
    if e_cohort <= 0:
        raise DataError("reference genes have zero mean expression in the cohort")
    factor = float(e_target) / e_cohort
    nf = NormalizationFactor(present, float(e_target), e_cohort, factor)
    return cohort.replace(values=cohort.values * factor), nf


def align_genes(cohort: ExpressionMatrix, reference_gene_order: Sequence[str]) -> ExpressionMatrix:
    """Reorder columns to ``reference_gene_order``; absent genes become zero columns."""
    col = {g: i for i, g in enumerate(cohort.gene_ids)}
    ref = list(reference_gene_order)
    ref_set = set(ref)
    out = np.zeros((len(cohort.sample_ids), len(ref)))
    missing = []
    for j, g in enumerate(ref):
        if g in col:
            out[:, j] = cohort.values[:, col[g]]
        else:
            missing.append(g)
    dropped = tuple(g for g in cohort.gene_ids if g not in ref_set)
    report = AlignmentReport(len(ref) - len(missing), tuple(missing), dropped)
    if missing or dropped:
        log.info("gene alignment: %d matched, %d missing (zero-filled), %d dropped",
                 report.matched, len(missing), len(dropped))
    return cohort.replace(gene_ids=ref, values=out, alignment=report)


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


__all__ = [
    "AlignmentReport", "ClinicalTable", "CohortDataset", "DataError", "DEFAULT_HOUSEKEEPING_GENES",
    "ExpressionMatrix", "JoinReport", "NormalizationFactor", "Scale", "align_genes",
    "counts_to_rpkm", "drop_negative_genes", "file_sha256", "housekeeping_normalize",
    "join_cohort", "load_clinical_tsv", "load_expression_tsv", "log2_transform",
    "reference_mean", "rpkm_to_counts", "write_clinical_tsv", "write_expression_tsv",
]
