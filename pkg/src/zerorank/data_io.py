"""Abundance-table ingestion, per-taxon testing and FDR adjustment.

Tables are TSV: first column taxon id, header row sample ids, cells
non-negative decimals.  Metadata is TSV with a header naming at least
``sample`` and ``group``; ``subject`` and ``time`` columns enable the
repeated-measurement workflow.  Values may be relative abundances or raw
counts — every test here is rank-based, so no normalization is applied
(nor needed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError, DegenerateData, MetadataMismatch, TableParseError
from .k_sample import McVarianceConfig, kruskal_wallis_standard, kruskal_wallis_truncated
from .permutation import LongFormat, perm_test_groups, perm_test_within_subject
from .rank_core import GroupSample
from .rng import seed_sequence
from .two_sample import wilcoxon_standard, wilcoxon_truncated

METHODS = ("w", "tw", "kw", "tkw")


@dataclass(frozen=True)
class AbundanceTable:
    """Taxa x samples matrix of non-negative abundances."""

    taxa: tuple[str, ...]
    samples: tuple[str, ...]
    matrix: np.ndarray

    def __post_init__(self) -> None:
        if self.matrix.shape != (len(self.taxa), len(self.samples)):
            raise ValueError("matrix shape does not match taxa x samples")
        if (self.matrix < 0).any():
            raise ValueError("abundances must be non-negative")


@dataclass(frozen=True)
class SampleMetadata:
    """Per-sample group label with optional subject and timepoint."""

    samples: tuple[str, ...]
    groups: tuple[str, ...]
    subjects: tuple[str, ...] | None = None
    times: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if len(set(self.samples)) != len(self.samples):
            raise ValueError("duplicate sample ids in metadata")
        for name, column in (("groups", self.groups), ("subjects", self.subjects),
                             ("times", self.times)):
            if column is not None and len(column) != len(self.samples):
                raise ValueError(f"{name} length does not match samples")

    def column(self, name: str) -> dict[str, str]:
        values = {"group": self.groups, "subject": self.subjects, "time": self.times}[name]
        if values is None:
            raise MetadataMismatch(f"metadata has no {name!r} column")
        return dict(zip(self.samples, values))


@dataclass(frozen=True)
class ResultRow:
    """Per-taxon test result; NaN marks a taxon the method cannot score."""

    taxon: str
    method: str
    statistic: float
    df: int
    p_value: float
    q_value: float
    zero_fractions: tuple[float, ...]
    n_retained: tuple[int, ...]


def _parse_cell(text: str, line_no: int, taxon: str, sample: str) -> float:
    stripped = text.strip()
    if not stripped:
        raise TableParseError(
            f"line {line_no}: blank cell at taxon {taxon!r}, sample {sample!r}"
        )
    try:
        value = float(stripped)
    except ValueError:
        raise TableParseError(
            f"line {line_no}: non-numeric value {text!r} at taxon {taxon!r}, "
            f"sample {sample!r}"
        ) from None
    if not np.isfinite(value):
        raise TableParseError(
            f"line {line_no}: non-finite value {text!r} at taxon {taxon!r}, "
            f"sample {sample!r}"
        )
    if value < 0:
        raise TableParseError(
            f"line {line_no}: negative value {text!r} at taxon {taxon!r}, "
            f"sample {sample!r}"
        )
    return value


def load_table(path: str) -> AbundanceTable:
    """Parse an abundance TSV, rejecting malformed content with line numbers."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise TableParseError(f"{path}: empty file")
    header = lines[0].split("\t")
    samples = header[1:]
    if not samples:
        raise TableParseError(f"{path}: header has no sample columns")
    if len(set(samples)) != len(samples):
        raise TableParseError(f"{path}: duplicate sample ids in header")
    if any(not s.strip() for s in samples):
        raise TableParseError(f"{path}: blank sample id in header")

    taxa: list[str] = []
    rows: list[list[float]] = []
    seen: set[str] = set()
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != len(samples) + 1:
            raise TableParseError(
                f"line {line_no}: expected {len(samples) + 1} columns, got {len(fields)}"
            )
        taxon = fields[0].strip()
        if not taxon:
            raise TableParseError(f"line {line_no}: blank taxon id")
        if taxon in seen:
            raise TableParseError(f"line {line_no}: duplicate taxon id {taxon!r}")
        seen.add(taxon)
        taxa.append(taxon)
        rows.append(
            [
                _parse_cell(cell, line_no, taxon, sample)
                for cell, sample in zip(fields[1:], samples)
            ]
        )
    if not taxa:
        raise TableParseError(f"{path}: no data rows")
    return AbundanceTable(
        taxa=tuple(taxa), samples=tuple(samples), matrix=np.array(rows)
    )


def table_to_tsv(table: AbundanceTable) -> str:
    """Canonical serialization; inverse of load_table for canonical files."""
    lines = ["taxon\t" + "\t".join(table.samples)]
    for taxon, row in zip(table.taxa, table.matrix):
        lines.append(taxon + "\t" + "\t".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def load_metadata(path: str) -> SampleMetadata:
    """Parse a metadata TSV with header (sample, group[, subject, time])."""
    with open(path, encoding="utf-8") as fh:
        lines = [line for line in fh.read().splitlines() if line.strip()]
    if not lines:
        raise TableParseError(f"{path}: empty metadata file")
    header = [h.strip() for h in lines[0].split("\t")]
    for required in ("sample", "group"):
        if required not in header:
            raise TableParseError(f"{path}: metadata header lacks {required!r} column")
    index = {name: header.index(name) for name in header}
    columns: dict[str, list[str]] = {name: [] for name in ("sample", "group", "subject", "time")}
    for line_no, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        if len(fields) != len(header):
            raise TableParseError(
                f"line {line_no}: expected {len(header)} columns, got {len(fields)}"
            )
        for name in columns:
            if name in index:
                value = fields[index[name]].strip()
                if not value:
                    raise TableParseError(f"line {line_no}: blank {name!r} entry")
                columns[name].append(value)
    return SampleMetadata(
        samples=tuple(columns["sample"]),
        groups=tuple(columns["group"]),
        subjects=tuple(columns["subject"]) if "subject" in index else None,
        times=tuple(columns["time"]) if "time" in index else None,
    )


def bh_fdr(p_values) -> np.ndarray:
    """Benjamini-Hochberg step-up q-values; NaN entries propagate.

    q_(i) = min_{j >= i} (m p_(j) / j) clipped at 1, with m the number of
    non-NaN p-values.
    """
    p = np.asarray(p_values, dtype=float)
    mask = ~np.isnan(p)
    if ((p[mask] < 0) | (p[mask] > 1)).any():
        raise ValueError("p-values must lie in [0, 1]")
    q = np.full(p.shape, np.nan)
    m = int(mask.sum())
    if m == 0:
        return q
    ps = p[mask]
    order = np.argsort(ps, kind="stable")
    scaled = ps[order] * m / np.arange(1, m + 1)
    stepped = np.minimum.accumulate(scaled[::-1])[::-1]
    out = np.empty(m)
    out[order] = np.clip(stepped, 0.0, 1.0)
    q[mask] = out
    return q


def _group_values(
    table: AbundanceTable, meta: SampleMetadata
) -> tuple[list[str], list[np.ndarray]]:
    """Column indices of each group in first-appearance metadata order."""
    group_of = meta.column("group")
    missing = [s for s in table.samples if s not in group_of]
    if missing:
        raise MetadataMismatch(f"samples without metadata rows: {missing}")
    in_table = set(table.samples)
    labels: list[str] = []
    for sample in meta.samples:
        if sample in in_table and group_of[sample] not in labels:
            labels.append(group_of[sample])
    columns = [
        np.array([i for i, s in enumerate(table.samples) if group_of[s] == label])
        for label in labels
    ]
    return labels, columns


def _method_outcome(method: str, groups: list[GroupSample], mc: McVarianceConfig):
    if method == "w":
        return wilcoxon_standard(groups[0], groups[1])
    if method == "tw":
        return wilcoxon_truncated(groups[0], groups[1], mc=mc)
    if method == "kw":
        return kruskal_wallis_standard(groups)
    if method == "tkw":
        return kruskal_wallis_truncated(groups, mc)
    raise ConfigError(f"unknown method {method!r}; choose from {METHODS}")


def run_differential_abundance(
    table: AbundanceTable,
    meta: SampleMetadata,
    method: str,
    permutations: int = 0,
    seed: int = 0,
    mc: McVarianceConfig | None = None,
    fdr: str = "bh",
) -> list[ResultRow]:
    """Apply one test per taxon and attach BH q-values across taxa.

    Taxa on which the method is degenerate (for rank tests: all-zero or
    constant rows) get NaN statistics and are excluded from the BH family.
    With ``permutations`` > 0, p-values come from group-label permutation
    (stream keyed by (seed, taxon index)) instead of the asymptotic law.
    """
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from {METHODS}")
    if fdr not in ("bh", "none"):
        raise ConfigError("fdr must be 'bh' or 'none'")
    labels, columns = _group_values(table, meta)
    if method in ("w", "tw") and len(labels) != 2:
        raise ConfigError(f"method {method!r} needs exactly two groups, found {len(labels)}")
    if len(labels) < 2:
        raise MetadataMismatch("at least two groups are required")
    mc = mc or McVarianceConfig()

    rows: list[ResultRow] = []
    for taxon_idx, taxon in enumerate(table.taxa):
        values = table.matrix[taxon_idx]
        groups = [GroupSample(values[cols]) for cols in columns]
        zero_fractions = tuple(1.0 - g.p for g in groups)
        try:
            if permutations > 0:
                perm_seed = int(seed_sequence(seed, taxon_idx).generate_state(1)[0])
                perm = perm_test_groups(
                    groups, method, permutations=permutations, seed=perm_seed, mc=mc
                )
                outcome, p_value = perm.outcome, perm.p_value
            else:
                outcome = _method_outcome(method, groups, mc)
                p_value = outcome.p_value
            rows.append(
                ResultRow(
                    taxon=taxon,
                    method=method,
                    statistic=outcome.statistic,
                    df=outcome.df,
                    p_value=p_value,
                    q_value=np.nan,
                    zero_fractions=zero_fractions,
                    n_retained=outcome.n_retained,
                )
            )
        except DegenerateData:
            rows.append(
                ResultRow(
                    taxon=taxon,
                    method=method,
                    statistic=np.nan,
                    df=len(labels) - 1,
                    p_value=np.nan,
                    q_value=np.nan,
                    zero_fractions=zero_fractions,
                    n_retained=(0,) * len(labels),
                )
            )
    if fdr == "bh":
        qs = bh_fdr([row.p_value for row in rows])
        rows = [replace(row, q_value=float(q)) for row, q in zip(rows, qs)]
    return rows


def run_longitudinal(
    table: AbundanceTable,
    meta: SampleMetadata,
    method: str = "tkw",
    permutations: int = 100_000,
    seed: int = 0,
    mc: McVarianceConfig | None = None,
) -> list[ResultRow]:
    """Per-taxon within-subject permutation tests across timepoints."""
    if method not in ("kw", "tkw"):
        raise ConfigError("longitudinal testing supports 'kw' or 'tkw'")
    subject_of = meta.column("subject")
    time_of = meta.column("time")
    missing = [s for s in table.samples if s not in subject_of]
    if missing:
        raise MetadataMismatch(f"samples without metadata rows: {missing}")
    mc = mc or McVarianceConfig()
    rows: list[ResultRow] = []
    timepoints: list[str] = []
    for s in table.samples:
        if time_of[s] not in timepoints:
            timepoints.append(time_of[s])
    time_columns = [
        np.array([j for j, s in enumerate(table.samples) if time_of[s] == t])
        for t in timepoints
    ]
    for taxon_idx, taxon in enumerate(table.taxa):
        values = table.matrix[taxon_idx]
        zero_fractions = tuple(
            float((values[cols] == 0).mean()) for cols in time_columns
        )
        records = tuple(
            (subject_of[s], time_of[s], float(values[j]))
            for j, s in enumerate(table.samples)
        )
        try:
            perm_seed = int(seed_sequence(seed, taxon_idx).generate_state(1)[0])
            result = perm_test_within_subject(
                LongFormat(records), method, permutations=permutations,
                seed=perm_seed, mc=mc,
            )
            outcome = result.outcome
            rows.append(
                ResultRow(
                    taxon=taxon,
                    method=method,
                    statistic=outcome.statistic,
                    df=outcome.df,
                    p_value=result.p_value,
                    q_value=np.nan,
                    zero_fractions=zero_fractions,
                    n_retained=outcome.n_retained,
                )
            )
        except DegenerateData:
            rows.append(
                ResultRow(
                    taxon=taxon, method=method, statistic=np.nan,
                    df=len(timepoints) - 1, p_value=np.nan, q_value=np.nan,
                    zero_fractions=zero_fractions, n_retained=(),
                )
            )
    return rows


def _format(value: float) -> str:
    return "NA" if isinstance(value, float) and np.isnan(value) else f"{value:.6g}"


def rows_to_tsv(rows: Sequence[ResultRow]) -> str:
    """Serialize result rows with a header line; NaN becomes NA."""
    header = "taxon\tmethod\tstatistic\tdf\tp_value\tq_value\tzero_fractions\tn_retained"
    lines = [header]
    for row in rows:
        lines.append(
            "\t".join(
                [
                    row.taxon,
                    row.method,
                    _format(row.statistic),
                    str(row.df),
                    _format(row.p_value),
                    _format(row.q_value),
                    ",".join(f"{z:.6g}" for z in row.zero_fractions),
                    ",".join(str(n) for n in row.n_retained),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def rows_to_json_lines(rows: Sequence[ResultRow]) -> str:
    """One JSON object per row; NaN becomes null."""
    out = []
    for row in rows:
        record = {
            "taxon": row.taxon,
            "method": row.method,
            "statistic": None if np.isnan(row.statistic) else row.statistic,
            "df": row.df,
            "p_value": None if np.isnan(row.p_value) else row.p_value,
            "q_value": None if np.isnan(row.q_value) else row.q_value,
            "zero_fractions": list(row.zero_fractions),
            "n_retained": list(row.n_retained),
        }
        out.append(json.dumps(record))
    return "\n".join(out) + "\n"
