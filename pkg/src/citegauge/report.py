"""Stage/language metric tables with delta arrows and best-marking, plus series IO.

Direction arrows compare each stage to the previous one; a change is flat
only when |delta| < 0.01 (strict), so a delta of exactly 0.01 still counts
as movement. Hallucination rate is the registry's only lower-is-better
metric.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .errors import ColumnMismatch, StageOrderError
from .reward import GrpoStepRecord

METRIC_REGISTRY = ("bleu", "rouge1", "rougeL", "factscore", "citation_f1", "halluc_rate", "semantic")
LOWER_IS_BETTER = frozenset({"halluc_rate"})
STAGES = ("baseline", "s1", "s2", "s3", "s4")
LANGUAGE_GROUPS = ("overall", "en", "hi")
FLAT_THRESHOLD = 0.01

_ARROWS = {"up": "↑", "down": "↓", "flat": "~"}


@dataclass(frozen=True)
class StageResult:
    model: str
    stage: str
    language: str
    metrics: dict

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"stage must be one of {STAGES}, got {self.stage!r}")
        if self.language not in LANGUAGE_GROUPS:
            raise ValueError(f"language must be one of {LANGUAGE_GROUPS}, got {self.language!r}")
        unknown = set(self.metrics) - set(METRIC_REGISTRY)
        if unknown:
            raise ValueError(f"unknown metric names {sorted(unknown)}")


@dataclass(frozen=True)
class DeltaAnnotation:
    direction: str
    delta: float

    @classmethod
    def from_delta(cls, delta: float) -> "DeltaAnnotation":
        if abs(delta) < FLAT_THRESHOLD:
            return cls(direction="flat", delta=delta)
        return cls(direction="up" if delta > 0 else "down", delta=delta)


@dataclass(frozen=True)
class StageTable:
    """Rows for one (model, language) series plus optional annotation layers."""

    rows: tuple[StageResult, ...]
    deltas: Optional[dict] = None
    bold: Optional[frozenset] = None


def _as_table(results: Union[StageTable, Sequence[StageResult]]) -> StageTable:
    if isinstance(results, StageTable):
        return results
    return StageTable(rows=tuple(results))


def _check_uniform(rows: Sequence[StageResult]) -> None:
    if not rows:
        raise StageOrderError("no stage results given")
    if len({(r.model, r.language) for r in rows}) != 1:
        raise ValueError("all rows must share one model and language group")


def annotate_deltas(results: Union[StageTable, Sequence[StageResult]]) -> StageTable:
    """Attach direction-of-change annotations versus the previous stage.

    The baseline row stays unannotated. Stages must be in pipeline order
    with the baseline first.
    """
    table = _as_table(results)
    rows = table.rows
    _check_uniform(rows)
    order = [STAGES.index(r.stage) for r in rows]
    if rows[0].stage != "baseline" or order != sorted(order) or len(set(order)) != len(order):
        raise StageOrderError(f"stages out of pipeline order: {[r.stage for r in rows]}")
    deltas: dict = {}
    for prev, curr in zip(rows, rows[1:]):
        for name, value in curr.metrics.items():
            if name in prev.metrics:
                deltas[(curr.stage, name)] = DeltaAnnotation.from_delta(value - prev.metrics[name])
    return StageTable(rows=rows, deltas=deltas, bold=table.bold)


def bold_best(results: Union[StageTable, Sequence[StageResult]]) -> StageTable:
    """Mark the best stage per metric (min for halluc_rate, max otherwise); ties all marked."""
    table = _as_table(results)
    rows = table.rows
    _check_uniform(rows)
    bold = set()
    names = {name for row in rows for name in row.metrics}
    for name in names:
        values = [(row.stage, row.metrics[name]) for row in rows if name in row.metrics]
        if not values:
            continue
        pick = min if name in LOWER_IS_BETTER else max
        best = pick(v for _, v in values)
        for stage, value in values:
            if value == best:
                bold.add((stage, name))
    return StageTable(rows=rows, deltas=table.deltas, bold=frozenset(bold))


# -- series emission -----------------------------------------------------------

def stage_result_to_record(result: StageResult) -> dict:
    record = {"model": result.model, "stage": result.stage, "language": result.language}
    for name in METRIC_REGISTRY:
        if name in result.metrics:
            record[name] = result.metrics[name]
    return record


def stage_result_from_record(record: dict) -> StageResult:
    metrics = {k: record[k] for k in METRIC_REGISTRY if k in record}
    return StageResult(
        model=record["model"], stage=record["stage"], language=record["language"], metrics=metrics
    )


def _normalize_records(records: Iterable) -> list[dict]:
    rows = []
    for item in records:
        if isinstance(item, GrpoStepRecord):
            rows.append(item.to_wire())
        elif isinstance(item, StageResult):
            rows.append(stage_result_to_record(item))
        elif isinstance(item, dict):
            rows.append(dict(item))
        else:
            raise TypeError(f"cannot emit {type(item).__name__}")
    if rows:
        columns = list(rows[0].keys())
        for row in rows[1:]:
            if list(row.keys()) != columns:
                raise ColumnMismatch(
                    f"mixed columns: {columns} vs {list(row.keys())}"
                )
    return rows


def emit_series(records: Iterable, path, format: str = "jsonl") -> None:
    """Write records to CSV or JSONL with a stable column order."""
    rows = _normalize_records(records)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if format == "jsonl":
        with open(path, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row, ensure_ascii=False))
                fh.write("\n")
    elif format == "csv":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            if rows:
                writer.writerow(rows[0].keys())
                for row in rows:
                    writer.writerow(row.values())
    else:
        raise ValueError(f"format must be csv or jsonl, got {format!r}")


def load_series(path) -> list[dict]:
    """Read back a JSONL series."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def render_table(table: StageTable) -> str:
    """Plain-text table with delta arrows and '*' marking the best stage per metric."""
    rows = table.rows
    _check_uniform(rows)
    names = [n for n in METRIC_REGISTRY if any(n in r.metrics for r in rows)]
    header = [f"{rows[0].model} ({rows[0].language})"] + names
    lines = ["\t".join(header)]
    for row in rows:
        cells = [row.stage]
        for name in names:
            if name not in row.metrics:
                cells.append("-")
                continue
            cell = f"{row.metrics[name]:.3f}"
            if table.deltas and (row.stage, name) in table.deltas:
                cell += _ARROWS[table.deltas[(row.stage, name)].direction]
            if table.bold and (row.stage, name) in table.bold:
                cell = "*" + cell
            cells.append(cell)
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"
