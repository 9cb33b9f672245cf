"""Comma-separated reports: metrics, SSL iterations, grid search, training log, N-best lists.

Every report has a header row. Writers append (creating the file and header on
first use) so that successive stages accumulate into the same table.
This module imports from config and state — NEVER from higher layers.
"""

import csv
import logging
from collections.abc import Iterable, Sequence
from datetime import UTC, datetime
from pathlib import Path

from pydantic import BaseModel, ValidationError

from src.config import SOURCE_DATE_EPOCH
from src.state.errors import InputError
from src.state.models import GridRow, LossLogRow, MetricsRow, SslReportRow

logger = logging.getLogger(__name__)

METRICS_COLUMNS = (
    "stage",
    "split",
    "wer",
    "substitutions",
    "deletions",
    "insertions",
    "ref_words",
    "utterances",
    "timestamp",
)


def report_timestamp() -> str:
    """ISO timestamp, pinned to SOURCE_DATE_EPOCH when it is set."""
    if SOURCE_DATE_EPOCH:
        return datetime.fromtimestamp(int(SOURCE_DATE_EPOCH), UTC).isoformat()
    return datetime.now(UTC).isoformat()


def reproducible_elapsed(seconds: float) -> float:
    """Elapsed wall time, or 0.0 when runs must be byte-reproducible."""
    return 0.0 if SOURCE_DATE_EPOCH else round(seconds, 3)


def _format(value: object) -> str:
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def append_rows(path: Path, rows: Sequence[BaseModel], columns: Sequence[str] | None = None) -> None:
    """Append pydantic rows to a CSV file, writing the header when the file is new."""
    if not rows:
        return
    columns = list(columns or type(rows[0]).model_fields)
    path.parent.mkdir(parents=True, exist_ok=True)
    new = not path.exists() or path.stat().st_size == 0
    with path.open("a", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if new:
            writer.writerow(columns)
        for row in rows:
            data = row.model_dump()
            writer.writerow([_format(data[c]) for c in columns])


def write_rows(path: Path, rows: Sequence[BaseModel], columns: Sequence[str] | None = None) -> None:
    """Replace a CSV file with the given rows."""
    if path.exists():
        path.unlink()
    append_rows(path, rows, columns)


def _read(path: Path, model: type[BaseModel]) -> list[BaseModel]:
    if not path.is_file():
        msg = f"Report not found: {path}"
        raise InputError(msg)
    with path.open(encoding="utf-8", newline="") as fh:
        try:
            return [model.model_validate(rec) for rec in csv.DictReader(fh)]
        except ValidationError as e:
            msg = f"Malformed report {path}: {e}"
            raise InputError(msg) from e


def read_metrics(path: Path) -> list[MetricsRow]:
    """Load metrics rows; WER/S/D/I consistency is re-validated on load."""
    return [MetricsRow.model_validate(r.model_dump()) for r in _read(path, MetricsRow)]


def read_ssl_report(path: Path) -> list[SslReportRow]:
    return [SslReportRow.model_validate(r.model_dump()) for r in _read(path, SslReportRow)]


def read_grid(path: Path) -> list[GridRow]:
    return [GridRow.model_validate(r.model_dump()) for r in _read(path, GridRow)]


def append_loss_log(path: Path, rows: Iterable[LossLogRow]) -> None:
    append_rows(path, list(rows))


def write_nbest(path: Path, records: Iterable[tuple[str, int, float, float, Sequence[str]]]) -> None:
    """Write N-best records: utterance id, rank, acoustic score, LM score, word sequence."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["utterance_id", "rank", "acoustic", "lm", "words"])
        for uid, rank, am, lm, words in records:
            writer.writerow([uid, rank, f"{am:.6f}", f"{lm:.6f}", " ".join(words)])
