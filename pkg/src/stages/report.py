"""Metrics rows, per-utterance scoring reports and the consolidated comparison table.

This module imports from decoder and state — it is in stages/, the top of the stack.
"""

import logging
from collections.abc import Sequence
from pathlib import Path

from src.decoder.scoring import WerResult, score_wer
from src.state.models import MetricsRow, ScoringRow, Split
from src.state.reports import read_metrics, report_timestamp, write_rows

logger = logging.getLogger(__name__)

SUMMARY_NAME = "summary.csv"
RESCORED_SUFFIX = "+rescored"
TOTAL_ID = "*total*"

# Supervised systems in the order they are built; SSL iterations and the SSL best follow.
TRAINED_STAGES = ("ce-random", "nsdl-random", "ce-biapc", "nsdl-biapc")
EXPECTED_STAGES = ("ce-random", "nsdl-random", "nsdl-biapc", "ssl")
REPORTED_SPLITS = (Split.DEV, Split.EVAL)


def metrics_row(stage: str, split: Split, result: WerResult, utterances: int) -> MetricsRow:
    return MetricsRow(
        stage=stage,
        split=split,
        wer=result.wer,
        substitutions=result.substitutions,
        deletions=result.deletions,
        insertions=result.insertions,
        ref_words=result.ref_words,
        utterances=utterances,
        timestamp=report_timestamp(),
    )


def scoring_rows(utterances: Sequence[tuple[str, Sequence[str], Sequence[str]]]) -> list[ScoringRow]:
    """One row per (utterance id, reference, hypothesis) plus a ``*total*`` summary row."""
    rows: list[ScoringRow] = []
    total = WerResult(0, 0, 0, 0)
    for uid, reference, hypothesis in utterances:
        result = score_wer(reference, hypothesis) if reference else WerResult(0, 0, len(hypothesis), 0)
        total = total + result
        rows.append(
            ScoringRow(
                utterance_id=uid,
                reference=" ".join(reference),
                hypothesis=" ".join(hypothesis),
                substitutions=result.substitutions,
                deletions=result.deletions,
                insertions=result.insertions,
                ref_words=result.ref_words,
                wer=result.wer,
            )
        )
    rows.append(
        ScoringRow(
            utterance_id=TOTAL_ID,
            reference="",
            hypothesis="",
            substitutions=total.substitutions,
            deletions=total.deletions,
            insertions=total.insertions,
            ref_words=total.ref_words,
            wer=total.wer,
        )
    )
    return rows


def stage_order(stage: str) -> tuple[int, int, str, bool]:
    """Sort key placing rows in pipeline order, each rescored row right after its first pass."""
    base = stage.removesuffix(RESCORED_SUFFIX)
    rescored = base != stage
    if base in TRAINED_STAGES:
        return (TRAINED_STAGES.index(base), 0, base, rescored)
    if base.startswith("ssl") and base[3:].isdigit():
        return (len(TRAINED_STAGES), int(base[3:]), base, rescored)
    if base == "ssl":
        return (len(TRAINED_STAGES) + 1, 0, base, rescored)
    return (len(TRAINED_STAGES) + 2, 0, base, rescored)


def consolidate(rows: Sequence[MetricsRow]) -> list[MetricsRow]:
    """Latest row per (stage, split), WER recomputed from the edit counts, in pipeline order."""
    latest: dict[tuple[str, Split], MetricsRow] = {}
    for row in rows:
        counts = WerResult(row.substitutions, row.deletions, row.insertions, row.ref_words)
        latest[(row.stage, row.split)] = row.model_copy(update={"wer": counts.wer})
    for stage in EXPECTED_STAGES:
        for split in REPORTED_SPLITS:
            if (stage, split) not in latest:
                logger.warning("report_missing | stage=%s split=%s", stage, split)
    split_rank = {s: i for i, s in enumerate(Split)}
    return sorted(latest.values(), key=lambda r: (stage_order(r.stage), split_rank[r.split]))


def cmd_report(metrics_path: Path, out_dir: Path) -> Path:
    """Write the consolidated comparison table next to the metrics file.

    Raises:
        InputError: If the metrics file is missing or a row is inconsistent.
    """
    table = consolidate(read_metrics(metrics_path))
    out = out_dir / SUMMARY_NAME
    write_rows(out, table)
    for row in table:
        logger.info(
            "report_row | stage=%s split=%s wer=%.2f sub=%d del=%d ins=%d",
            row.stage,
            row.split,
            row.wer,
            row.substitutions,
            row.deletions,
            row.insertions,
        )
    return out
