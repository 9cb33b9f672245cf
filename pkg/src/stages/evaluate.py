"""Evaluation stages: first-pass WER, N-best lists and recurrent-LM rescoring.

The rescoring weight is always picked on dev and then applied unchanged to the
evaluated split.
This module imports from acoustic, decoder, lm and state — it is in stages/, the top of the stack.
"""

import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from src.acoustic.recognize import Recognizer, build_recognizer, decode_entries, score_decoded
from src.decoder.nbest import NBestList
from src.decoder.scoring import corpus_wer
from src.frontend.augment import as_augmented
from src.lm.rescore import GridResult, grid_search, rescore_nbest
from src.lm.rnnlm import RnnLm, load_rnnlm
from src.stages.report import RESCORED_SUFFIX, metrics_row, scoring_rows
from src.stages.workspace import GRID_NAME, METRICS_NAME, RNNLM_SECTIONS, Workspace
from src.state.errors import DecodeError, UsageError
from src.state.models import AugmentedEntry, MetricsRow, Split
from src.state.reports import append_rows, write_nbest, write_rows

logger = logging.getLogger(__name__)

EVALUATION_SPLITS = (Split.DEV, Split.EVAL)


def parse_split(name: str) -> Split:
    """Raises UsageError unless ``name`` is dev or eval."""
    for split in EVALUATION_SPLITS:
        if name == split.value:
            return split
    msg = f"Unknown split {name!r}; expected one of {[s.value for s in EVALUATION_SPLITS]}"
    raise UsageError(msg)


def load_recognizer(ws: Workspace, checkpoint: Path) -> tuple[Recognizer, str]:
    """An acoustic checkpoint bound to the decoding graph, and its stage tag."""
    params, ckpt = ws.load(checkpoint)
    model = ws.acoustic_model(ws.loss_of(ckpt))
    return build_recognizer(model, params, ws.lexicon, ws.bigram, ws.config.decode), ckpt.stage


def load_lm(ws: Workspace, path: Path) -> RnnLm:
    ws.require(path)
    return load_rnnlm(path, digest=ws.digest(RNNLM_SECTIONS))


def collect_nbests(recognizer: Recognizer, entries: Sequence[AugmentedEntry], ws: Workspace) -> list[NBestList]:
    """N-best lists in input order; undecodable utterances get an empty list."""
    n = ws.config.decode.nbest

    def one(entry: AugmentedEntry) -> NBestList:
        features = ws.store.features(entry).frames
        try:
            return recognizer.nbest(features, n, entry.entry_id)
        except DecodeError as exc:
            logger.warning("nbest_failed | entry=%s reason=%s", entry.entry_id, exc)
            return NBestList(utterance_id=entry.entry_id)

    with ThreadPoolExecutor(max_workers=max(1, ws.jobs)) as pool:
        return list(pool.map(one, entries))


def nbest_records(nbests: Sequence[NBestList]) -> list[tuple[str, int, float, float, tuple[str, ...]]]:
    return [
        (nb.utterance_id, rank, h.acoustic, h.lm, h.words)
        for nb in nbests
        for rank, h in enumerate(nb.hypotheses, start=1)
    ]


def split_entries(ws: Workspace, split: Split) -> list[AugmentedEntry]:
    return [as_augmented(e) for e in ws.split(split)]


def dev_grid(ws: Workspace, recognizer: Recognizer, lm: RnnLm, dev_nbests: Sequence[NBestList]) -> GridResult:
    """Grid search over ``[rnnlm] grid`` on dev; the table is written to reports/grid.csv."""
    references = [e.transcript for e in ws.split(Split.DEV)]
    rnnlm, decode = ws.config.rnnlm, ws.config.decode
    grid = grid_search(dev_nbests, references, lm, rnnlm.grid, rnnlm.mode, decode.lm_scale)
    write_rows(ws.reports_dir / GRID_NAME, grid.rows)
    return grid


def cmd_rescore_grid(ws: Workspace, checkpoint: Path, lm_path: Path) -> GridResult:
    ws.require(checkpoint, lm_path)
    recognizer, _ = load_recognizer(ws, checkpoint)
    lm = load_lm(ws, lm_path)
    return dev_grid(ws, recognizer, lm, collect_nbests(recognizer, split_entries(ws, Split.DEV), ws))


def cmd_evaluate(ws: Workspace, checkpoint: Path, split_name: str, rescore: Path | None = None) -> list[MetricsRow]:
    """First-pass WER on a split, plus a rescored row when an LM is given.

    Writes the per-utterance scoring report and appends the rows to reports/metrics.csv.

    Raises:
        UsageError: On a split other than dev or eval.
        InputError: If the checkpoint or LM is missing.
    """
    split = parse_split(split_name)
    ws.require(checkpoint, *([rescore] if rescore is not None else []))
    recognizer, stage = load_recognizer(ws, checkpoint)
    entries = split_entries(ws, split)
    decoded = decode_entries(recognizer, entries, ws.store, ws.jobs)
    rows = [metrics_row(stage, split, score_decoded(decoded), len(entries))]
    utterances = [(d.entry.entry_id, d.entry.transcript, d.hypothesis.words if d.hypothesis else ()) for d in decoded]
    write_rows(ws.reports_dir / f"scoring_{stage}_{split}.csv", scoring_rows(utterances))
    if rescore is not None:
        lm = load_lm(ws, rescore)
        nbests = collect_nbests(recognizer, entries, ws)
        dev_nbests = nbests if split == Split.DEV else collect_nbests(recognizer, split_entries(ws, Split.DEV), ws)
        weight = dev_grid(ws, recognizer, lm, dev_nbests).best_weight
        rnnlm, decode = ws.config.rnnlm, ws.config.decode
        rescored = [rescore_nbest(nb, lm, weight, rnnlm.mode, decode.lm_scale) for nb in nbests]
        pairs = zip(entries, rescored, strict=True)
        result = corpus_wer((e.transcript, nb.best.words if nb.hypotheses else ()) for e, nb in pairs)
        rows.append(metrics_row(f"{stage}{RESCORED_SUFFIX}", split, result, len(entries)))
        write_nbest(ws.reports_dir / f"nbest_{stage}_{split}.csv", nbest_records(nbests))
        logger.info("rescored | stage=%s split=%s weight=%.3f wer=%.2f", stage, split, weight, result.wer)
    append_rows(ws.reports_dir / METRICS_NAME, rows)
    return rows
