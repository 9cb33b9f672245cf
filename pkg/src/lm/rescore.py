"""Second-pass N-best rescoring with the recurrent LM and the dev-set weight search.

replace:      score = acoustic + w * rnnlm
interpolate:  score = acoustic + (1 - w) * lm_scale * bigram + w * rnnlm
Hypotheses are never edited, only re-ranked with a stable sort.
This module imports from decoder, nnet and state — NEVER from acoustic/, semisup/ or stages/.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, replace

import numpy as np

from src.decoder.nbest import NBestList
from src.decoder.scoring import WerResult, corpus_wer
from src.lm.rnnlm import RnnLm, score_sentences
from src.state.errors import ConfigurationError, ContractError
from src.state.models import GridRow, RescoreMode

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridResult:
    """Selected weight and the full (weight, dev WER) table in grid order."""

    best_weight: float
    rows: list[GridRow]


def lm_scores(nbest: NBestList, lm: RnnLm) -> np.ndarray:
    return score_sentences(lm, [h.words for h in nbest.hypotheses])


def combined_scores(
    nbest: NBestList,
    rnn_scores: np.ndarray,
    weight: float,
    mode: RescoreMode = RescoreMode.REPLACE,
    lm_scale: float = 1.0,
) -> np.ndarray:
    if weight < 0:
        msg = f"Rescoring weight must be >= 0, got {weight}"
        raise ContractError(msg)
    acoustic = np.array([h.acoustic for h in nbest.hypotheses])
    if mode == RescoreMode.REPLACE:
        return acoustic + weight * rnn_scores
    bigram = np.array([h.lm for h in nbest.hypotheses])
    return acoustic + (1.0 - weight) * lm_scale * bigram + weight * rnn_scores


def rerank(nbest: NBestList, scores: np.ndarray) -> NBestList:
    order = np.argsort(-scores, kind="stable")
    return NBestList(
        utterance_id=nbest.utterance_id,
        hypotheses=[replace(nbest.hypotheses[i], score=float(scores[i])) for i in order],
    )


def rescore_nbest(
    nbest: NBestList,
    lm: RnnLm,
    weight: float,
    mode: RescoreMode = RescoreMode.REPLACE,
    lm_scale: float = 1.0,
) -> NBestList:
    """Re-rank one N-best list by the combined second-pass score."""
    if not nbest.hypotheses:
        return nbest
    return rerank(nbest, combined_scores(nbest, lm_scores(nbest, lm), weight, mode, lm_scale))


def _best_words(nbest: NBestList, scores: np.ndarray) -> tuple[str, ...]:
    if not nbest.hypotheses:
        return ()
    return nbest.hypotheses[int(np.argmax(scores))].words


def rescored_wer(
    nbests: Sequence[NBestList],
    references: Sequence[Sequence[str]],
    rnn_scores: Sequence[np.ndarray],
    weight: float,
    mode: RescoreMode = RescoreMode.REPLACE,
    lm_scale: float = 1.0,
) -> WerResult:
    """Corpus WER of the rescored 1-best hypotheses."""
    pairs = []
    for nbest, ref, rnn in zip(nbests, references, rnn_scores, strict=True):
        scores = combined_scores(nbest, rnn, weight, mode, lm_scale) if nbest.hypotheses else np.zeros(0)
        pairs.append((ref, _best_words(nbest, scores)))
    return corpus_wer(pairs)


def grid_search(
    nbests: Sequence[NBestList],
    references: Sequence[Sequence[str]],
    lm: RnnLm,
    grid: Sequence[float],
    mode: RescoreMode = RescoreMode.REPLACE,
    lm_scale: float = 1.0,
) -> GridResult:
    """Dev WER for every grid weight; the lowest wins and ties go to the smaller weight.

    Raises:
        ConfigurationError: If the grid is empty.
        ContractError: If N-best lists and references do not pair up.
    """
    if not grid:
        msg = "Rescoring grid is empty"
        raise ConfigurationError(msg)
    if len(nbests) != len(references):
        msg = f"{len(nbests)} N-best lists for {len(references)} references"
        raise ContractError(msg)
    rnn = [lm_scores(n, lm) if n.hypotheses else np.zeros(0) for n in nbests]
    rows = [
        GridRow(weight=w, dev_wer=rescored_wer(nbests, references, rnn, w, mode, lm_scale).wer) for w in grid
    ]
    best = min(rows, key=lambda r: (r.dev_wer, r.weight))
    logger.info("grid_search | weights=%d best_weight=%.3f dev_wer=%.2f", len(rows), best.weight, best.dev_wer)
    return GridResult(best_weight=best.weight, rows=rows)
