"""Exact N-best list of distinct word sequences.

Each graph node keeps up to N tokens per frame, one per distinct word-sequence
prefix, each holding the best score of that prefix. Keeping only the N best
prefixes per node loses nothing: if more than N prefixes beat a given one at a
node, the same continuation turns them into more than N better sequences.
Prefixes are identified by a 64-bit rolling hash of their word ids.
This module imports from state — NEVER from acoustic/ or higher layers.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from src.decoder.graph import NO_WORD, DecodingGraph
from src.decoder.viterbi import Hypothesis, acoustic_scores, incoming_weights, path_hypothesis
from src.state.errors import ContractError, DecodeError
from src.state.settings import DecodeSettings

logger = logging.getLogger(__name__)

_PRIME = np.uint64(0x100000001B3)


@dataclass
class NBestList:
    """Hypotheses ranked by combined score, best first."""

    utterance_id: str = ""
    hypotheses: list[Hypothesis] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.hypotheses)

    @property
    def best(self) -> Hypothesis:
        return self.hypotheses[0]


def _extend(prefix: np.ndarray, word: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return prefix * _PRIME + (word + 1).astype(np.uint64)


def _dedupe_top(scores: np.ndarray, hashes: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Per row: best score per hash, then the k best survivors. Returns (column index, score)."""
    order = np.lexsort((-scores, hashes), axis=-1)
    s = np.take_along_axis(scores, order, axis=-1)
    h = np.take_along_axis(hashes, order, axis=-1)
    s[..., 1:][h[..., 1:] == h[..., :-1]] = -np.inf
    top = np.argsort(-s, axis=-1, kind="stable")[..., :k]
    return np.take_along_axis(order, top, axis=-1), np.take_along_axis(s, top, axis=-1)


def nbest_decode(
    graph: DecodingGraph,
    log_posteriors: np.ndarray,
    settings: DecodeSettings,
    n: int,
    prior: np.ndarray | None = None,
    utterance_id: str = "",
) -> NBestList:
    """Top-n distinct word sequences by total score.

    Raises:
        ContractError: If n < 1.
        DecodeError: If no final node is reachable at the last frame.
    """
    if n < 1:
        msg = f"N-best size must be >= 1, got {n}"
        raise ContractError(msg)
    emis = acoustic_scores(log_posteriors, prior, settings.prior_scale)[:, graph.emit]
    T, N = emis.shape
    in_arc, in_src, in_w = incoming_weights(graph, settings)
    kin = in_arc.shape[1]
    entry_word = np.where(in_w > -np.inf, graph.arc_word[in_arc], NO_WORD)

    score = np.full((N, n), -np.inf)
    score[:, 0] = graph.init_weights(settings.lm_scale, settings.word_insertion_penalty) + emis[0]
    init_hash = np.zeros(N, dtype=np.uint64)
    has_word = graph.init_word != NO_WORD
    init_hash[has_word] = _extend(init_hash[has_word], graph.init_word[has_word])
    hashes = np.zeros((N, n), dtype=np.uint64)
    hashes[:, 0] = init_hash
    back = np.zeros((T, N, n), dtype=np.int64)
    for t in range(1, T):
        cand = score[in_src] + in_w[:, :, None]
        src_hash = hashes[in_src]
        words = np.broadcast_to(entry_word[:, :, None], src_hash.shape)
        cand_hash = np.where(words != NO_WORD, _extend(src_hash, words), src_hash)
        index, best = _dedupe_top(cand.reshape(N, kin * n), cand_hash.reshape(N, kin * n), n)
        back[t] = index
        hashes = np.take_along_axis(cand_hash.reshape(N, kin * n), index, axis=-1)
        score = best + emis[t][:, None]

    end = (score + graph.final_weights(settings.lm_scale)[:, None]).reshape(1, -1)
    flat, ranked = _dedupe_top(end, hashes.reshape(1, -1), n)
    result = NBestList(utterance_id=utterance_id)
    for pos, total in zip(flat[0], ranked[0], strict=True):
        if not np.isfinite(total):
            break
        node, k = divmod(int(pos), n)
        nodes = np.empty(T, dtype=np.int64)
        arcs = np.empty(T - 1, dtype=np.int64)
        nodes[-1] = node
        for t in range(T - 1, 0, -1):
            col, k = divmod(int(back[t, node, k]), n)
            arcs[t - 1] = in_arc[node, col]
            node = int(graph.arc_src[arcs[t - 1]])
            nodes[t - 1] = node
        result.hypotheses.append(path_hypothesis(graph, nodes, arcs, emis, float(total)))
    if not result.hypotheses:
        msg = f"No final node reachable after {T} frames"
        raise DecodeError(msg)
    logger.debug("nbest | utterance=%s size=%d", utterance_id, len(result))
    return result
