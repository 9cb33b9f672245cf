"""Viterbi decoding, forced alignment and utterance confidence.

Acoustic scores are hybrid pseudo log-likelihoods log P(s|x_t) - gamma log P(s).
A path's total score is the sum of acoustic scores, HMM transition weights,
scaled LM weights and the word insertion penalty.
This module imports from state — NEVER from acoustic/ or higher layers.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from src.decoder.bigram import BigramLM
from src.decoder.graph import NO_WORD, DecodingGraph, min_path_frames, transcript_graph
from src.decoder.lexicon import Lexicon
from src.state.errors import AlignmentError, ContractError, DecodeError
from src.state.settings import DecodeSettings

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Hypothesis:
    """A decoded path: words, per-frame states and its score breakdown."""

    words: tuple[str, ...]
    alignment: np.ndarray
    nodes: np.ndarray
    score: float
    acoustic: float
    lm: float

    @property
    def num_frames(self) -> int:
        return int(self.alignment.shape[0])


def acoustic_scores(log_posteriors: np.ndarray, prior: np.ndarray | None, prior_scale: float) -> np.ndarray:
    """Divide out the state prior (in the log domain) when one is given.

    Raises:
        ContractError: On non-finite posteriors, an empty utterance or a prior of the wrong size.
    """
    if log_posteriors.ndim != 2 or log_posteriors.shape[0] < 1:
        msg = f"Expected (T >= 1, S) log posteriors, got shape {log_posteriors.shape}"
        raise ContractError(msg)
    if not np.all(np.isfinite(log_posteriors)):
        msg = "Log posteriors contain non-finite values"
        raise ContractError(msg)
    if prior is None:
        return log_posteriors
    if prior.shape != (log_posteriors.shape[1],):
        msg = f"Prior has {prior.shape} entries for {log_posteriors.shape[1]} states"
        raise ContractError(msg)
    return log_posteriors - prior_scale * np.log(prior)[None, :]


def incoming_weights(graph: DecodingGraph, settings: DecodeSettings) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Padded (N, K) incoming arc ids, their source nodes and combined weights (-inf padding)."""
    arcs = graph.incoming
    valid = arcs >= 0
    safe = np.where(valid, arcs, 0)
    weights = graph.arc_weights(settings.lm_scale, settings.word_insertion_penalty)
    return safe, graph.arc_src[safe], np.where(valid, weights[safe], -np.inf)


def path_hypothesis(
    graph: DecodingGraph, nodes: np.ndarray, arcs: np.ndarray, emis: np.ndarray, score: float
) -> Hypothesis:
    """Score breakdown of a node path given the arcs taken between frames (len T-1)."""
    first = int(nodes[0])
    labels = [int(graph.init_word[first])] + [int(w) for w in graph.arc_word[arcs]]
    words = tuple(graph.words[w] for w in labels if w != NO_WORD)
    last = int(nodes[-1])
    emitted = emis[np.arange(nodes.shape[0]), nodes].sum()
    acoustic = float(emitted + graph.init_am[first] + graph.arc_am[arcs].sum() + graph.final_am[last])
    lm = float(graph.init_lm[first] + graph.arc_lm[arcs].sum() + graph.final_lm[last])
    return Hypothesis(words=words, alignment=graph.emit[nodes], nodes=nodes, score=score, acoustic=acoustic, lm=lm)


def viterbi_decode(
    graph: DecodingGraph,
    log_posteriors: np.ndarray,
    settings: DecodeSettings,
    prior: np.ndarray | None = None,
) -> Hypothesis:
    """Exact max-sum path through the graph.

    Raises:
        DecodeError: If no final node is reachable at the last frame.
        ContractError: On malformed posteriors.
    """
    scores = acoustic_scores(log_posteriors, prior, settings.prior_scale)
    if int(graph.emit.max(initial=-1)) >= scores.shape[1]:
        msg = f"Graph emits state {int(graph.emit.max())} but posteriors cover {scores.shape[1]} states"
        raise ContractError(msg)
    emis = scores[:, graph.emit]
    T, N = emis.shape
    in_arc, in_src, in_w = incoming_weights(graph, settings)
    rows = np.arange(N)
    delta = graph.init_weights(settings.lm_scale, settings.word_insertion_penalty) + emis[0]
    back = np.zeros((T, N), dtype=np.int64)
    for t in range(1, T):
        cand = delta[in_src] + in_w
        k = np.argmax(cand, axis=1)
        back[t] = k
        delta = cand[rows, k] + emis[t]
    end = delta + graph.final_weights(settings.lm_scale)
    best = int(np.argmax(end))
    if not np.isfinite(end[best]):
        msg = f"No final node reachable after {T} frames"
        raise DecodeError(msg)
    nodes = np.empty(T, dtype=np.int64)
    arcs = np.empty(T - 1, dtype=np.int64)
    nodes[-1] = best
    for t in range(T - 1, 0, -1):
        arcs[t - 1] = in_arc[nodes[t], back[t, nodes[t]]]
        nodes[t - 1] = graph.arc_src[arcs[t - 1]]
    return path_hypothesis(graph, nodes, arcs, emis, float(end[best]))


def force_align(
    graph: DecodingGraph,
    log_posteriors: np.ndarray,
    settings: DecodeSettings,
    prior: np.ndarray | None = None,
) -> tuple[np.ndarray, float]:
    """Viterbi over a transcript graph; returns the frame alignment and its score.

    Raises:
        AlignmentError: If the utterance is too short for any path through the transcript.
    """
    if graph.num_nodes == 0:
        msg = "Forced alignment failed: the transcript graph has no nodes"
        raise AlignmentError(msg)
    try:
        hyp = viterbi_decode(graph, log_posteriors, settings, prior)
    except DecodeError as exc:
        msg = f"Forced alignment failed: {exc}"
        raise AlignmentError(msg) from exc
    return hyp.alignment, hyp.score


def align_transcript(
    lexicon: Lexicon,
    lm: BigramLM | None,
    settings: DecodeSettings,
    transcript: Sequence[str],
    log_posteriors: np.ndarray,
    prior: np.ndarray | None = None,
) -> tuple[np.ndarray, float]:
    """Build the transcript graph and force-align against it.

    Raises:
        AlignmentError: If T is shorter than the minimal path of the transcript.
        LexiconError: If a transcript word is not in the lexicon.
    """
    needed = min_path_frames(lexicon, transcript)
    if log_posteriors.shape[0] < needed:
        msg = f"{log_posteriors.shape[0]} frames cannot hold transcript {list(transcript)} (needs {needed})"
        raise AlignmentError(msg)
    return force_align(transcript_graph(lexicon, lm, settings, transcript), log_posteriors, settings, prior)


def utterance_confidence(alignment: np.ndarray, log_posteriors: np.ndarray) -> float:
    """Geometric mean of the decoded path's framewise posteriors, in [0, 1]."""
    if alignment.shape[0] != log_posteriors.shape[0]:
        msg = f"Alignment of {alignment.shape[0]} frames for {log_posteriors.shape[0]} posterior frames"
        raise ContractError(msg)
    picked = log_posteriors[np.arange(alignment.shape[0]), alignment]
    return float(np.clip(np.exp(picked.mean()), 0.0, 1.0))
