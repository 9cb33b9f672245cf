"""Decoding graph compiled from a lexicon and a bigram LM.

Every node emits one HMM state. Each word (or, for a transcript graph, each
transcript position) gets a chain of three-state phone models with self-loops.
Word-entry arcs carry the bigram log probability of the entered word given the
previous one, plus the word label. When optional non-speech is on, a block of
non-speech nodes (one per non-speech type) sits before the first word and after
every word; leaving it re-enters the word graph with the same LM weight as a
direct word-to-word arc.

Arc weights keep the HMM part (``am``) and the LM part (``lm``) apart so that
N-best lists can report both scores and the LM can be scaled at decode time.
This module imports from state — NEVER from acoustic/ or higher layers.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from src.decoder.bigram import BOS, EOS, BigramLM
from src.decoder.lexicon import Lexicon
from src.state.errors import ConfigurationError, ContractError
from src.state.settings import DecodeSettings

logger = logging.getLogger(__name__)

NO_WORD = -1


@dataclass(frozen=True, eq=False)
class DecodingGraph:
    """Arc-list graph with a virtual start (``init_*``) and per-node final weights (``final_*``)."""

    emit: np.ndarray
    arc_src: np.ndarray
    arc_dst: np.ndarray
    arc_am: np.ndarray
    arc_lm: np.ndarray
    arc_word: np.ndarray
    init_am: np.ndarray
    init_lm: np.ndarray
    init_word: np.ndarray
    final_am: np.ndarray
    final_lm: np.ndarray
    words: tuple[str, ...] = ()
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        n = self.emit.shape[0]
        for name in ("init_am", "init_lm", "init_word", "final_am", "final_lm"):
            if getattr(self, name).shape != (n,):
                msg = f"Graph field {name} has shape {getattr(self, name).shape}, expected ({n},)"
                raise ContractError(msg)
        a = self.arc_src.shape[0]
        for name in ("arc_dst", "arc_am", "arc_lm", "arc_word"):
            if getattr(self, name).shape != (a,):
                msg = f"Graph field {name} has shape {getattr(self, name).shape}, expected ({a},)"
                raise ContractError(msg)

    @property
    def num_nodes(self) -> int:
        return int(self.emit.shape[0])

    @property
    def num_arcs(self) -> int:
        return int(self.arc_src.shape[0])

    def arc_weights(self, lm_scale: float = 1.0, word_penalty: float = 0.0) -> np.ndarray:
        return self.arc_am + lm_scale * self.arc_lm + word_penalty * (self.arc_word != NO_WORD)

    def init_weights(self, lm_scale: float = 1.0, word_penalty: float = 0.0) -> np.ndarray:
        return self.init_am + lm_scale * self.init_lm + word_penalty * (self.init_word != NO_WORD)

    def final_weights(self, lm_scale: float = 1.0) -> np.ndarray:
        return self.final_am + lm_scale * self.final_lm

    @cached_property
    def incoming(self) -> np.ndarray:
        """(N, K) arc ids entering each node, padded with -1."""
        order = np.argsort(self.arc_dst, kind="stable")
        counts = np.bincount(self.arc_dst, minlength=self.num_nodes)
        width = max(int(counts.max()) if counts.size else 0, 1)
        table = np.full((self.num_nodes, width), -1, dtype=np.int64)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        for node in range(self.num_nodes):
            table[node, : counts[node]] = order[starts[node] : starts[node] + counts[node]]
        return table


class _Builder:
    def __init__(self) -> None:
        self.emit: list[int] = []
        self.labels: list[str] = []
        self.arcs: list[tuple[int, int, float, float, int]] = []
        self.init: dict[int, tuple[float, float, int]] = {}
        self.final: dict[int, tuple[float, float]] = {}

    def node(self, state: int, label: str) -> int:
        self.emit.append(state)
        self.labels.append(label)
        return len(self.emit) - 1

    def arc(self, src: int, dst: int, am: float, lm: float = 0.0, word: int = NO_WORD) -> None:
        self.arcs.append((src, dst, am, lm, word))

    def build(self, words: tuple[str, ...]) -> DecodingGraph:
        n = len(self.emit)
        init_am = np.full(n, -np.inf)
        init_lm = np.zeros(n)
        init_word = np.full(n, NO_WORD, dtype=np.int64)
        for node, (am, lm, word) in self.init.items():
            init_am[node], init_lm[node], init_word[node] = am, lm, word
        final_am = np.full(n, -np.inf)
        final_lm = np.zeros(n)
        for node, (am, lm) in self.final.items():
            final_am[node], final_lm[node] = am, lm
        arcs = np.array(self.arcs, dtype=np.float64).reshape(-1, 5)
        return DecodingGraph(
            emit=np.array(self.emit, dtype=np.int64),
            arc_src=arcs[:, 0].astype(np.int64),
            arc_dst=arcs[:, 1].astype(np.int64),
            arc_am=arcs[:, 2],
            arc_lm=arcs[:, 3],
            arc_word=arcs[:, 4].astype(np.int64),
            init_am=init_am,
            init_lm=init_lm,
            init_word=init_word,
            final_am=final_am,
            final_lm=final_lm,
            words=words,
            labels=tuple(self.labels),
        )


def _check_vocabularies(lexicon: Lexicon, lm: BigramLM | None) -> None:
    if lm is not None and set(lm.vocabulary) != set(lexicon.words):
        only_lm = sorted(set(lm.vocabulary) - set(lexicon.words))
        only_lex = sorted(set(lexicon.words) - set(lm.vocabulary))
        msg = f"Lexicon and LM vocabularies differ (LM only: {only_lm[:5]}, lexicon only: {only_lex[:5]})"
        raise ConfigurationError(msg)


def _compile(
    lexicon: Lexicon,
    lm: BigramLM | None,
    settings: DecodeSettings,
    slot_words: Sequence[str],
    successors: Sequence[Sequence[int]],
    first_slots: Sequence[int],
    final_slots: set[int],
) -> DecodingGraph:
    inv = lexicon.inventory
    words = lexicon.words
    word_index = {w: i for i, w in enumerate(words)}
    lp, lf = np.log(settings.self_loop_prob), np.log1p(-settings.self_loop_prob)
    lq, lqf = np.log(settings.nonspeech_loop_prob), np.log1p(-settings.nonspeech_loop_prob)

    def lm_weight(history: str | None, word: str | None) -> float:
        if lm is None:
            return 0.0
        return lm.log_prob(BOS if history is None else history, EOS if word is None else word)

    g = _Builder()

    def ns_block(tag: str) -> list[int]:
        if not settings.optional_nonspeech:
            return []
        block = [g.node(inv.nonspeech_state(kind), f"ns@{tag}/{kind}") for kind in inv.nonspeech_types]
        for a in block:
            for b in block:
                g.arc(a, b, lq if a == b else lqf)
        return block

    chains: list[list[int]] = []
    for i, word in enumerate(slot_words):
        states = lexicon.word_states(word)
        chain = [g.node(s, f"{word}[{i}]/{j}") for j, s in enumerate(states)]
        for j, node in enumerate(chain):
            g.arc(node, node, lp)
            if j + 1 < len(chain):
                g.arc(node, chain[j + 1], lf)
        chains.append(chain)
    pre = ns_block("<s>")
    post = [ns_block(f"{w}[{i}]") for i, w in enumerate(slot_words)]

    for node in pre:
        g.init[node] = (0.0, 0.0, NO_WORD)
    for s in first_slots:
        word = slot_words[s]
        g.init[chains[s][0]] = (0.0, lm_weight(None, word), word_index[word])
        for node in pre:
            g.arc(node, chains[s][0], lqf, lm_weight(None, word), word_index[word])
    if not slot_words:
        for node in pre:
            g.final[node] = (0.0, lm_weight(None, None))
    for s, word in enumerate(slot_words):
        last = chains[s][-1]
        for node in post[s]:
            g.arc(last, node, lf)
        for t in successors[s]:
            nxt = slot_words[t]
            weight = lm_weight(word, nxt)
            g.arc(last, chains[t][0], lf, weight, word_index[nxt])
            for node in post[s]:
                g.arc(node, chains[t][0], lqf, weight, word_index[nxt])
        if s in final_slots:
            end = lm_weight(word, None)
            g.final[last] = (0.0, end)
            for node in post[s]:
                g.final[node] = (0.0, end)
    graph = g.build(words)
    inv.check(graph.emit)
    return graph


def build_graph(lexicon: Lexicon, lm: BigramLM, settings: DecodeSettings) -> DecodingGraph:
    """Free word-loop graph over the whole vocabulary.

    Raises:
        ConfigurationError: If the lexicon and LM vocabularies differ.
    """
    _check_vocabularies(lexicon, lm)
    words = lexicon.words
    slots = range(len(words))
    graph = _compile(lexicon, lm, settings, words, [list(slots)] * len(words), list(slots), set(slots))
    logger.info("graph_built | words=%d nodes=%d arcs=%d", len(words), graph.num_nodes, graph.num_arcs)
    return graph


def transcript_graph(
    lexicon: Lexicon, lm: BigramLM | None, settings: DecodeSettings, transcript: Sequence[str]
) -> DecodingGraph:
    """Linear graph accepting exactly ``transcript`` (with optional non-speech between words).

    Raises:
        LexiconError: If a transcript word is not in the lexicon.
        ConfigurationError: If the lexicon and LM vocabularies differ.
    """
    _check_vocabularies(lexicon, lm)
    lexicon.check_words(transcript)
    n = len(transcript)
    successors = [[i + 1] if i + 1 < n else [] for i in range(n)]
    return _compile(lexicon, lm, settings, list(transcript), successors, [0] if n else [], {n - 1} if n else set())


def min_path_frames(lexicon: Lexicon, transcript: Sequence[str]) -> int:
    return sum(len(lexicon.word_states(w)) for w in transcript) or 1


def audit_graph(graph: DecodingGraph) -> tuple[list[int], list[int]]:
    """Nodes not reachable from the start and nodes that cannot reach a final node."""

    def sweep(seeds: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
        seen = seeds.copy()
        frontier = seeds.copy()
        while frontier.any():
            nxt = np.zeros_like(seen)
            nxt[dst[frontier[src]]] = True
            frontier = nxt & ~seen
            seen |= nxt
        return seen

    forward = sweep(np.isfinite(graph.init_am), graph.arc_src, graph.arc_dst)
    backward = sweep(np.isfinite(graph.final_am), graph.arc_dst, graph.arc_src)
    return np.flatnonzero(~forward).tolist(), np.flatnonzero(~backward).tolist()
