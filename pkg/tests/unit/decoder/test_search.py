"""Tests for src/decoder/graph.py, viterbi.py and nbest.py against exhaustive path enumeration."""

from collections.abc import Iterator

import numpy as np
import pytest
from src.decoder.bigram import BigramLM, train_bigram
from src.decoder.graph import NO_WORD, DecodingGraph, audit_graph, build_graph, min_path_frames, transcript_graph
from src.decoder.lexicon import Lexicon
from src.decoder.nbest import nbest_decode
from src.decoder.viterbi import acoustic_scores, align_transcript, utterance_confidence, viterbi_decode
from src.state.errors import AlignmentError, ConfigurationError, ContractError, DecodeError, LexiconError
from src.state.inventory import StateInventory
from src.state.settings import DecodeSettings

SMALL = Lexicon(
    pronunciations={"a": ("a",), "ba": ("b", "a")},
    inventory=StateInventory(phones=("a", "b"), nonspeech_types=("silence",)),
)


def _small_lm() -> BigramLM:
    return train_bigram([["a", "ba"], ["ba"], ["a", "a"]], SMALL.words, 0.5)


def _paths(graph: DecodingGraph, settings: DecodeSettings, emis: np.ndarray) -> Iterator[tuple[float, tuple[str, ...]]]:
    """Every complete path of len(emis) frames with its total score and word sequence."""
    arcs = graph.arc_weights(settings.lm_scale, settings.word_insertion_penalty)
    init = graph.init_weights(settings.lm_scale, settings.word_insertion_penalty)
    final = graph.final_weights(settings.lm_scale)
    out_arcs: dict[int, list[int]] = {}
    for a, src in enumerate(graph.arc_src):
        out_arcs.setdefault(int(src), []).append(a)
    T = emis.shape[0]

    def walk(node: int, t: int, score: float, words: tuple[int, ...]) -> Iterator[tuple[float, tuple[int, ...]]]:
        if t == T - 1:
            if np.isfinite(final[node]):
                yield score + final[node], words
            return
        for a in out_arcs.get(node, []):
            dst = int(graph.arc_dst[a])
            label = int(graph.arc_word[a])
            nxt = words + ((label,) if label != NO_WORD else ())
            yield from walk(dst, t + 1, score + arcs[a] + emis[t + 1, dst], nxt)

    for node in np.flatnonzero(np.isfinite(init)):
        first = int(graph.init_word[node])
        start = (first,) if first != NO_WORD else ()
        for score, words in walk(int(node), 0, float(init[node] + emis[0, node]), start):
            yield score, tuple(graph.words[w] for w in words)


def _best_per_sequence(graph: DecodingGraph, settings: DecodeSettings, post: np.ndarray) -> list[tuple[float, tuple]]:
    emis = acoustic_scores(post, None, settings.prior_scale)[:, graph.emit]
    best: dict[tuple[str, ...], float] = {}
    for score, words in _paths(graph, settings, emis):
        best[words] = max(best.get(words, -np.inf), score)
    return sorted(((s, w) for w, s in best.items()), reverse=True)


def _random_posteriors(rng: np.random.Generator, frames: int, states: int) -> np.ndarray:
    logits = rng.normal(scale=2.0, size=(frames, states))
    return logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))


@pytest.mark.unit
class TestGraph:
    def test_every_node_useful(self, toy_lexicon: Lexicon, toy_bigram: BigramLM) -> None:
        graph = build_graph(toy_lexicon, toy_bigram, DecodeSettings())
        assert audit_graph(graph) == ([], [])

    def test_node_count(self, toy_lexicon: Lexicon, toy_bigram: BigramLM) -> None:
        with_ns = build_graph(toy_lexicon, toy_bigram, DecodeSettings())
        without = build_graph(toy_lexicon, toy_bigram, DecodeSettings(optional_nonspeech=False))
        assert without.num_nodes == 15
        assert with_ns.num_nodes == 15 + 3 * 4

    def test_vocabulary_mismatch(self, toy_lexicon: Lexicon) -> None:
        lm = train_bigram([["ab"]], ["ab", "c"], 0.5)
        with pytest.raises(ConfigurationError, match="vocabularies differ"):
            build_graph(toy_lexicon, lm, DecodeSettings())

    def test_transcript_graph_unknown_word(self, toy_lexicon: Lexicon) -> None:
        with pytest.raises(LexiconError):
            transcript_graph(toy_lexicon, None, DecodeSettings(), ["ab", "zz"])

    def test_min_path_frames(self, toy_lexicon: Lexicon) -> None:
        assert min_path_frames(toy_lexicon, ["ab", "c"]) == 9
        assert min_path_frames(toy_lexicon, []) == 1

    def test_nonspeech_block_weights(self) -> None:
        settings = DecodeSettings(nonspeech_loop_prob=0.8)
        graph = build_graph(SMALL, _small_lm(), settings)
        ns = [i for i, label in enumerate(graph.labels) if label.startswith("ns@")]
        loops = [a for a in range(graph.num_arcs) if graph.arc_src[a] == graph.arc_dst[a] and graph.arc_src[a] in ns]
        np.testing.assert_allclose(graph.arc_am[loops], np.log(0.8))


@pytest.mark.unit
class TestViterbi:
    @pytest.mark.parametrize("optional_nonspeech", [True, False])
    def test_matches_exhaustive_search(self, rng: np.random.Generator, optional_nonspeech: bool) -> None:
        settings = DecodeSettings(optional_nonspeech=optional_nonspeech, lm_scale=0.7, word_insertion_penalty=-0.3)
        graph = build_graph(SMALL, _small_lm(), settings)
        for _ in range(50):
            post = _random_posteriors(rng, 6, SMALL.inventory.size)
            hyp = viterbi_decode(graph, post, settings)
            score, words = _best_per_sequence(graph, settings, post)[0]
            assert hyp.score == pytest.approx(score, rel=0, abs=1e-9)
            assert hyp.words == words

    def test_score_breakdown(self, rng: np.random.Generator, toy_lexicon: Lexicon, toy_bigram: BigramLM) -> None:
        settings = DecodeSettings(lm_scale=2.0)
        graph = build_graph(toy_lexicon, toy_bigram, settings)
        hyp = viterbi_decode(graph, _random_posteriors(rng, 12, 12), settings)
        assert hyp.score == pytest.approx(hyp.acoustic + 2.0 * hyp.lm)
        assert hyp.lm == pytest.approx(toy_bigram.sentence_log_prob(hyp.words))
        assert hyp.num_frames == 12

    def test_recovers_clear_path(self, toy_lexicon: Lexicon, toy_bigram: BigramLM) -> None:
        states = [0, 0, 3, 4, 5, 6, 7, 8, 1, 9, 10, 11, 2]
        post = np.full((len(states), 12), np.log(0.01 / 11))
        post[np.arange(len(states)), states] = np.log(0.99)
        hyp = viterbi_decode(build_graph(toy_lexicon, toy_bigram, DecodeSettings()), post, DecodeSettings())
        assert hyp.words == ("ab", "c")
        np.testing.assert_array_equal(hyp.alignment, states)

    def test_too_short(self, toy_lexicon: Lexicon, toy_bigram: BigramLM) -> None:
        graph = build_graph(toy_lexicon, toy_bigram, DecodeSettings())
        with pytest.raises(DecodeError, match="No final node"):
            viterbi_decode(graph, np.full((2, 12), np.log(1 / 12)), DecodeSettings())

    def test_prior_division(self) -> None:
        post = np.log(np.array([[0.5, 0.25, 0.25]]))
        prior = np.array([0.5, 0.25, 0.25])
        np.testing.assert_allclose(acoustic_scores(post, prior, 1.0), 0.0, atol=1e-12)
        np.testing.assert_array_equal(acoustic_scores(post, prior, 0.0), post)

    @pytest.mark.parametrize(
        "post,prior",
        [
            (np.zeros((0, 3)), None),
            (np.array([[0.0, np.nan, 0.0]]), None),
            (np.zeros((2, 3)), np.ones(4) / 4),
        ],
    )
    def test_malformed_posteriors(self, post: np.ndarray, prior: np.ndarray | None) -> None:
        with pytest.raises(ContractError):
            acoustic_scores(post, prior, 1.0)

    def test_posteriors_narrower_than_graph(self, toy_lexicon: Lexicon, toy_bigram: BigramLM) -> None:
        graph = build_graph(toy_lexicon, toy_bigram, DecodeSettings())
        with pytest.raises(ContractError, match="Graph emits"):
            viterbi_decode(graph, np.zeros((5, 6)), DecodeSettings())


@pytest.mark.unit
class TestNBest:
    @pytest.mark.parametrize("optional_nonspeech", [True, False])
    def test_matches_exhaustive_search(self, rng: np.random.Generator, optional_nonspeech: bool) -> None:
        settings = DecodeSettings(optional_nonspeech=optional_nonspeech)
        graph = build_graph(SMALL, _small_lm(), settings)
        for _ in range(50):
            post = _random_posteriors(rng, 6, SMALL.inventory.size)
            expected = _best_per_sequence(graph, settings, post)[:4]
            nbest = nbest_decode(graph, post, settings, 4)
            assert [h.words for h in nbest.hypotheses] == [w for _, w in expected]
            scores = [h.score for h in nbest.hypotheses]
            np.testing.assert_allclose(scores, [s for s, _ in expected], rtol=0, atol=1e-9)
            assert nbest.best.score == pytest.approx(viterbi_decode(graph, post, settings).score, rel=0, abs=1e-9)

    def test_first_equals_viterbi(self, rng: np.random.Generator, toy_lexicon: Lexicon, toy_bigram: BigramLM) -> None:
        settings = DecodeSettings()
        graph = build_graph(toy_lexicon, toy_bigram, settings)
        post = _random_posteriors(rng, 15, 12)
        nbest = nbest_decode(graph, post, settings, 5, utterance_id="u")
        assert nbest.best.words == viterbi_decode(graph, post, settings).words
        assert nbest.utterance_id == "u"
        assert len({h.words for h in nbest.hypotheses}) == len(nbest)
        scores = [h.score for h in nbest.hypotheses]
        assert scores == sorted(scores, reverse=True)

    def test_short_list_when_few_sequences(self) -> None:
        settings = DecodeSettings(optional_nonspeech=False)
        graph = build_graph(SMALL, _small_lm(), settings)
        post = np.full((3, SMALL.inventory.size), np.log(1 / SMALL.inventory.size))
        assert [h.words for h in nbest_decode(graph, post, settings, 10).hypotheses] == [("a",)]

    def test_invalid_size(self, toy_lexicon: Lexicon, toy_bigram: BigramLM) -> None:
        graph = build_graph(toy_lexicon, toy_bigram, DecodeSettings())
        with pytest.raises(ContractError, match="N-best size"):
            nbest_decode(graph, np.zeros((4, 12)), DecodeSettings(), 0)


@pytest.mark.unit
class TestAlignment:
    @pytest.mark.parametrize("optional_nonspeech", [True, False])
    def test_matches_exhaustive_search(self, rng: np.random.Generator, optional_nonspeech: bool) -> None:
        settings = DecodeSettings(optional_nonspeech=optional_nonspeech, lm_scale=0.7, word_insertion_penalty=-0.3)
        lm = _small_lm()
        for _ in range(50):
            words = [str(w) for w in rng.choice(["a", "ba"], size=int(rng.integers(1, 3)))]
            post = _random_posteriors(rng, 6, SMALL.inventory.size)
            alignment, score = align_transcript(SMALL, lm, settings, words, post)
            graph = transcript_graph(SMALL, lm, settings, words)
            emis = acoustic_scores(post, None, settings.prior_scale)[:, graph.emit]
            best = max(s for s, _ in _paths(graph, settings, emis))
            assert score == pytest.approx(best, rel=0, abs=1e-9)
            assert alignment.shape == (6,)
            assert set(alignment.tolist()) <= set(graph.emit.tolist())

    def test_follows_transcript(self, rng: np.random.Generator, toy_lexicon: Lexicon, toy_bigram: BigramLM) -> None:
        post = _random_posteriors(rng, 20, 12)
        alignment, score = align_transcript(toy_lexicon, toy_bigram, DecodeSettings(), ["ab", "c"], post)
        assert alignment.shape == (20,)
        speech = alignment[alignment >= 3]
        runs = speech[np.r_[True, speech[1:] != speech[:-1]]]
        np.testing.assert_array_equal(runs, [3, 4, 5, 6, 7, 8, 9, 10, 11])
        assert np.isfinite(score)

    def test_minimal_length_fits_exactly(self, toy_lexicon: Lexicon) -> None:
        post = np.full((3, 12), np.log(1 / 12))
        alignment, _ = align_transcript(toy_lexicon, None, DecodeSettings(), ["c"], post)
        np.testing.assert_array_equal(alignment, [9, 10, 11])

    def test_too_short(self, toy_lexicon: Lexicon) -> None:
        with pytest.raises(AlignmentError, match="needs 9"):
            align_transcript(toy_lexicon, None, DecodeSettings(), ["ab", "c"], np.zeros((8, 12)))

    def test_confidence_uniform(self) -> None:
        post = np.full((4, 8), np.log(1 / 8))
        assert utterance_confidence(np.array([0, 1, 2, 3]), post) == pytest.approx(1 / 8)

    def test_confidence_certain(self) -> None:
        post = np.log(np.array([[1.0, 1e-300], [1e-300, 1.0]]))
        assert utterance_confidence(np.array([0, 1]), post) == pytest.approx(1.0)

    def test_confidence_length_mismatch(self) -> None:
        with pytest.raises(ContractError):
            utterance_confidence(np.array([0]), np.zeros((2, 3)))
