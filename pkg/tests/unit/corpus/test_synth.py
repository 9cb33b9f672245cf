"""Tests for src/corpus/synth.py and src/corpus/grammar.py."""

import numpy as np
import pytest
from src.corpus.grammar import build_grammar
from src.corpus.synth import inventory_for, speech_frame_count, synth_utterance
from src.state.corpus_settings import CorpusSettings
from src.state.errors import LexiconError


@pytest.fixture()
def settings() -> CorpusSettings:
    return CorpusSettings(pure_nonspeech_min_frames=20, pure_nonspeech_max_frames=40)


@pytest.mark.unit
class TestToyGrammar:
    def test_sentences_use_vocabulary(self, settings: CorpusSettings) -> None:
        grammar = build_grammar(settings, 7)
        rng = np.random.default_rng(0)
        for _ in range(20):
            sentence = grammar.sample(rng)
            assert settings.min_words <= len(sentence) <= settings.max_words
            assert set(sentence) <= set(settings.vocabulary)

    def test_same_seed_same_grammar(self, settings: CorpusSettings) -> None:
        a, b = build_grammar(settings, 3), build_grammar(settings, 3)
        for history, probs in a.successor_probs.items():
            np.testing.assert_array_equal(probs, b.successor_probs[history])
            assert probs.sum() == pytest.approx(1.0)

    def test_seed_changes_grammar(self, settings: CorpusSettings) -> None:
        a, b = build_grammar(settings, 3), build_grammar(settings, 4)
        assert any(not np.array_equal(a.successor_probs[h], b.successor_probs[h]) for h in a.successor_probs)


@pytest.mark.unit
class TestSynthUtterance:
    def test_one_frame_per_aligned_state(self, settings: CorpusSettings) -> None:
        utt = synth_utterance(["mal", "su"], settings, 5, nonspeech_frames=30)
        frames = utt.num_frames
        assert utt.waveform.num_samples == (frames - 1) * settings.shift_samples + settings.window_samples
        assert utt.transcript == ("mal", "su")

    def test_frame_budget(self, settings: CorpusSettings) -> None:
        inventory = inventory_for(settings)
        utt = synth_utterance(["mal", "su"], settings, 5, nonspeech_frames=30)
        speech = inventory.is_speech(utt.true_alignment)
        assert int(np.count_nonzero(~speech)) == 30
        assert int(np.count_nonzero(speech)) == speech_frame_count(["mal", "su"], settings, 5)

    def test_phone_states_in_order(self, settings: CorpusSettings) -> None:
        inventory = inventory_for(settings)
        utt = synth_utterance(["ka"], settings, 9, nonspeech_frames=0)
        collapsed = [int(s) for i, s in enumerate(utt.true_alignment) if i == 0 or s != utt.true_alignment[i - 1]]
        assert collapsed == [*inventory.phone_states("k"), *inventory.phone_states("a")]

    def test_deterministic(self, settings: CorpusSettings) -> None:
        a = synth_utterance(["nas"], settings, (1, 2))
        b = synth_utterance(["nas"], settings, (1, 2))
        np.testing.assert_array_equal(a.waveform.samples, b.waveform.samples)
        np.testing.assert_array_equal(a.true_alignment, b.true_alignment)

    def test_pure_nonspeech(self, settings: CorpusSettings) -> None:
        inventory = inventory_for(settings)
        utt = synth_utterance([], settings, 4)
        assert 20 <= utt.num_frames <= 40
        assert not inventory.is_speech(utt.true_alignment).any()

    def test_samples_on_16bit_grid(self, settings: CorpusSettings) -> None:
        samples = synth_utterance(["tor"], settings, 2).waveform.samples
        np.testing.assert_array_equal(samples * 32768.0, np.round(samples * 32768.0))
        assert np.abs(samples).max() <= 1.0

    def test_unknown_word(self, settings: CorpusSettings) -> None:
        with pytest.raises(LexiconError, match="not in the vocabulary"):
            synth_utterance(["zzz"], settings, 1)
