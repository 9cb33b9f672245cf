"""Tests for src/lm/rnnlm.py."""

from collections.abc import Mapping
from pathlib import Path

import numpy as np
import pytest
from src.lm.rnnlm import (
    UNK_ID,
    RnnLm,
    Vocab,
    batch_sentences,
    build_vocab,
    init_rnnlm,
    load_rnnlm,
    next_word_distribution,
    perplexity,
    save_rnnlm,
    score_sentences,
    sentence_logprob,
    sentence_nll,
    split_held_out,
    train_lm,
)
from src.nnet.autodiff import Tensor
from src.nnet.gradcheck import grad_check
from src.state.errors import ConfigurationError, ContractError
from src.state.settings import RnnLmConfig

TEXTS = [["mal", "su", "ta"], ["su", "su"], ["ta", "mal"], ["mal"]]
SMALL = RnnLmConfig(layers=2, hidden=6, embedding=5, epochs=1, batch_size=2)


def _lm(config: RnnLmConfig = SMALL, seed: int = 0) -> RnnLm:
    vocab = build_vocab(TEXTS)
    return RnnLm(vocab=vocab, config=config, params=init_rnnlm(vocab, config, seed))


@pytest.mark.unit
class TestVocab:
    def test_reserved_first_then_sorted(self) -> None:
        assert build_vocab(TEXTS).words == ("<s>", "</s>", "<unk>", "mal", "su", "ta")

    def test_min_count(self) -> None:
        assert build_vocab(TEXTS, min_count=3).words[3:] == ("mal", "su")

    def test_unknown_maps_to_unk(self) -> None:
        assert build_vocab(TEXTS).encode(["su", "xyz"]) == [4, UNK_ID]

    def test_empty_corpus(self) -> None:
        with pytest.raises(ConfigurationError, match="empty corpus"):
            build_vocab([])

    def test_must_start_with_reserved(self) -> None:
        with pytest.raises(ContractError, match="must start with"):
            Vocab(words=("a", "<s>", "</s>", "<unk>"))


@pytest.mark.unit
class TestScoring:
    def test_batch_layout(self) -> None:
        vocab = build_vocab(TEXTS)
        inputs, targets, mask = batch_sentences(vocab, [["su"], ["mal", "ta"]])
        assert inputs[:, 1].tolist() == [0, 3, 5]
        assert targets[:, 1].tolist() == [3, 5, 1]
        assert mask.sum(axis=0).tolist() == [2, 3]

    def test_distribution_sums_to_one(self) -> None:
        lm = _lm()
        for prefix in ([], ["mal"], ["su", "xyz", "ta"]):
            assert next_word_distribution(lm, prefix).sum() == pytest.approx(1.0, abs=1e-8)

    def test_empty_sentence_is_end_only(self) -> None:
        lm = _lm()
        assert sentence_logprob(lm, []) == pytest.approx(np.log(next_word_distribution(lm, [])[1]))

    def test_chain_rule(self) -> None:
        lm = _lm()
        words = ["mal", "su"]
        expected = sum(
            np.log(next_word_distribution(lm, words[:i])[lm.vocab.encode([w])[0]]) for i, w in enumerate(words)
        ) + np.log(next_word_distribution(lm, words)[1])
        assert sentence_logprob(lm, words) == pytest.approx(expected)

    def test_batched_equals_single(self) -> None:
        lm = _lm()
        sentences = [["mal"], ["su", "ta", "mal", "su"], [], ["ta"]]
        batched = score_sentences(lm, sentences, batch_size=3)
        np.testing.assert_allclose(batched, [sentence_logprob(lm, s) for s in sentences], atol=1e-10)
        assert np.all(batched <= 0)

    def test_untrained_perplexity_near_vocab_size(self) -> None:
        lm = _lm()
        ppl = perplexity(lm, TEXTS)
        assert lm.vocab.size / 2 < ppl < 2 * lm.vocab.size

    def test_gradients_through_two_layers(self) -> None:
        lm = _lm()
        assert SMALL.layers == 2
        inputs, targets, mask = batch_sentences(lm.vocab, TEXTS[:3])

        def loss(leaves: Mapping[str, Tensor]) -> Tensor:
            return sentence_nll(leaves, inputs, targets, mask, SMALL.layers)

        report = grad_check(loss, lm.params.params, probes=200, step=1e-3, tolerance=1e-4)
        assert report.passed, report.failures


@pytest.mark.unit
class TestInit:
    def test_weight_bounds_follow_fan_in(self) -> None:
        config = RnnLmConfig(layers=2, hidden=16, embedding=4)
        params = init_rnnlm(build_vocab(TEXTS), config, 0).params
        assert 0.25 < np.abs(params["lstm0.w_ih"]).max() <= 0.5
        assert np.abs(params["lstm1.w_ih"]).max() <= 0.25
        assert np.abs(params["lstm0.w_hh"]).max() <= 0.25
        assert params["lstm0.b"][16:32].tolist() == [1.0] * 16


@pytest.mark.unit
class TestTraining:
    def test_split_is_seeded(self) -> None:
        sentences = [[str(i)] for i in range(20)]
        train, held = split_held_out(sentences, 3)
        assert len(held) == 2
        assert len(train) == 18
        assert split_held_out(sentences, 3) == (train, held)

    def test_single_sentence_used_twice(self) -> None:
        assert split_held_out([["a", "b"]], 0) == ([["a", "b"]], [["a", "b"]])

    def test_memorizes_repeated_sentence(self, tmp_path: Path) -> None:
        texts = [["mal", "su", "ta"]] * 20
        config = RnnLmConfig(layers=1, hidden=16, embedding=16, epochs=60, batch_size=4)
        result = train_lm(texts, config, 5, loss_log=tmp_path / "lm.csv")
        assert len(result.perplexities) == 60
        assert all(np.isfinite(p) and p > 0 for p in result.perplexities)
        assert result.perplexities[-1] < 1.5
        assert (tmp_path / "lm.csv").is_file()

    def test_deterministic(self) -> None:
        a = train_lm(TEXTS, SMALL, 9)
        b = train_lm(TEXTS, SMALL, 9)
        assert a.perplexities == b.perplexities
        np.testing.assert_array_equal(a.lm.params.params["embed"], b.lm.params.params["embed"])

    def test_empty_corpus(self) -> None:
        with pytest.raises(ConfigurationError):
            train_lm([], SMALL, 0)


@pytest.mark.unit
class TestCheckpoint:
    def test_round_trip(self, tmp_path: Path) -> None:
        lm = _lm()
        save_rnnlm(tmp_path / "lm.ckpt", lm, "f" * 8)
        loaded = load_rnnlm(tmp_path / "lm.ckpt", "f" * 8)
        assert loaded.vocab == lm.vocab
        assert loaded.config == lm.config
        assert sentence_logprob(loaded, ["mal", "ta"]) == pytest.approx(sentence_logprob(lm, ["mal", "ta"]))

    def test_stale_digest(self, tmp_path: Path) -> None:
        save_rnnlm(tmp_path / "lm.ckpt", _lm(), "f" * 8)
        with pytest.raises(ContractError):
            load_rnnlm(tmp_path / "lm.ckpt", "0" * 8)
