"""Tests for src/lm/rescore.py."""

import numpy as np
import pytest
from src.decoder.nbest import NBestList
from src.decoder.viterbi import Hypothesis
from src.lm.rescore import combined_scores, grid_search, lm_scores, rescore_nbest, rescored_wer
from src.lm.rnnlm import RnnLm, build_vocab, init_rnnlm
from src.state.errors import ConfigurationError, ContractError
from src.state.models import RescoreMode
from src.state.settings import RnnLmConfig

WORDS = [("mal",), ("su", "ta"), ("ta",), ("mal", "su")]


def _hyp(words: tuple[str, ...], acoustic: float, lm: float = 0.0) -> Hypothesis:
    empty = np.zeros(0, dtype=np.int64)
    return Hypothesis(words=words, alignment=empty, nodes=empty, score=acoustic + lm, acoustic=acoustic, lm=lm)


def _nbest(acoustic: list[float], lm: list[float] | None = None) -> NBestList:
    lm = lm or [0.0] * len(acoustic)
    return NBestList("u", [_hyp(w, a, b) for w, a, b in zip(WORDS, acoustic, lm, strict=False)])


@pytest.fixture()
def rnnlm() -> RnnLm:
    vocab = build_vocab([["mal", "su", "ta"], ["ta", "su"]])
    config = RnnLmConfig(layers=1, hidden=4, embedding=4)
    return RnnLm(vocab=vocab, config=config, params=init_rnnlm(vocab, config, 1))


@pytest.mark.unit
class TestRescoreNbest:
    def test_zero_weight_ranks_by_acoustic(self, rnnlm: RnnLm) -> None:
        nbest = _nbest([-5.0, -2.0, -9.0, -3.0], lm=[0.0, -8.0, 0.0, -1.0])
        out = rescore_nbest(nbest, rnnlm, 0.0)
        assert [h.words for h in out.hypotheses] == [WORDS[1], WORDS[3], WORDS[0], WORDS[2]]

    def test_equal_acoustic_lm_decides(self, rnnlm: RnnLm) -> None:
        nbest = _nbest([-4.0, -4.0, -4.0, -4.0])
        scores = lm_scores(nbest, rnnlm)
        for weight in (0.1, 0.3, 2.0):
            out = rescore_nbest(nbest, rnnlm, weight)
            assert out.best.words == WORDS[int(np.argmax(scores))]

    def test_shift_invariant(self, rnnlm: RnnLm) -> None:
        base = _nbest([-5.0, -2.0, -9.0, -3.0])
        shifted = _nbest([-105.0, -102.0, -109.0, -103.0])
        a = rescore_nbest(base, rnnlm, 0.3)
        b = rescore_nbest(shifted, rnnlm, 0.3)
        assert [h.words for h in a.hypotheses] == [h.words for h in b.hypotheses]

    def test_membership_preserved(self, rnnlm: RnnLm) -> None:
        nbest = _nbest([-5.0, -2.0, -9.0, -3.0])
        out = rescore_nbest(nbest, rnnlm, 0.35)
        assert sorted(h.words for h in out.hypotheses) == sorted(h.words for h in nbest.hypotheses)
        assert out.utterance_id == "u"

    def test_interpolate_mode(self, rnnlm: RnnLm) -> None:
        nbest = _nbest([-1.0, -2.0], lm=[-3.0, -1.0])
        rnn = np.array([-0.5, -0.25])
        scores = combined_scores(nbest, rnn, 0.25, RescoreMode.INTERPOLATE, lm_scale=2.0)
        np.testing.assert_allclose(scores, [-1.0 + 0.75 * 2.0 * -3.0 + 0.25 * -0.5, -2.0 + 1.5 * -1.0 - 0.0625])

    def test_interpolate_full_weight_matches_replace(self, rnnlm: RnnLm) -> None:
        nbest = _nbest([-1.0, -2.0], lm=[-3.0, -1.0])
        rnn = np.array([-0.5, -0.25])
        np.testing.assert_allclose(
            combined_scores(nbest, rnn, 1.0, RescoreMode.INTERPOLATE), combined_scores(nbest, rnn, 1.0)
        )

    def test_negative_weight(self, rnnlm: RnnLm) -> None:
        with pytest.raises(ContractError, match=">= 0"):
            rescore_nbest(_nbest([-1.0]), rnnlm, -0.1)

    def test_empty_list_unchanged(self, rnnlm: RnnLm) -> None:
        empty = NBestList("u")
        assert rescore_nbest(empty, rnnlm, 0.3) is empty


@pytest.mark.unit
class TestGridSearch:
    def test_one_row_per_weight(self, rnnlm: RnnLm) -> None:
        nbests = [_nbest([-5.0, -2.0, -9.0, -3.0]), _nbest([-1.0, -1.5])]
        result = grid_search(nbests, [["su", "ta"], ["mal"]], rnnlm, [0.25, 0.3, 0.35])
        assert [r.weight for r in result.rows] == [0.25, 0.3, 0.35]
        chosen = next(r for r in result.rows if r.weight == result.best_weight)
        assert all(chosen.dev_wer <= r.dev_wer for r in result.rows)

    def test_ties_pick_smallest_weight(self, rnnlm: RnnLm) -> None:
        nbests = [_nbest([-1.0]), _nbest([-2.0])]
        result = grid_search(nbests, [["mal"], ["ta"]], rnnlm, [0.35, 0.25, 0.3])
        assert len({r.dev_wer for r in result.rows}) == 1
        assert result.best_weight == 0.25

    def test_empty_nbest_counts_as_deletions(self, rnnlm: RnnLm) -> None:
        wer = rescored_wer([NBestList("u")], [["mal", "su"]], [np.zeros(0)], 0.3)
        assert wer.deletions == 2

    def test_empty_grid(self, rnnlm: RnnLm) -> None:
        with pytest.raises(ConfigurationError, match="grid is empty"):
            grid_search([], [], rnnlm, [])

    def test_unpaired(self, rnnlm: RnnLm) -> None:
        with pytest.raises(ContractError, match="N-best lists"):
            grid_search([_nbest([-1.0])], [], rnnlm, [0.3])
