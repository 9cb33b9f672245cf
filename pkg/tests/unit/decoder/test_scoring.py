"""Tests for src/decoder/scoring.py."""

import itertools
from collections.abc import Sequence
from functools import cache

import numpy as np
import pytest
from src.decoder.scoring import WerResult, corpus_wer, score_wer
from src.state.errors import ContractError


def _edit_distance(reference: Sequence[str], hypothesis: Sequence[str]) -> int:
    @cache
    def d(i: int, j: int) -> int:
        if i == 0 or j == 0:
            return i + j
        return min(
            d(i - 1, j - 1) + (reference[i - 1] != hypothesis[j - 1]),
            d(i - 1, j) + 1,
            d(i, j - 1) + 1,
        )

    return d(len(reference), len(hypothesis))


@pytest.mark.unit
class TestScoreWer:
    def test_identical(self) -> None:
        result = score_wer(["a", "b"], ["a", "b"])
        assert result == WerResult(0, 0, 0, 2)
        assert result.wer == 0.0

    def test_prefers_hits(self) -> None:
        result = score_wer(["a", "b"], ["b", "c"])
        assert (result.substitutions, result.deletions, result.insertions) == (0, 1, 1)

    def test_empty_hypothesis(self) -> None:
        assert score_wer(["a", "b", "c"], []) == WerResult(0, 3, 0, 3)

    def test_insertions_can_exceed_100_percent(self) -> None:
        assert score_wer(["a"], ["x", "a", "y"]).wer == pytest.approx(200.0)

    def test_empty_reference(self) -> None:
        with pytest.raises(ContractError, match="non-empty reference"):
            score_wer([], ["a"])

    def test_matches_edit_distance(self) -> None:
        alphabet = ["a", "b", "c"]
        for r_len, h_len in itertools.product(range(1, 4), range(4)):
            for ref in itertools.product(alphabet, repeat=r_len):
                for hyp in itertools.islice(itertools.product(alphabet, repeat=h_len), 12):
                    result = score_wer(ref, hyp)
                    assert result.errors == _edit_distance(ref, hyp)
                    assert result.ref_words == r_len
                    assert r_len - result.deletions + result.insertions == h_len

    def test_matches_edit_distance_on_random_pairs(self) -> None:
        rng = np.random.default_rng(8)
        alphabet = ["a", "b", "c", "d"]
        for _ in range(1000):
            ref = [str(w) for w in rng.choice(alphabet, size=int(rng.integers(1, 9)))]
            hyp = [str(w) for w in rng.choice(alphabet, size=int(rng.integers(0, 9)))]
            result = score_wer(ref, hyp)
            assert result.errors == _edit_distance(ref, hyp)
            assert result.ref_words == len(ref)
            assert len(ref) - result.deletions + result.insertions == len(hyp)
            assert result.substitutions + result.deletions <= len(ref)


@pytest.mark.unit
class TestCorpusWer:
    def test_sums_edits(self) -> None:
        total = corpus_wer([(["a", "b"], ["a"]), (["c"], ["d"])])
        assert total == WerResult(1, 1, 0, 3)
        assert total.wer == pytest.approx(200.0 / 3)

    def test_empty_reference_counts_insertions(self) -> None:
        assert corpus_wer([([], ["a", "b"]), (["c"], ["c"])]) == WerResult(0, 0, 2, 1)

    def test_no_references(self) -> None:
        assert corpus_wer([]).wer == 0.0
