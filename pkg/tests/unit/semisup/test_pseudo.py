"""Tests for src/semisup/pseudo.py."""

from pathlib import Path
from unittest.mock import MagicMock

import numpy as np
import pytest
from src.decoder.viterbi import Hypothesis
from src.frontend.features import FeatureSequence
from src.semisup.pseudo import (
    PseudoLabeledUtterance,
    assemble_training_set,
    filter_by_threshold,
    pseudo_label,
    write_accepted,
)
from src.state.errors import AlignmentError, ContractError, DecodeError, PipelineError
from src.state.models import AugmentedEntry, Split, Transform
from src.state.settings import FrontendSettings, SslIterationConfig

from tests.conftest import make_entry

FRAMES = 12


def _record(uid: str, confidence: float, iteration: int = 1) -> PseudoLabeledUtterance:
    return PseudoLabeledUtterance(
        entry=make_entry(uid, Split.UNTRANSCRIBED),
        words=("ab", "c"),
        alignment=np.arange(FRAMES) % 12,
        confidence=confidence,
        iteration=iteration,
    )


def _store() -> MagicMock:
    """Speed copies with factor != 1 change the frame count; everything else keeps it."""

    def features(entry: AugmentedEntry) -> FeatureSequence:
        frames = FRAMES if entry.transform != Transform.SPEED else round(FRAMES / entry.param)
        return FeatureSequence(np.zeros((frames, 4)))

    store = MagicMock()
    store.features.side_effect = features
    store.pseudo_alignments = {}
    return store


def _hypothesis() -> Hypothesis:
    states = np.array([0, 3, 4, 5, 6, 7, 8, 0])
    return Hypothesis(words=("ab",), alignment=states, nodes=states, score=-1.0, acoustic=-1.0, lm=0.0)


@pytest.mark.unit
class TestPseudoLabeledUtterance:
    @pytest.mark.parametrize("confidence", [-0.1, 1.5])
    def test_confidence_range(self, confidence: float) -> None:
        with pytest.raises(ContractError, match="outside"):
            _record("u0", confidence)

    def test_as_entry_carries_provenance(self) -> None:
        entry = _record("u0", 0.4, iteration=2).as_entry()
        assert entry.entry_id == "u0"
        assert entry.transcript == ["ab", "c"]
        assert entry.confidence == 0.4
        assert entry.iteration == 2
        assert entry.is_pseudo


@pytest.mark.unit
class TestFilterByThreshold:
    def test_keeps_at_or_above(self) -> None:
        records = [_record("u0", 0.4), _record("u1", 0.29), _record("u2", 0.31)]
        assert [r.entry.utterance_id for r in filter_by_threshold(records, 0.3)] == ["u0", "u2"]

    def test_zero_keeps_all(self) -> None:
        records = [_record("u0", 0.0), _record("u1", 0.5)]
        assert filter_by_threshold(records, 0.0) == records

    def test_matches_predicate(self, rng: np.random.Generator) -> None:
        records = [_record(f"u{i}", float(c)) for i, c in enumerate(rng.uniform(size=40))]
        for threshold in (0.35, 0.3, 0.28, 0.5):
            kept = filter_by_threshold(records, threshold)
            assert kept == [r for r in records if r.confidence >= threshold]

    def test_decreasing_thresholds_grow(self, rng: np.random.Generator) -> None:
        records = [_record(f"u{i}", float(c)) for i, c in enumerate(rng.uniform(size=30))]
        sets = [{r.entry.utterance_id for r in filter_by_threshold(records, t)} for t in (0.35, 0.3, 0.28)]
        assert sets[0] <= sets[1] <= sets[2]

    def test_invalid_threshold(self) -> None:
        with pytest.raises(ContractError, match="threshold"):
            filter_by_threshold([], 1.2)


@pytest.mark.unit
class TestPseudoLabel:
    def test_one_record_per_decoded_utterance(self) -> None:
        recognizer = MagicMock()
        recognizer.decode.return_value = (_hypothesis(), np.full((8, 12), np.log(1 / 12)))
        entries = [make_entry(f"u{i}", Split.UNTRANSCRIBED) for i in range(3)]
        records = pseudo_label(recognizer, entries, _store(), 1)
        assert [r.entry.utterance_id for r in records] == ["u0", "u1", "u2"]
        assert all(r.confidence == pytest.approx(1 / 12) for r in records)
        assert all(r.iteration == 1 for r in records)

    def test_failures_excluded(self) -> None:
        recognizer = MagicMock()
        recognizer.decode.side_effect = [
            (_hypothesis(), np.zeros((8, 12))),
            DecodeError("No final node reachable"),
        ]
        entries = [make_entry(f"u{i}", Split.UNTRANSCRIBED) for i in range(2)]
        assert len(pseudo_label(recognizer, entries, _store(), 1)) == 1

    def test_nothing_decodes(self) -> None:
        recognizer = MagicMock()
        recognizer.decode.side_effect = DecodeError("No final node reachable")
        with pytest.raises(PipelineError, match="none of 1"):
            pseudo_label(recognizer, [make_entry("u0", Split.UNTRANSCRIBED)], _store(), 1)


@pytest.mark.unit
class TestAssembleTrainingSet:
    def _iteration(self, transcribed: str, untranscribed: str) -> SslIterationConfig:
        return SslIterationConfig(
            threshold=0.3, transcribed_augmentation=transcribed, untranscribed_augmentation=untranscribed
        )

    def test_cardinality(self) -> None:
        transcribed = [make_entry(f"t{i}") for i in range(4)]
        accepted = [_record("u0", 0.5), _record("u1", 0.6)]
        recognizer = MagicMock()
        recognizer.align.side_effect = lambda words, feats: np.zeros(feats.shape[0], dtype=np.int64)
        entries = assemble_training_set(
            transcribed,
            accepted,
            self._iteration("2x Vol. 3x SP", "3x SP"),
            _store(),
            recognizer,
            [],
            0,
            FrontendSettings(),
        )
        assert len(entries) == 4 * 5 + 2 * 3
        assert [e.is_pseudo for e in entries] == [False] * 20 + [True] * 6

    def test_no_accepted(self) -> None:
        entries = assemble_training_set(
            [make_entry("t0")], [], self._iteration("", ""), _store(), MagicMock(), [], 0, FrontendSettings()
        )
        assert [e.entry_id for e in entries] == ["t0"]

    def test_pseudo_alignments_registered(self) -> None:
        store = _store()
        recognizer = MagicMock()
        recognizer.align.side_effect = lambda words, feats: np.full(feats.shape[0], 3, dtype=np.int64)
        record = _record("u0", 0.5, iteration=2)
        entries = assemble_training_set(
            [], [record], self._iteration("", "3x SP"), store, recognizer, [], 0, FrontendSettings()
        )
        for entry in entries:
            assert entry.confidence == 0.5
            assert entry.iteration == 2
            assert store.pseudo_alignments[entry.entry_id].shape[0] == store.features(entry).num_frames
        unchanged = [e for e in entries if store.features(e).num_frames == FRAMES]
        for entry in unchanged:
            np.testing.assert_array_equal(store.pseudo_alignments[entry.entry_id], record.alignment)

    def test_unalignable_copy_dropped(self) -> None:
        store = _store()
        recognizer = MagicMock()
        recognizer.align.side_effect = AlignmentError("too short")
        entries = assemble_training_set(
            [], [_record("u0", 0.5)], self._iteration("", "3x SP"), store, recognizer, [], 0, FrontendSettings()
        )
        assert all(store.features(e).num_frames == FRAMES for e in entries)
        assert store.drop.called


@pytest.mark.unit
class TestWriteAccepted:
    def test_tab_separated(self, tmp_path: Path) -> None:
        path = tmp_path / "ssl" / "accepted_iter1.tsv"
        write_accepted(path, [_record("u0", 0.5)])
        assert path.read_text(encoding="utf-8") == "u0\t0.500000\tab c\n"
