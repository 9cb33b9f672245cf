"""Tests for src/frontend/chunking.py."""

import numpy as np
import pytest
from src.frontend.chunking import ChunkSpec, chunk_ranges, chunk_sequence, whole_sequence
from src.frontend.features import FeatureSequence
from src.state.errors import ContractError


@pytest.mark.unit
class TestChunkRanges:
    def test_tiling(self) -> None:
        chunks = chunk_ranges(25, ChunkSpec(core_length=10, context_length=3), "u1")
        assert [c.core for c in chunks] == [(0, 10), (10, 20), (20, 25)]
        assert [c.left_context for c in chunks] == [(0, 0), (7, 10), (17, 20)]
        assert [c.right_context for c in chunks] == [(10, 13), (20, 23), (25, 25)]
        assert all(c.parent_id == "u1" for c in chunks)

    def test_cores_partition_frames(self) -> None:
        chunks = chunk_ranges(101, ChunkSpec(core_length=7, context_length=4))
        covered = np.concatenate([np.arange(*c.core) for c in chunks])
        np.testing.assert_array_equal(covered, np.arange(101))

    def test_loss_mask(self) -> None:
        chunk = chunk_ranges(25, ChunkSpec(core_length=10, context_length=3))[1]
        mask = chunk.loss_mask()
        assert chunk.length == 16
        assert mask.tolist() == [False] * 3 + [True] * 10 + [False] * 3
        assert int(mask.sum()) == chunk.core_frames

    def test_short_sequence_single_chunk(self) -> None:
        (chunk,) = chunk_sequence(FeatureSequence(frames=np.zeros((4, 2))), ChunkSpec(10, 5))
        assert chunk.core == (0, 4)
        assert chunk.length == 4

    def test_whole_sequence(self) -> None:
        chunk = whole_sequence(12, "u1")
        assert (chunk.start, chunk.end, chunk.core_frames) == (0, 12, 12)
        assert chunk.loss_mask().all()

    def test_invalid_spec(self) -> None:
        with pytest.raises(ContractError, match="Invalid chunk spec"):
            ChunkSpec(core_length=0)

    def test_empty_sequence(self) -> None:
        with pytest.raises(ContractError, match="empty sequence"):
            chunk_ranges(0, ChunkSpec())
