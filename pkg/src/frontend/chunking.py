"""Chunk-wise training segments: fixed-length cores with clipped context on both sides.

Context frames only warm up the recurrent state; the loss mask excludes them.
"""

from dataclasses import dataclass

import numpy as np

from src.frontend.features import FeatureSequence
from src.state.errors import ContractError


@dataclass(frozen=True)
class ChunkSpec:
    """Core length and per-side context length, in frames."""

    core_length: int = 300
    context_length: int = 10

    def __post_init__(self) -> None:
        if self.core_length < 1 or self.context_length < 0:
            msg = f"Invalid chunk spec: core {self.core_length}, context {self.context_length}"
            raise ContractError(msg)


@dataclass(frozen=True)
class Chunk:
    """Half-open frame ranges into the parent sequence."""

    parent_id: str
    core: tuple[int, int]
    left_context: tuple[int, int]
    right_context: tuple[int, int]

    @property
    def start(self) -> int:
        return self.left_context[0]

    @property
    def end(self) -> int:
        return self.right_context[1]

    @property
    def length(self) -> int:
        return self.end - self.start

    @property
    def core_frames(self) -> int:
        return self.core[1] - self.core[0]

    def loss_mask(self) -> np.ndarray:
        """Boolean mask over [start, end): True on core frames, False on context frames."""
        mask = np.zeros(self.length, dtype=bool)
        mask[self.core[0] - self.start : self.core[1] - self.start] = True
        return mask


def chunk_ranges(num_frames: int, spec: ChunkSpec, parent_id: str = "") -> list[Chunk]:
    """Tile [0, num_frames) with cores; the last core may be shorter."""
    if num_frames < 1:
        msg = f"Cannot chunk an empty sequence ({num_frames} frames)"
        raise ContractError(msg)
    chunks = []
    for start in range(0, num_frames, spec.core_length):
        end = min(start + spec.core_length, num_frames)
        chunks.append(
            Chunk(
                parent_id=parent_id,
                core=(start, end),
                left_context=(max(0, start - spec.context_length), start),
                right_context=(end, min(num_frames, end + spec.context_length)),
            )
        )
    return chunks


def chunk_sequence(f: FeatureSequence, spec: ChunkSpec, parent_id: str = "") -> list[Chunk]:
    """Chunks of a feature sequence (see chunk_ranges)."""
    return chunk_ranges(f.num_frames, spec, parent_id)


def whole_sequence(num_frames: int, parent_id: str = "") -> Chunk:
    """A single chunk covering the utterance, for sequence-wise training."""
    return Chunk(parent_id=parent_id, core=(0, num_frames), left_context=(0, 0), right_context=(num_frames, num_frames))
