"""Word error rate by Levenshtein alignment.

Edits cost one each. Among alignments of equal cost, the one with more hits is
chosen, so "a b" vs "b c" scores one deletion plus one insertion rather than two
substitutions.
This module imports from state — NEVER from acoustic/ or higher layers.
"""

from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from src.state.errors import ContractError

_HIT, _SUB, _DEL, _INS = 0, 1, 2, 3


@dataclass(frozen=True)
class WerResult:
    """Edit counts of one utterance (or a sum over a corpus)."""

    substitutions: int
    deletions: int
    insertions: int
    ref_words: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def wer(self) -> float:
        return 100.0 * self.errors / self.ref_words if self.ref_words else 0.0

    def __add__(self, other: "WerResult") -> "WerResult":
        return WerResult(
            substitutions=self.substitutions + other.substitutions,
            deletions=self.deletions + other.deletions,
            insertions=self.insertions + other.insertions,
            ref_words=self.ref_words + other.ref_words,
        )


def edit_table(reference: Sequence[str], hypothesis: Sequence[str]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Full DP tables: errors, hits and the chosen move into each cell."""
    R, H = len(reference), len(hypothesis)
    errors = np.zeros((R + 1, H + 1), dtype=np.int64)
    hits = np.zeros((R + 1, H + 1), dtype=np.int64)
    move = np.zeros((R + 1, H + 1), dtype=np.int8)
    errors[:, 0] = np.arange(R + 1)
    move[1:, 0] = _DEL
    errors[0, :] = np.arange(H + 1)
    move[0, 1:] = _INS
    for i in range(1, R + 1):
        for j in range(1, H + 1):
            same = reference[i - 1] == hypothesis[j - 1]
            options = (
                (errors[i - 1, j - 1] + (0 if same else 1), -(hits[i - 1, j - 1] + same), _HIT if same else _SUB),
                (errors[i - 1, j] + 1, -hits[i - 1, j], _DEL),
                (errors[i, j - 1] + 1, -hits[i, j - 1], _INS),
            )
            e, neg_hits, m = min(options)
            errors[i, j], hits[i, j], move[i, j] = e, -neg_hits, m
    return errors, hits, move


def score_wer(reference: Sequence[str], hypothesis: Sequence[str]) -> WerResult:
    """Substitutions, deletions and insertions of the hypothesis against the reference.

    Raises:
        ContractError: If the reference is empty.
    """
    if not reference:
        msg = "WER needs a non-empty reference"
        raise ContractError(msg)
    _, _, move = edit_table(reference, hypothesis)
    counts = {_SUB: 0, _DEL: 0, _INS: 0, _HIT: 0}
    i, j = len(reference), len(hypothesis)
    while i > 0 or j > 0:
        m = int(move[i, j])
        counts[m] += 1
        if m in (_HIT, _SUB):
            i, j = i - 1, j - 1
        elif m == _DEL:
            i -= 1
        else:
            j -= 1
    return WerResult(
        substitutions=counts[_SUB], deletions=counts[_DEL], insertions=counts[_INS], ref_words=len(reference)
    )


def corpus_wer(pairs: Iterable[tuple[Sequence[str], Sequence[str]]]) -> WerResult:
    """Summed edits over (reference, hypothesis) pairs; empty references only count insertions."""
    total = WerResult(0, 0, 0, 0)
    for reference, hypothesis in pairs:
        if reference:
            total = total + score_wer(reference, hypothesis)
        else:
            total = total + WerResult(0, 0, len(hypothesis), 0)
    return total
