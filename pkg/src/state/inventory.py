"""HMM output-state inventory shared by the corpus, acoustic model and decoder.

Ids are dense: the non-speech set S1 comes first (one state per non-speech type),
then three left-to-right speech states per phone in inventory order.
This module imports from state — NEVER from higher layers.
"""

from dataclasses import dataclass

import numpy as np

from src.state.errors import ContractError, LexiconError

NONSPEECH_TYPES: tuple[str, ...] = ("silence", "hesitation", "babble")
STATES_PER_PHONE = 3


@dataclass(frozen=True)
class StateInventory:
    """Partition of output states into non-speech (S1) and speech (S2) ids."""

    phones: tuple[str, ...]
    nonspeech_types: tuple[str, ...] = NONSPEECH_TYPES

    def __post_init__(self) -> None:
        if not self.phones or not self.nonspeech_types:
            msg = "A state inventory needs at least one phone and one non-speech type"
            raise ContractError(msg)
        if len(set(self.phones)) != len(self.phones):
            msg = f"Duplicate phone ids in inventory: {self.phones}"
            raise ContractError(msg)

    @property
    def num_nonspeech(self) -> int:
        return len(self.nonspeech_types)

    @property
    def num_speech(self) -> int:
        return STATES_PER_PHONE * len(self.phones)

    @property
    def size(self) -> int:
        return self.num_nonspeech + self.num_speech

    @property
    def s1(self) -> tuple[int, ...]:
        return tuple(range(self.num_nonspeech))

    @property
    def s2(self) -> tuple[int, ...]:
        return tuple(range(self.num_nonspeech, self.size))

    @property
    def speech_slot(self) -> int:
        """Index of the "speech" placeholder inside the first head's output (S3 = S1 + speech)."""
        return self.num_nonspeech

    def nonspeech_state(self, kind: str) -> int:
        return self.nonspeech_types.index(kind)

    def phone_states(self, phone: str) -> tuple[int, int, int]:
        """The three left-to-right state ids of a phone.

        Raises:
            LexiconError: If the phone is not in the inventory.
        """
        if phone not in self.phones:
            msg = f"Unknown phone '{phone}'"
            raise LexiconError(msg)
        base = self.num_nonspeech + STATES_PER_PHONE * self.phones.index(phone)
        return (base, base + 1, base + 2)

    def check(self, states: np.ndarray) -> None:
        """Raise ContractError if any id lies outside [0, size)."""
        if states.size and (int(states.min()) < 0 or int(states.max()) >= self.size):
            bad = states[(states < 0) | (states >= self.size)]
            msg = f"Unknown state ids {sorted(set(bad.tolist()))[:5]} (inventory size {self.size})"
            raise ContractError(msg)

    def is_speech(self, states: np.ndarray) -> np.ndarray:
        """Boolean mask of speech states; validates ids first."""
        self.check(states)
        return states >= self.num_nonspeech
