"""Pronunciation lexicon: words to phones to HMM speech states.

This module imports from state — NEVER from acoustic/ or higher layers.
"""

from collections.abc import Mapping, Sequence
from dataclasses import dataclass

from src.state.corpus_settings import CorpusSettings
from src.state.errors import LexiconError
from src.state.inventory import StateInventory

NONSPEECH_WORD = "<ns>"


@dataclass(frozen=True)
class Lexicon:
    """Word to phone-sequence map bound to a state inventory."""

    pronunciations: Mapping[str, tuple[str, ...]]
    inventory: StateInventory

    def __post_init__(self) -> None:
        for word, phones in self.pronunciations.items():
            if word == NONSPEECH_WORD:
                msg = f"'{NONSPEECH_WORD}' is reserved for the non-speech loop"
                raise LexiconError(msg)
            if not phones:
                msg = f"Word '{word}' has an empty pronunciation"
                raise LexiconError(msg)
            for phone in phones:
                if phone not in self.inventory.phones:
                    msg = f"Word '{word}' uses unknown phone '{phone}'"
                    raise LexiconError(msg)

    @property
    def words(self) -> tuple[str, ...]:
        return tuple(sorted(self.pronunciations))

    def __contains__(self, word: object) -> bool:
        return word in self.pronunciations

    def word_states(self, word: str) -> list[int]:
        """Left-to-right HMM states of a word, three per phone.

        Raises:
            LexiconError: If the word is not in the lexicon.
        """
        if word == NONSPEECH_WORD:
            return list(self.inventory.s1)
        if word not in self.pronunciations:
            msg = f"Word '{word}' is not in the lexicon"
            raise LexiconError(msg)
        return [s for phone in self.pronunciations[word] for s in self.inventory.phone_states(phone)]

    def check_words(self, words: Sequence[str]) -> None:
        missing = sorted({w for w in words if w not in self.pronunciations})
        if missing:
            msg = f"Words not in the lexicon: {missing}"
            raise LexiconError(msg)


def build_lexicon(settings: CorpusSettings) -> Lexicon:
    """The corpus vocabulary as a lexicon over the corpus phone inventory."""
    inventory = StateInventory(phones=tuple(p.phone_id for p in settings.phones))
    return Lexicon(pronunciations={w: tuple(ph) for w, ph in settings.vocabulary.items()}, inventory=inventory)
