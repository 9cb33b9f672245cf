"""Toy word grammar: a seeded first-order Markov chain over the vocabulary.

Each history (including sentence start) prefers three successors; the rest of the
vocabulary shares the remaining probability mass uniformly.
"""

from dataclasses import dataclass

import numpy as np

from src.state.corpus_settings import CorpusSettings

SENTENCE_START = "<s>"
PREFERRED_SUCCESSORS = 3


@dataclass(frozen=True)
class ToyGrammar:
    """Successor distributions per history word."""

    words: tuple[str, ...]
    successor_probs: dict[str, np.ndarray]
    min_words: int
    max_words: int

    def sample(self, rng: np.random.Generator) -> list[str]:
        """Draw one sentence with a uniform length in [min_words, max_words]."""
        length = int(rng.integers(self.min_words, self.max_words + 1))
        sentence: list[str] = []
        history = SENTENCE_START
        for _ in range(length):
            word = self.words[int(rng.choice(len(self.words), p=self.successor_probs[history]))]
            sentence.append(word)
            history = word
        return sentence


def build_grammar(settings: CorpusSettings, seed: int) -> ToyGrammar:
    """Build the grammar deterministically from the vocabulary and a seed."""
    words = tuple(sorted(settings.vocabulary))
    rng = np.random.default_rng([seed, 200])
    n = len(words)
    k = min(PREFERRED_SUCCESSORS, n)
    probs: dict[str, np.ndarray] = {}
    for history in (SENTENCE_START, *words):
        p = np.full(n, (1.0 - settings.successor_mass) / n)
        preferred = rng.choice(n, size=k, replace=False)
        p[preferred] += settings.successor_mass / k
        probs[history] = p / p.sum()
    return ToyGrammar(words=words, successor_probs=probs, min_words=settings.min_words, max_words=settings.max_words)
