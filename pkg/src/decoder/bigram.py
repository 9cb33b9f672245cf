"""Word bigram LM with absolute discounting and add-one unigram backoff.

P(w|h) = max(c(h,w) - D, 0) / c(h) + D * N1+(h) / c(h) * P_uni(w), and
P(w|h) = P_uni(w) for unseen histories. Predicted events are the vocabulary
plus </s>; histories are the vocabulary plus <s>.
This module imports from state — NEVER from acoustic/ or higher layers.
"""

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from src.state.errors import ConfigurationError

logger = logging.getLogger(__name__)

BOS = "<s>"
EOS = "</s>"


@dataclass(frozen=True)
class BigramLM:
    """Dense log-probability table.

    ``log_probs[h, w]``: row h < V is vocabulary word h, row V is <s>;
    column w < V is vocabulary word w, column V is </s>.
    """

    vocabulary: tuple[str, ...]
    log_probs: np.ndarray

    @property
    def size(self) -> int:
        return len(self.vocabulary)

    def index(self, word: str) -> int:
        try:
            return self.vocabulary.index(word)
        except ValueError:
            msg = f"Word '{word}' is not in the LM vocabulary"
            raise ConfigurationError(msg) from None

    def log_prob(self, history: str, word: str) -> float:
        h = self.size if history == BOS else self.index(history)
        w = self.size if word == EOS else self.index(word)
        return float(self.log_probs[h, w])

    def sentence_log_prob(self, words: Sequence[str]) -> float:
        """log P(</s> w_n ... w_1 | <s>)."""
        history = BOS
        score = 0.0
        for word in [*words, EOS]:
            score += self.log_prob(history, word)
            history = word
        return score


def train_bigram(sentences: Iterable[Sequence[str]], vocabulary: Sequence[str], discount: float = 0.5) -> BigramLM:
    """Count bigrams over sentences and build the discounted table.

    Raises:
        ConfigurationError: If a sentence uses a word outside the vocabulary or the discount is outside (0, 1).
    """
    if not 0.0 < discount < 1.0:
        msg = f"Absolute discount must lie in (0, 1), got {discount}"
        raise ConfigurationError(msg)
    vocab = tuple(sorted(vocabulary))
    index = {w: i for i, w in enumerate(vocab)}
    V = len(vocab)
    counts = np.zeros((V + 1, V + 1))
    for sentence in sentences:
        unknown = [w for w in sentence if w not in index]
        if unknown:
            msg = f"LM training text uses words outside the vocabulary: {sorted(set(unknown))}"
            raise ConfigurationError(msg)
        ids = [V, *(index[w] for w in sentence), V]
        for h, w in zip(ids[:-1], ids[1:], strict=True):
            counts[h, w] += 1
    unigram = counts.sum(axis=0) + 1.0
    unigram /= unigram.sum()
    totals = counts.sum(axis=1, keepdims=True)
    seen = (counts > 0).sum(axis=1, keepdims=True)
    safe = np.where(totals > 0, totals, 1.0)
    probs = np.where(
        totals > 0,
        np.maximum(counts - discount, 0.0) / safe + discount * seen / safe * unigram[None, :],
        unigram[None, :],
    )
    logger.info("bigram_trained | vocab=%d tokens=%d", V, int(counts.sum()))
    return BigramLM(vocabulary=vocab, log_probs=np.log(probs))
