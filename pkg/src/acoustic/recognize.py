"""First-pass recognition: acoustic model posteriors fed through the decoder.

Utterances decode independently; ``decode_entries`` fans them out over a thread
pool capped by the job count and returns results in input order.
This module imports from decoder, frontend, nnet and state — NEVER from stages/ or semisup/.
"""

import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from src.acoustic.model import PRIOR_NAME, AcousticModel, log_posteriors
from src.config import JOBS
from src.decoder.bigram import BigramLM
from src.decoder.graph import DecodingGraph, build_graph
from src.decoder.lexicon import Lexicon
from src.decoder.nbest import NBestList, nbest_decode
from src.decoder.scoring import WerResult, corpus_wer
from src.decoder.viterbi import Hypothesis, align_transcript, viterbi_decode
from src.frontend.store import FeatureStore
from src.nnet.params import ParameterSet
from src.state.errors import DecodeError
from src.state.models import AugmentedEntry
from src.state.settings import DecodeSettings

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Recognizer:
    """A trained acoustic model bound to a decoding graph."""

    model: AcousticModel
    params: ParameterSet
    lexicon: Lexicon
    lm: BigramLM
    graph: DecodingGraph
    settings: DecodeSettings

    @property
    def prior(self) -> np.ndarray | None:
        return self.params.buffers.get(PRIOR_NAME)

    def log_posteriors(self, features: np.ndarray) -> np.ndarray:
        return log_posteriors(self.model, self.params, features)

    def decode(self, features: np.ndarray) -> tuple[Hypothesis, np.ndarray]:
        """Best hypothesis plus the log posteriors it was decoded from."""
        post = self.log_posteriors(features)
        return viterbi_decode(self.graph, post, self.settings, self.prior), post

    def nbest(self, features: np.ndarray, n: int, utterance_id: str = "") -> NBestList:
        return nbest_decode(self.graph, self.log_posteriors(features), self.settings, n, self.prior, utterance_id)

    def align(self, transcript: Sequence[str], features: np.ndarray) -> np.ndarray:
        """Forced alignment of a known word sequence.

        Raises:
            AlignmentError: If the features are too short for the transcript.
        """
        alignment, _ = align_transcript(
            self.lexicon, self.lm, self.settings, transcript, self.log_posteriors(features), self.prior
        )
        return alignment


def build_recognizer(
    model: AcousticModel, params: ParameterSet, lexicon: Lexicon, lm: BigramLM, settings: DecodeSettings
) -> Recognizer:
    return Recognizer(
        model=model, params=params, lexicon=lexicon, lm=lm, graph=build_graph(lexicon, lm, settings), settings=settings
    )


@dataclass(frozen=True)
class Decoded:
    """Outcome for one entry; ``hypothesis`` is None when decoding failed."""

    entry: AugmentedEntry
    hypothesis: Hypothesis | None
    log_posteriors: np.ndarray | None = None


def decode_entries(
    recognizer: Recognizer, entries: Sequence[AugmentedEntry], store: FeatureStore, jobs: int = JOBS
) -> list[Decoded]:
    """Decode every entry; failures are logged and returned with an empty hypothesis."""

    def one(entry: AugmentedEntry) -> Decoded:
        features = store.features(entry).frames
        try:
            hyp, post = recognizer.decode(features)
        except DecodeError as exc:
            logger.warning("decode_failed | entry=%s frames=%d reason=%s", entry.entry_id, features.shape[0], exc)
            return Decoded(entry=entry, hypothesis=None)
        return Decoded(entry=entry, hypothesis=hyp, log_posteriors=post)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        return list(pool.map(one, entries))


def score_decoded(decoded: Sequence[Decoded]) -> WerResult:
    """Corpus WER against the entries' transcripts; failed decodes count as empty hypotheses."""
    return corpus_wer(
        (d.entry.transcript, d.hypothesis.words if d.hypothesis is not None else ()) for d in decoded
    )


def evaluate_wer(
    recognizer: Recognizer, entries: Sequence[AugmentedEntry], store: FeatureStore, jobs: int = JOBS
) -> WerResult:
    result = score_decoded(decode_entries(recognizer, entries, store, jobs))
    logger.info(
        "evaluated | utterances=%d wer=%.2f sub=%d del=%d ins=%d",
        len(entries),
        result.wer,
        result.substitutions,
        result.deletions,
        result.insertions,
    )
    return result
