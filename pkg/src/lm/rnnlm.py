"""Word-level recurrent language model: embedding, stacked LSTM layers, softmax output.

Every sentence is scored as P(w_1 | <s>) ... P(</s> | w_1 .. w_n). Words outside
the vocabulary map to <unk>.
This module imports from nnet and state — NEVER from acoustic/, semisup/ or stages/.
"""

import logging
import time
from collections import Counter
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from src.config import DTYPE
from src.nnet.autodiff import Tensor, getitem, linear, log_softmax, no_grad, pick, total
from src.nnet.lstm import length_mask, lstm_scan
from src.nnet.optim import OptimizerState, sgd_step
from src.nnet.params import ParameterSet, init_linear, uniform_init
from src.state.checkpoint import load_checkpoint, save_checkpoint
from src.state.errors import ConfigurationError, ContractError, NumericError
from src.state.models import LossLogRow
from src.state.reports import append_loss_log
from src.state.settings import RnnLmConfig

logger = logging.getLogger(__name__)

STAGE = "rnnlm"
BOS, EOS, UNK = "<s>", "</s>", "<unk>"
RESERVED = (BOS, EOS, UNK)
BOS_ID, EOS_ID, UNK_ID = 0, 1, 2
EMBEDDING_SCALE = 0.1


@dataclass(frozen=True)
class Vocab:
    """Dense word ids; the reserved symbols take ids 0, 1 and 2."""

    words: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.words[: len(RESERVED)] != RESERVED:
            msg = f"Vocabulary must start with {RESERVED}, got {self.words[:3]}"
            raise ContractError(msg)
        if len(set(self.words)) != len(self.words):
            msg = "Vocabulary contains duplicate words"
            raise ContractError(msg)

    @property
    def size(self) -> int:
        return len(self.words)

    @cached_property
    def index(self) -> dict[str, int]:
        return {w: i for i, w in enumerate(self.words)}

    def encode(self, words: Sequence[str]) -> list[int]:
        index = self.index
        return [index.get(w, UNK_ID) for w in words]


def build_vocab(texts: Sequence[Sequence[str]], min_count: int = 1) -> Vocab:
    """Words seen at least ``min_count`` times, sorted, after the reserved symbols.

    Raises:
        ConfigurationError: If there are no sentences.
    """
    if not texts:
        msg = "Cannot build an LM vocabulary from an empty corpus"
        raise ConfigurationError(msg)
    counts = Counter(w for sentence in texts for w in sentence if w not in RESERVED)
    return Vocab(words=RESERVED + tuple(sorted(w for w, c in counts.items() if c >= min_count)))


@dataclass(frozen=True)
class RnnLm:
    vocab: Vocab
    config: RnnLmConfig
    params: ParameterSet


@dataclass
class LmTrainResult:
    lm: RnnLm
    perplexities: list[float] = field(default_factory=list)
    train_perplexities: list[float] = field(default_factory=list)


def init_rnnlm(vocab: Vocab, config: RnnLmConfig, seed: int) -> ParameterSet:
    """Embedding, ``config.layers`` LSTM layers (forget-gate bias 1) and the output projection."""
    rng = np.random.default_rng([seed, 0])
    params: dict[str, np.ndarray] = {
        "embed": rng.uniform(-EMBEDDING_SCALE, EMBEDDING_SCALE, size=(vocab.size, config.embedding))
    }
    in_dim = config.embedding
    H = config.hidden
    for layer in range(config.layers):
        bias = np.zeros(4 * H)
        bias[H : 2 * H] = 1.0
        params[f"lstm{layer}.w_ih"] = uniform_init(rng, in_dim, (in_dim, 4 * H))
        params[f"lstm{layer}.w_hh"] = uniform_init(rng, H, (H, 4 * H))
        params[f"lstm{layer}.b"] = bias
        in_dim = H
    params.update(init_linear(rng, "out", H, vocab.size))
    return ParameterSet(params=params, tag=STAGE)


def batch_sentences(vocab: Vocab, sentences: Sequence[Sequence[str]]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Time-major (T, B) inputs ``<s> w..``, targets ``w.. </s>`` and the valid-step mask."""
    ids = [vocab.encode(s) for s in sentences]
    lengths = np.array([len(s) + 1 for s in ids], dtype=np.int64)
    T, B = int(lengths.max()), len(ids)
    inputs = np.full((T, B), EOS_ID, dtype=np.int64)
    targets = np.full((T, B), EOS_ID, dtype=np.int64)
    for b, seq in enumerate(ids):
        inputs[: len(seq) + 1, b] = [BOS_ID, *seq]
        targets[: len(seq) + 1, b] = [*seq, EOS_ID]
    return inputs, targets, length_mask(lengths, T)


def next_word_log_probs(leaves: Mapping[str, Tensor], inputs: np.ndarray, mask: np.ndarray, layers: int) -> Tensor:
    """(T, B, V) log distributions over the next word."""
    hidden = getitem(leaves["embed"], inputs)
    for layer in range(layers):
        hidden, _ = lstm_scan(
            hidden, leaves[f"lstm{layer}.w_ih"], leaves[f"lstm{layer}.w_hh"], leaves[f"lstm{layer}.b"], mask
        )
    return log_softmax(linear(hidden, leaves["out.w"], leaves["out.b"]))


def sentence_nll(
    leaves: Mapping[str, Tensor], inputs: np.ndarray, targets: np.ndarray, mask: np.ndarray, layers: int
) -> Tensor:
    """Summed negative log-likelihood over the valid steps of a batch."""
    picked = pick(next_word_log_probs(leaves, inputs, mask, layers), targets)
    return -total(getitem(picked, np.nonzero(mask)))


def _token_logprobs(lm: RnnLm, sentences: Sequence[Sequence[str]]) -> np.ndarray:
    inputs, targets, mask = batch_sentences(lm.vocab, sentences)
    with no_grad():
        leaves = {k: Tensor(v) for k, v in lm.params.params.items()}
        logp = next_word_log_probs(leaves, inputs, mask, lm.config.layers).value
    picked = np.take_along_axis(logp, targets[:, :, None], axis=-1)[:, :, 0]
    return np.where(mask, picked, 0.0)


def sentence_logprob(lm: RnnLm, words: Sequence[str]) -> float:
    """log P(words, </s> | <s>); unknown words score as <unk>."""
    return float(_token_logprobs(lm, [words]).sum())


def score_sentences(lm: RnnLm, sentences: Sequence[Sequence[str]], batch_size: int = 64) -> np.ndarray:
    """Sentence log probabilities, scored in padded batches."""
    out = np.zeros(len(sentences))
    for start in range(0, len(sentences), batch_size):
        chunk = sentences[start : start + batch_size]
        out[start : start + len(chunk)] = _token_logprobs(lm, chunk).sum(axis=0)
    return out


def next_word_distribution(lm: RnnLm, prefix: Sequence[str]) -> np.ndarray:
    """P(. | <s> prefix) over the vocabulary."""
    inputs = np.array([[BOS_ID, *lm.vocab.encode(prefix)]], dtype=np.int64).T
    mask = np.ones(inputs.shape, dtype=bool)
    with no_grad():
        leaves = {k: Tensor(v) for k, v in lm.params.params.items()}
        logp = next_word_log_probs(leaves, inputs, mask, lm.config.layers).value
    return np.exp(logp[-1, 0])


def perplexity(lm: RnnLm, sentences: Sequence[Sequence[str]]) -> float:
    """exp of the mean per-token negative log-likelihood, counting </s> as a token."""
    tokens = sum(len(s) + 1 for s in sentences)
    return float(np.exp(-score_sentences(lm, sentences).sum() / tokens))


def split_held_out(sentences: Sequence[Sequence[str]], seed: int) -> tuple[list[list[str]], list[list[str]]]:
    """Seeded 90/10 split. A one-sentence corpus is used for both parts."""
    if len(sentences) == 1:
        return [list(sentences[0])], [list(sentences[0])]
    order = np.random.default_rng([seed, 1]).permutation(len(sentences))
    held = max(1, len(sentences) // 10)
    return [list(sentences[i]) for i in order[held:]], [list(sentences[i]) for i in order[:held]]


def train_lm(
    texts: Sequence[Sequence[str]],
    config: RnnLmConfig,
    seed: int,
    *,
    loss_log: Path | None = None,
) -> LmTrainResult:
    """Next-word cross-entropy training with held-out perplexity after every epoch.

    Raises:
        ConfigurationError: If the corpus is empty.
    """
    vocab = build_vocab(texts, config.min_count)
    train, held = split_held_out(texts, seed)
    dtype = np.dtype(DTYPE)
    lm = RnnLm(vocab=vocab, config=config, params=init_rnnlm(vocab, config, seed).astype(dtype))
    optimizer = OptimizerState(learning_rate=config.learning_rate, momentum=config.momentum, clip_norm=config.clip_norm)
    result = LmTrainResult(lm=lm)
    logger.info("rnnlm_start | vocab=%d train=%d held_out=%d", vocab.size, len(train), len(held))
    for epoch in range(config.epochs):
        started = time.monotonic()
        order = np.random.default_rng([seed, 2, epoch]).permutation(len(train))
        nll, tokens = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch = [train[i] for i in order[start : start + config.batch_size]]
            inputs, targets, mask = batch_sentences(vocab, batch)
            leaves = lm.params.leaves()
            loss = sentence_nll(leaves, inputs, targets, mask, config.layers)
            count = int(mask.sum())
            try:
                if not np.isfinite(loss.value):
                    msg = f"Non-finite LM loss at epoch {epoch}"
                    raise NumericError(msg)
                (loss * (1.0 / count)).backward()
                grads = {k: t.grad if t.grad is not None else np.zeros_like(t.value) for k, t in leaves.items()}
                new, optimizer = sgd_step(lm.params.params, grads, optimizer)
            except NumericError as exc:
                logger.warning("step_skipped | stage=%s epoch=%d reason=%s", STAGE, epoch, exc)
                continue
            lm = RnnLm(vocab=vocab, config=config, params=lm.params.with_params(new))
            nll += float(loss.value)
            tokens += count
        train_ppl = float(np.exp(nll / tokens)) if tokens else float("nan")
        held_ppl = perplexity(lm, held)
        result.train_perplexities.append(train_ppl)
        result.perplexities.append(held_ppl)
        if loss_log is not None:
            row = LossLogRow(
                stage=STAGE, epoch=epoch, utterance_id="*epoch*", frames=tokens, total=float(np.log(held_ppl))
            )
            append_loss_log(loss_log, [row])
        logger.info(
            "epoch_complete | stage=%s epoch=%d train_ppl=%.3f held_out_ppl=%.3f seconds=%.1f",
            STAGE,
            epoch,
            train_ppl,
            held_ppl,
            time.monotonic() - started,
        )
    result.lm = lm
    return result


def save_rnnlm(path: Path, lm: RnnLm, digest: str, *, force: bool = True) -> None:
    ckpt = lm.params.to_checkpoint(
        STAGE, digest, metadata={"vocab": list(lm.vocab.words), "config": lm.config.model_dump(mode="json")}
    )
    save_checkpoint(path, ckpt, force=force)


def load_rnnlm(path: Path, digest: str | None = None) -> RnnLm:
    """Load an LM checkpoint; its stage tag must be "rnnlm".

    Raises:
        InputError: If the file is missing or malformed.
        ContractError: On a wrong stage tag or stale digest.
    """
    ckpt = load_checkpoint(path, stage=STAGE, digest=digest)
    return RnnLm(
        vocab=Vocab(words=tuple(ckpt.metadata["vocab"])),
        config=RnnLmConfig.model_validate(ckpt.metadata["config"]),
        params=ParameterSet.from_checkpoint(ckpt),
    )
