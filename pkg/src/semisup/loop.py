"""Incremental semi-supervised training over a threshold schedule.

Each iteration decodes the whole untranscribed pool with the best model so far,
keeps utterances whose confidence clears the threshold, appends them to the
transcribed data and retrains. The best checkpoint only moves when dev WER
strictly improves, so ties keep the earlier iteration.
This module imports from acoustic, decoder, frontend and state — NEVER from stages/.
"""

import logging
import time
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from src.acoustic.model import AcousticModel, save_acoustic
from src.acoustic.recognize import build_recognizer, evaluate_wer
from src.acoustic.trainer import build_instances, train_acoustic
from src.decoder.bigram import BigramLM
from src.decoder.lexicon import Lexicon
from src.frontend.augment import as_augmented
from src.frontend.store import FeatureStore
from src.nnet.params import ParameterSet
from src.semisup.pseudo import (
    PseudoLabeledUtterance,
    assemble_training_set,
    filter_by_threshold,
    pseudo_label,
    write_accepted,
)
from src.state.errors import NumericError
from src.state.models import ManifestEntry, SslReportRow
from src.state.reports import append_rows, reproducible_elapsed
from src.state.settings import (
    DecodeSettings,
    FrontendSettings,
    NsdlLossConfig,
    SslIterationConfig,
    SslSchedule,
    TrainSettings,
)

logger = logging.getLogger(__name__)

REPORT_NAME = "ssl_report.csv"
BEST_NAME = "best.ckpt"


@dataclass(frozen=True)
class SslContext:
    """Everything an iteration needs besides the evolving state."""

    model: AcousticModel
    lexicon: Lexicon
    lm: BigramLM
    decode: DecodeSettings
    train: TrainSettings
    nsdl: NsdlLossConfig
    frontend: FrontendSettings
    schedule: SslSchedule
    store: FeatureStore
    transcribed: Sequence[ManifestEntry]
    untranscribed: Sequence[ManifestEntry]
    dev: Sequence[ManifestEntry]
    noise_pool: Sequence[ManifestEntry] = ()
    initial_params: ParameterSet | None = None
    out_dir: Path | None = None
    digest: str = ""
    metadata: Mapping[str, object] = field(default_factory=dict)
    augmentation_seed: int = 0
    jobs: int = 1


@dataclass
class SslState:
    """Best checkpoint so far, the accepted pseudo labels and the iteration reports."""

    params: ParameterSet
    best_dev_wer: float
    best_iteration: int = 0
    accepted: dict[str, PseudoLabeledUtterance] = field(default_factory=dict)
    reports: list[SslReportRow] = field(default_factory=list)


def _finite(params: ParameterSet) -> bool:
    return all(np.all(np.isfinite(v)) for v in params.params.values())


def dev_wer(ctx: SslContext, params: ParameterSet) -> float:
    recognizer = build_recognizer(ctx.model, params, ctx.lexicon, ctx.lm, ctx.decode)
    return evaluate_wer(recognizer, [as_augmented(e) for e in ctx.dev], ctx.store, ctx.jobs).wer


def initial_state(ctx: SslContext, params: ParameterSet) -> SslState:
    """The starting model and its dev WER (iteration 0)."""
    wer = dev_wer(ctx, params)
    logger.info("ssl_start | dev_wer=%.2f iterations=%d", wer, len(ctx.schedule.thresholds))
    return SslState(params=params, best_dev_wer=wer)


def run_iteration(state: SslState, ctx: SslContext, index: int, iteration: SslIterationConfig, seed: int) -> SslState:
    """One decode, filter, assemble, train and evaluate cycle.

    A diverging retrain aborts the iteration: the state is returned unchanged and no
    report row is written.

    Raises:
        PipelineError: If no untranscribed utterance decodes.
    """
    started = time.monotonic()
    recognizer = build_recognizer(ctx.model, state.params, ctx.lexicon, ctx.lm, ctx.decode)
    records = pseudo_label(recognizer, ctx.untranscribed, ctx.store, index, ctx.jobs)
    accepted = filter_by_threshold(records, iteration.threshold)
    merged = {**state.accepted, **{r.entry.utterance_id: r for r in accepted}}
    entries = assemble_training_set(
        ctx.transcribed,
        list(merged.values()),
        iteration,
        ctx.store,
        recognizer,
        ctx.noise_pool,
        ctx.augmentation_seed + index,
        ctx.frontend,
    )
    instances = build_instances(entries, ctx.store, ctx.train)
    start = state.params if ctx.schedule.warm_start or ctx.initial_params is None else ctx.initial_params
    try:
        result = train_acoustic(
            ctx.model,
            start,
            instances,
            ctx.train,
            ctx.nsdl,
            seed + index,
            stage=f"ssl{index}",
            epochs=ctx.schedule.epochs,
        )
        if not _finite(result.params) or not all(np.isfinite(result.epoch_losses)):
            msg = f"SSL iteration {index} diverged"
            raise NumericError(msg)
    except NumericError as exc:
        logger.warning("ssl_iteration_aborted | iteration=%d reason=%s", index, exc)
        return state
    finally:
        ctx.store.drop([e.entry_id for e in entries])
    wer = dev_wer(ctx, result.params)
    improved = wer < state.best_dev_wer
    row = SslReportRow(
        iteration=index,
        threshold=iteration.threshold,
        decoded=len(records),
        accepted=len(accepted),
        acceptance_rate=len(accepted) / len(records),
        dev_wer=wer,
        elapsed_seconds=reproducible_elapsed(time.monotonic() - started),
        improved=improved,
    )
    if ctx.out_dir is not None:
        write_accepted(ctx.out_dir / f"accepted_iter{index}.tsv", accepted)
        append_rows(ctx.out_dir / REPORT_NAME, [row])
        path = ctx.out_dir / f"iter{index}.ckpt"
        save_acoustic(path, result.params, ctx.model, f"ssl{index}", ctx.digest, metadata=ctx.metadata)
    logger.info(
        "ssl_iteration | iteration=%d threshold=%.3f decoded=%d accepted=%d dev_wer=%.2f improved=%s",
        index,
        iteration.threshold,
        len(records),
        len(accepted),
        wer,
        improved,
    )
    return SslState(
        params=result.params if improved else state.params,
        best_dev_wer=wer if improved else state.best_dev_wer,
        best_iteration=index if improved else state.best_iteration,
        accepted=merged,
        reports=[*state.reports, row],
    )


def run_schedule(ctx: SslContext, params: ParameterSet, seed: int) -> SslState:
    """Run every scheduled iteration in order and save the best checkpoint."""
    state = initial_state(ctx, params)
    for index, iteration in enumerate(ctx.schedule.iterations(), start=1):
        state = run_iteration(state, ctx, index, iteration, seed)
    if ctx.out_dir is not None:
        save_acoustic(ctx.out_dir / BEST_NAME, state.params, ctx.model, "ssl", ctx.digest, metadata=ctx.metadata)
    logger.info("ssl_complete | best_iteration=%d dev_wer=%.2f", state.best_iteration, state.best_dev_wer)
    return state
