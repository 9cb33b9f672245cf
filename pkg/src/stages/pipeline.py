"""Build stages of the pipeline: corpus, features, pretraining, supervised and SSL training, LM.

Every stage checks its inputs and output paths before any compute, then writes
checkpoints stamped with the digest of the config sections they depend on.
This module imports from every lower layer — it is in stages/, the top of the stack.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from src.acoustic.biapc import STAGE as BIAPC_STAGE
from src.acoustic.biapc import pretrain, transfer
from src.acoustic.model import PRIOR_NAME, acoustic_metadata, estimate_priors, init_acoustic
from src.acoustic.recognize import build_recognizer, evaluate_wer
from src.acoustic.trainer import build_instances, train_acoustic
from src.corpus.generate import corpus_digest, corpus_stats, generate_corpus, split_nonspeech_utterances
from src.frontend.augment import apply_augmentation, as_augmented, parse_augmentation_spec
from src.lm.rnnlm import save_rnnlm, train_lm
from src.nnet.params import ParameterSet
from src.semisup.loop import BEST_NAME, REPORT_NAME, SslContext, run_schedule
from src.stages.report import metrics_row
from src.stages.workspace import (
    ACOUSTIC_SECTIONS,
    BIAPC_NAME,
    BIAPC_SECTIONS,
    CURVE_NAME,
    METRICS_NAME,
    NOISE_POOL_NAME,
    PREPARED_NAME,
    RNNLM_NAME,
    RNNLM_SECTIONS,
    SSL_SECTIONS,
    Workspace,
    acoustic_name,
)
from src.state.errors import UsageError
from src.state.manifest import MANIFEST_NAME, read_manifest, write_manifest
from src.state.models import CorpusManifest, LossType, Split
from src.state.reports import append_rows

logger = logging.getLogger(__name__)

RANDOM_INIT = "random"
BIAPC_PREFIX = "biapc:"


def cmd_synth(ws: Workspace) -> CorpusManifest:
    """Generate the corpus unless one with the same settings and seed is already there."""
    path = ws.corpus_dir / MANIFEST_NAME
    expected = corpus_digest(ws.config.corpus, ws.config.seeds.corpus)
    if path.is_file() and not ws.force:
        existing = read_manifest(path)
        if existing.digest == expected:
            logger.info("synth | skipped, up to date dir=%s digest=%s", ws.corpus_dir, expected[:12])
            return existing
    manifest = generate_corpus(ws.config.corpus, ws.config.seeds.corpus, ws.corpus_dir)
    stats = corpus_stats(manifest, ws.corpus_dir, ws.config.corpus)
    ratio = stats.nonspeech.total / max(stats.speech.total, 1)
    logger.info("synth | utterances=%d nonspeech_speech_ratio=%.3f", stats.utterances, ratio)
    return manifest


def cmd_prepare(ws: Workspace) -> CorpusManifest:
    """Move pure non-speech utterances into the noise pool and archive unperturbed features."""
    prepared, pool = split_nonspeech_utterances(ws.raw_manifest)
    write_manifest(ws.corpus_dir / PREPARED_NAME, prepared)
    write_manifest(ws.corpus_dir / NOISE_POOL_NAME, prepared.model_copy(update={"entries": pool}))
    store = ws.store
    with ThreadPoolExecutor(max_workers=max(1, ws.jobs)) as executor:
        archived = list(executor.map(store.archive, prepared.entries))
    logger.info("prepare | entries=%d noise_pool=%d archives=%d", len(prepared.entries), len(pool), len(archived))
    return prepared


def cmd_pretrain(ws: Workspace) -> Path:
    """Bi-APC pretraining on the untranscribed split."""
    out = ws.models_dir / BIAPC_NAME
    ws.check_writable(out)
    seeds = ws.config.seeds
    result = pretrain(
        ws.split(Split.UNTRANSCRIBED),
        ws.store,
        ws.config.model,
        ws.config.biapc,
        ws.config.frontend,
        seeds.init,
        augmentation_seed=seeds.augmentation,
        loss_log=ws.loss_log,
    )
    ws.save(out, result.params, BIAPC_STAGE, BIAPC_SECTIONS, losses=result.losses)
    return out


def parse_init(init: str) -> tuple[str, Path | None]:
    """``random`` or ``biapc:PATH`` into (init tag, pretrained checkpoint path).

    Raises:
        UsageError: On any other value.
    """
    if init == RANDOM_INIT:
        return RANDOM_INIT, None
    if init.startswith(BIAPC_PREFIX) and init[len(BIAPC_PREFIX) :]:
        return "biapc", Path(init[len(BIAPC_PREFIX) :])
    msg = f"Bad --init {init!r}; expected 'random' or 'biapc:PATH'"
    raise UsageError(msg)


def cmd_train(ws: Workspace, loss: LossType, init: str) -> Path:
    """Supervised training with per-epoch dev WER; writes models/{loss}-{init}.ckpt."""
    tag, pretrained_path = parse_init(init)
    out = ws.models_dir / acoustic_name(loss, tag)
    ws.check_writable(out)
    if pretrained_path is not None:
        ws.require(pretrained_path)
    config, seeds = ws.config, ws.config.seeds
    model = ws.acoustic_model(loss)
    sections = ACOUSTIC_SECTIONS
    if pretrained_path is None:
        params = init_acoustic(model, seeds.init)
    else:
        pretrained, _ = ws.load(pretrained_path, stage=BIAPC_STAGE)
        params = transfer(pretrained, model, seeds.init)
        sections = (*ACOUSTIC_SECTIONS, "biapc")
    spec = parse_augmentation_spec(config.train.augmentation, config.frontend)
    entries = apply_augmentation(ws.supervised_entries(), spec, ws.noise_pool, seeds.augmentation, config.frontend)
    instances = build_instances(entries, ws.store, config.train)
    stage = f"{loss}-{tag}"
    prior = estimate_priors([inst.labels[inst.loss_mask] for inst in instances], model.inventory)
    recognizer = build_recognizer(model, params, ws.lexicon, ws.bigram, config.decode)
    dev = [as_augmented(e) for e in ws.split(Split.DEV)]

    def dev_curve(epoch: int, current: ParameterSet) -> float | None:
        if not dev:
            return None
        scored = replace(recognizer, params=current.with_buffers({PRIOR_NAME: prior}))
        result = evaluate_wer(scored, dev, ws.store, ws.jobs)
        append_rows(ws.reports_dir / CURVE_NAME, [metrics_row(f"{stage}@epoch{epoch}", Split.DEV, result, len(dev))])
        return result.wer

    result = train_acoustic(
        model,
        params,
        instances,
        config.train,
        config.nsdl,
        seeds.dropout,
        stage=stage,
        loss_log=ws.loss_log,
        on_epoch=dev_curve,
    )
    ws.save(out, result.params, stage, sections, **acoustic_metadata(model), init=tag)
    if dev:
        final = evaluate_wer(replace(recognizer, params=result.params), dev, ws.store, ws.jobs)
        append_rows(ws.reports_dir / METRICS_NAME, [metrics_row(stage, Split.DEV, final, len(dev))])
    logger.info("train | stage=%s checkpoint=%s skipped_steps=%d", stage, out, result.skipped_steps)
    return out


def cmd_train_lm(ws: Workspace) -> Path:
    """Recurrent LM on transcribed-train transcripts plus the written text."""
    out = ws.models_dir / RNNLM_NAME
    ws.check_writable(out)
    result = train_lm(ws.lm_sentences(), ws.config.rnnlm, ws.config.seeds.lm, loss_log=ws.loss_log)
    save_rnnlm(out, result.lm, ws.digest(RNNLM_SECTIONS))
    logger.info("train_lm | checkpoint=%s held_out_ppl=%.3f", out, result.perplexities[-1])
    return out


def cmd_ssl(ws: Workspace, init: Path) -> Path:
    """Incremental SSL from an acoustic checkpoint; writes ssl/best.ckpt and the iteration report."""
    ws.require(init)
    out_dir = ws.config.paths.ssl_dir
    ws.check_writable(out_dir / BEST_NAME)
    params, ckpt = ws.load(init)
    config, seeds = ws.config, ws.config.seeds
    model = ws.acoustic_model(ws.loss_of(ckpt))
    ctx = SslContext(
        model=model,
        lexicon=ws.lexicon,
        lm=ws.bigram,
        decode=config.decode,
        train=config.train,
        nsdl=config.nsdl,
        frontend=config.frontend,
        schedule=config.ssl,
        store=ws.store,
        transcribed=ws.supervised_entries(),
        untranscribed=ws.split(Split.UNTRANSCRIBED),
        dev=ws.split(Split.DEV),
        noise_pool=ws.noise_pool,
        initial_params=params,
        out_dir=out_dir,
        digest=ws.digest(SSL_SECTIONS),
        metadata={"digest_sections": list(SSL_SECTIONS), "init": str(init)},
        augmentation_seed=seeds.augmentation,
        jobs=ws.jobs,
    )
    (out_dir / REPORT_NAME).unlink(missing_ok=True)
    state = run_schedule(ctx, params, seeds.ssl)
    dev = [as_augmented(e) for e in ctx.dev]
    if dev:
        recognizer = build_recognizer(model, state.params, ws.lexicon, ws.bigram, config.decode)
        result = evaluate_wer(recognizer, dev, ws.store, ws.jobs)
        append_rows(ws.reports_dir / METRICS_NAME, [metrics_row("ssl", Split.DEV, result, len(dev))])
    return out_dir / BEST_NAME
