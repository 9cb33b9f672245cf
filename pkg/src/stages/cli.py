"""Command-line interface: one subcommand per pipeline stage.

Entry point: ``python -m src.stages <subcommand> [options]``

Exit codes: 0 success, 2 usage or configuration, 3 missing input or broken
contract, 4 numeric failure. Every stage error is logged before returning.
"""

import argparse
import logging
from collections.abc import Callable, Sequence
from pathlib import Path

from src.config import JOBS, LOG_FORMAT, LOG_LEVEL
from src.stages.evaluate import EVALUATION_SPLITS, cmd_evaluate, cmd_rescore_grid
from src.stages.pipeline import (
    RANDOM_INIT,
    cmd_pretrain,
    cmd_prepare,
    cmd_ssl,
    cmd_synth,
    cmd_train,
    cmd_train_lm,
)
from src.stages.report import cmd_report
from src.stages.workspace import METRICS_NAME, Workspace
from src.state.errors import HybridLabError
from src.state.models import LossType
from src.state.settings import load_pipeline_config

logger = logging.getLogger(__name__)

Handler = Callable[[Workspace, argparse.Namespace], object]


def _train(ws: Workspace, args: argparse.Namespace) -> object:
    return cmd_train(ws, LossType(args.loss), args.init)


def _evaluate(ws: Workspace, args: argparse.Namespace) -> object:
    return cmd_evaluate(ws, args.checkpoint, args.split, args.rescore)


def _report(ws: Workspace, args: argparse.Namespace) -> object:
    return cmd_report(ws.reports_dir / METRICS_NAME, ws.reports_dir)


HANDLERS: dict[str, Handler] = {
    "synth": lambda ws, _: cmd_synth(ws),
    "prepare": lambda ws, _: cmd_prepare(ws),
    "pretrain": lambda ws, _: cmd_pretrain(ws),
    "train": _train,
    "train-lm": lambda ws, _: cmd_train_lm(ws),
    "ssl": lambda ws, args: cmd_ssl(ws, args.init),
    "evaluate": _evaluate,
    "rescore-grid": lambda ws, args: cmd_rescore_grid(ws, args.checkpoint, args.lm),
    "report": _report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="INI pipeline config (defaults when omitted)")
    common.add_argument(
        "--seed-override",
        action="append",
        default=[],
        metavar="NAME=INT",
        help="Replace a named seed; repeatable",
    )
    common.add_argument("--jobs", type=int, default=JOBS, help="Worker cap for per-utterance parallelism")
    common.add_argument("--force", action="store_true", help="Overwrite existing artifacts")

    parser = argparse.ArgumentParser(prog="hybridlab", description="Hybrid HMM-BLSTM acoustic modelling lab")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="Generate the synthetic corpus")
    sub.add_parser("prepare", parents=[common], help="Split off the noise pool and archive features")
    sub.add_parser("pretrain", parents=[common], help="Bi-APC pretraining on untranscribed data")

    train = sub.add_parser("train", parents=[common], help="Supervised acoustic model training")
    train.add_argument("--loss", choices=[str(t) for t in LossType], default=str(LossType.NSDL))
    train.add_argument("--init", default=RANDOM_INIT, help="'random' or 'biapc:PATH'")

    sub.add_parser("train-lm", parents=[common], help="Recurrent LM for N-best rescoring")

    ssl = sub.add_parser("ssl", parents=[common], help="Incremental semi-supervised training")
    ssl.add_argument("--init", type=Path, required=True, help="Starting acoustic checkpoint")

    evaluate = sub.add_parser("evaluate", parents=[common], help="WER of a checkpoint on a split")
    evaluate.add_argument("--checkpoint", type=Path, required=True)
    evaluate.add_argument("--split", default=str(EVALUATION_SPLITS[0]), help="dev or eval")
    evaluate.add_argument("--rescore", type=Path, default=None, metavar="LM_CKPT")

    grid = sub.add_parser("rescore-grid", parents=[common], help="Dev grid search of the rescoring weight")
    grid.add_argument("--checkpoint", type=Path, required=True)
    grid.add_argument("--lm", type=Path, required=True)

    sub.add_parser("report", parents=[common], help="Consolidated comparison table")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Parse arguments, run one stage and return its exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)
    try:
        config = load_pipeline_config(args.config, args.seed_override)
        ws = Workspace(config=config, jobs=args.jobs, force=args.force)
        HANDLERS[args.command](ws, args)
    except HybridLabError as exc:
        logger.error("stage_failed | command=%s error=%s exit=%d", args.command, exc, exc.exit_code)
        return exc.exit_code
    logger.info("stage_complete | command=%s", args.command)
    return 0
