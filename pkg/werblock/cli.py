"""Command-line front end: score, infer-blocks, analyze, simulate, compare."""

import argparse
import logging
import re
import sys
from pathlib import Path
from typing import Any

import yaml
from rich.console import Console
from rich.logging import RichHandler

from .blocks import (
    BlockPartition,
    infer_blocks,
    load_blocks_file,
    singleton_blocks,
    speaker_blocks,
    write_blocks_file,
)
from .config import (
    AUTO_CV,
    VALID_CV_RULES,
    VALID_ESTIMATORS,
    VALID_FORMATS,
    VALID_MARGINALS,
    VALID_METHODS,
    BootstrapConfig,
    GlassoConfig,
    NonparanormalConfig,
    RunConfig,
    build_config,
    config_summary,
    load_config,
)
from .errors import ValidationError, WerBlockError
from .eval_data import (
    EmbeddingMatrix,
    EvalDataset,
    concat_embeddings,
    group_by_speaker,
    load_embeddings,
    load_eval_records,
    write_eval_records,
)
from .glasso import PrecisionEstimate, write_precision_dump
from .parallel import resolve_workers
from .report import (
    MethodResult,
    render_consistency_tsv,
    render_ratio_tsv,
    render_report,
    write_output,
)
from .resampling import run_analysis
from .simulation import SyntheticSpec, consistency_experiment, generate, write_synthetic
from .wer import load_transcripts, score_transcripts

log = logging.getLogger(__name__)

METHOD_ORDER = ("bootstrap", "inferred-block-bootstrap", "block-bootstrap")
LOG_FORMAT = "%(message)s"


# ------------------ Argument Parsing ------------------
def _lambda_arg(text: str) -> float | str:
    if text == AUTO_CV:
        return text
    try:
        value = float(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected a number or '{AUTO_CV}', got '{text}'") from e
    if value < 0:
        raise argparse.ArgumentTypeError("lambda must be non-negative")
    return value


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'") from e


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--log-level", default="INFO", help="Log level (DEBUG, INFO, etc.)")
    common.add_argument("--config", type=Path, help="YAML file with glasso/nonparanormal/bootstrap")
    common.add_argument(
        "--workers", type=int, help="Worker threads (default: available parallelism)"
    )
    common.add_argument("--format", dest="report_format", choices=sorted(VALID_FORMATS))
    common.add_argument("--out", type=Path, help="Output path (default: stdout)")
    common.add_argument("--seed", type=int, help="Seed for CV folds and bootstrap streams")
    return common


def _add_inference_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--eval", dest="eval_path", type=Path, required=True, help="Eval TSV")
    parser.add_argument("--embeddings", dest="embeddings_path", type=Path, help="Embeddings")
    parser.add_argument(
        "--extra-embeddings",
        type=Path,
        action="append",
        help="More embeddings for the same utterances, appended column-wise (repeatable)",
    )
    parser.add_argument("--estimator", choices=sorted(VALID_ESTIMATORS))
    parser.add_argument("--lambda", dest="lam", type=_lambda_arg, help=f"Penalty or '{AUTO_CV}'")
    parser.add_argument("--cv-folds", type=int, help="Cross-validation folds over dimensions")
    parser.add_argument("--cv-rule", choices=sorted(VALID_CV_RULES), help="CV penalty choice")
    parser.add_argument(
        "--global-graph",
        action="store_true",
        help="Estimate one graph over all utterances instead of one per speaker",
    )


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="werblock",
        description="WER confidence intervals with inferred-block bootstrap",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    score = sub.add_parser("score", parents=[common], help="Align transcripts into an eval TSV")
    score.add_argument("--refs", type=Path, required=True)
    score.add_argument("--hyp-a", type=Path, required=True)
    score.add_argument("--hyp-b", type=Path, required=True)
    score.add_argument("--speakers", type=Path, help="utt_id<TAB>speaker_id map")

    infer = sub.add_parser("infer-blocks", parents=[common], help="Write inferred blocks")
    _add_inference_args(infer)
    infer.add_argument("--ratios-out", type=Path, help="Per-speaker block ratio TSV")
    infer.add_argument(
        "--precision-dump", type=Path, help="Directory for one precision edge TSV per speaker"
    )

    analyze = sub.add_parser("analyze", parents=[common], help="Confidence intervals")
    _add_inference_args(analyze)
    analyze.add_argument("--method", choices=sorted(VALID_METHODS))
    analyze.add_argument("--bboot", type=int, help="Bootstrap replicates")
    analyze.add_argument("--blocks-file", type=Path, help="block_id<TAB>utt_id partition")
    analyze.add_argument("--blocks-out", type=Path, help="Write the inferred partition here")
    analyze.add_argument("--ratios-out", type=Path, help="Per-speaker block ratio TSV")

    compare = sub.add_parser("compare", parents=[common], help="All three methods side by side")
    _add_inference_args(compare)
    compare.add_argument("--bboot", type=int, help="Bootstrap replicates")
    compare.add_argument("--blocks-file", type=Path, help="Blocks for block-bootstrap")
    compare.add_argument(
        "--all-estimators",
        action="store_true",
        help="Run inferred-block-bootstrap with both glasso and nonparanormal",
    )

    simulate = sub.add_parser("simulate", parents=[common], help="Synthetic data and checks")
    simulate.add_argument("--out-dir", type=Path, help="Directory for the generated files")
    simulate.add_argument("--n-speakers", type=int, default=4)
    simulate.add_argument("--utts-per-speaker", type=int, default=24)
    simulate.add_argument("--block-size", type=int, default=3)
    simulate.add_argument("--within-block-corr", type=float, default=0.7)
    simulate.add_argument(
        "--speaker-rate-corr", type=float, default=0.0, help="Error-rate correlation per speaker"
    )
    simulate.add_argument("--dim", type=int, default=2000, help="Embedding dimension L")
    simulate.add_argument("--error-rate", type=float, default=0.1)
    simulate.add_argument("--words-per-utt", type=int, default=20)
    simulate.add_argument("--marginal", choices=sorted(VALID_MARGINALS), default="gaussian")
    simulate.add_argument("--system-b-ratio", type=float, default=0.85)
    simulate.add_argument("--consistency-grid", type=_int_list, help="e.g. 96,384,1536")
    simulate.add_argument("--reps", type=int, default=200)
    simulate.add_argument("--use-truth", action="store_true", help="Skip block inference")
    simulate.add_argument("--lambda", dest="lam", type=_lambda_arg)
    return parser


# ------------------ Configuration ------------------
def run_config_from_args(args: argparse.Namespace) -> RunConfig:
    """Merge the optional YAML file with command-line flags (flags win)."""
    sections: dict[str, dict[str, Any]] = load_config(args.config) if args.config else {}
    seed = args.seed
    estimator = getattr(args, "estimator", None) or "glasso"

    glasso = build_config(
        GlassoConfig,
        sections.get("glasso"),
        lam=getattr(args, "lam", None),
        cv_folds=getattr(args, "cv_folds", None),
        cv_rule=getattr(args, "cv_rule", None),
        rng_seed=seed,
    )
    nonpara = build_config(
        NonparanormalConfig,
        sections.get("nonparanormal"),
        enabled=estimator == "nonparanormal",
    )
    bootstrap = build_config(
        BootstrapConfig,
        sections.get("bootstrap"),
        n_replicates=getattr(args, "bboot", None),
        rng_seed=seed,
    )
    return RunConfig(
        subcommand=args.subcommand,
        method=getattr(args, "method", None) or "inferred-block-bootstrap",
        estimator=estimator,
        eval_path=getattr(args, "eval_path", None),
        embeddings_path=getattr(args, "embeddings_path", None),
        extra_embeddings=tuple(getattr(args, "extra_embeddings", None) or ()),
        blocks_file=getattr(args, "blocks_file", None),
        out=args.out,
        report_format=args.report_format or "text",
        global_graph=getattr(args, "global_graph", False),
        seed=bootstrap.rng_seed,
        workers=args.workers,
        glasso=glasso,
        nonparanormal=nonpara,
        bootstrap=bootstrap,
    )


# ------------------ Pipeline Helpers ------------------
def load_all_embeddings(cfg: RunConfig) -> EmbeddingMatrix:
    """The --embeddings matrix with every --extra-embeddings file appended column-wise."""
    if cfg.embeddings_path is None:
        raise ValidationError("block inference requires --embeddings")
    embeddings = load_embeddings(cfg.embeddings_path)
    for path in cfg.extra_embeddings:
        embeddings = concat_embeddings(embeddings, load_embeddings(path))
    if cfg.extra_embeddings:
        log.info(f"Combined embedding dimension: {embeddings.dim}")
    return embeddings


def _inferred_partition(
    cfg: RunConfig,
    dataset: EvalDataset,
    nonpara: NonparanormalConfig | None = None,
    estimates: dict[str, PrecisionEstimate] | None = None,
) -> BlockPartition:
    return infer_blocks(
        dataset,
        load_all_embeddings(cfg),
        group_by_speaker(dataset),
        cfg.glasso,
        nonpara or cfg.nonparanormal,
        workers=resolve_workers(cfg.workers),
        global_graph=cfg.global_graph,
        estimates=estimates,
    )


def write_precision_dumps(estimates: dict[str, PrecisionEstimate], out_dir: Path) -> list[Path]:
    """One ``<speaker>.precision.tsv`` per estimated group."""
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for speaker, est in estimates.items():
        path = out_dir / f"{re.sub(r'[^A-Za-z0-9_.-]', '_', speaker)}.precision.tsv"
        write_precision_dump(est, path)
        paths.append(path)
    return paths


def partition_for(cfg: RunConfig, method: str, dataset: EvalDataset) -> BlockPartition:
    """Blocks each method resamples; a blocks file overrides the default source."""
    if method == "bootstrap":
        return singleton_blocks(len(dataset))
    if cfg.blocks_file is not None:
        return load_blocks_file(cfg.blocks_file, dataset)
    if method == "block-bootstrap":
        return speaker_blocks(group_by_speaker(dataset))
    return _inferred_partition(cfg, dataset)


def _method_result(
    cfg: RunConfig, dataset: EvalDataset, partition: BlockPartition, method: str, estimator: str
) -> MethodResult:
    intervals = run_analysis(
        dataset, partition, cfg.bootstrap, method, workers=resolve_workers(cfg.workers)
    )
    return MethodResult(
        method=method,
        estimator=estimator,
        k_blocks=len(partition),
        bboot=cfg.bootstrap.n_replicates,
        seed=cfg.seed,
        intervals=tuple(intervals),
    )


def _write_side_outputs(
    partition: BlockPartition,
    dataset: EvalDataset,
    blocks_out: Path | None,
    ratios_out: Path | None,
) -> None:
    if blocks_out is not None:
        write_blocks_file(partition, dataset, blocks_out)
        log.info(f"Wrote {len(partition)} blocks to {blocks_out}")
    if ratios_out is not None:
        write_output(render_ratio_tsv(partition), ratios_out)
        log.info(f"Wrote block/utterance ratios to {ratios_out}")


# ------------------ Subcommands ------------------
def cmd_score(args: argparse.Namespace, cfg: RunConfig) -> None:
    speakers = None
    if args.speakers is not None:
        speakers = {
            utt_id: speaker.strip() for utt_id, speaker in load_transcripts(args.speakers).items()
        }
    dataset = score_transcripts(
        load_transcripts(args.refs),
        load_transcripts(args.hyp_a),
        load_transcripts(args.hyp_b),
        speakers=speakers,
        name=args.refs.stem,
    )
    if cfg.out is None:
        raise ValidationError("score requires --out")
    write_eval_records(dataset, cfg.out)
    log.info(f"Wrote {len(dataset)} eval records to {cfg.out}")


def cmd_infer_blocks(args: argparse.Namespace, cfg: RunConfig) -> None:
    dataset = load_eval_records(cfg.eval_path)
    if cfg.out is None:
        raise ValidationError("infer-blocks requires --out for the blocks file")
    estimates: dict[str, PrecisionEstimate] = {}
    partition = _inferred_partition(cfg, dataset, estimates=estimates)
    ratios_out = args.ratios_out or cfg.out.with_suffix(".ratios.tsv")
    _write_side_outputs(partition, dataset, cfg.out, ratios_out)
    if args.precision_dump is not None:
        paths = write_precision_dumps(estimates, args.precision_dump)
        log.info(f"Wrote {len(paths)} precision edge lists to {args.precision_dump}")


def cmd_analyze(args: argparse.Namespace, cfg: RunConfig) -> None:
    dataset = load_eval_records(cfg.eval_path)
    partition = partition_for(cfg, cfg.method, dataset)
    if cfg.method == "inferred-block-bootstrap" and cfg.blocks_file is None:
        _write_side_outputs(partition, dataset, args.blocks_out, args.ratios_out)
    result = _method_result(cfg, dataset, partition, cfg.method, cfg.estimator)
    write_output(render_report([result], cfg.effective(), cfg.report_format), cfg.out)


def cmd_compare(args: argparse.Namespace, cfg: RunConfig) -> None:
    if cfg.embeddings_path is None:
        raise ValidationError("compare requires --embeddings")
    dataset = load_eval_records(cfg.eval_path)
    estimators = sorted(VALID_ESTIMATORS) if args.all_estimators else [cfg.estimator]

    results = []
    for method in METHOD_ORDER:
        if method != "inferred-block-bootstrap":
            partition = partition_for(cfg, method, dataset)
            results.append(_method_result(cfg, dataset, partition, method, cfg.estimator))
            continue
        for estimator in estimators:
            nonpara = NonparanormalConfig(
                enabled=estimator == "nonparanormal",
                winsorization_delta=cfg.nonparanormal.winsorization_delta,
            )
            partition = _inferred_partition(cfg, dataset, nonpara)
            results.append(_method_result(cfg, dataset, partition, method, estimator))

    effective = cfg.effective()
    if args.all_estimators:
        effective = [(k, "glasso,nonparanormal" if k == "estimator" else v) for k, v in effective]
    text = render_report(results, effective, cfg.report_format, with_width=True)
    write_output(text, cfg.out)


def cmd_simulate(args: argparse.Namespace, cfg: RunConfig) -> None:
    spec = SyntheticSpec(
        n_speakers=args.n_speakers,
        utts_per_speaker=args.utts_per_speaker,
        block_size=args.block_size,
        within_block_corr=args.within_block_corr,
        speaker_rate_corr=args.speaker_rate_corr,
        embedding_dim=args.dim,
        error_rate_mean=args.error_rate,
        words_per_utt=args.words_per_utt,
        marginal=args.marginal,
        rng_seed=cfg.seed,
        system_b_ratio=args.system_b_ratio,
    )
    log.info(f"Synthetic spec: {config_summary(spec)}")

    if args.consistency_grid:
        rows = consistency_experiment(
            spec,
            args.consistency_grid,
            args.reps,
            glasso_cfg=cfg.glasso,
            use_truth=args.use_truth,
            workers=resolve_workers(cfg.workers),
        )
        effective = [("subcommand", "simulate"), ("seed", str(cfg.seed))]
        effective += [("lambda", str(cfg.glasso.lam)), ("use_truth", str(args.use_truth).lower())]
        write_output(render_consistency_tsv(rows, effective), cfg.out)
        return

    if args.out_dir is None:
        raise ValidationError("simulate requires --out-dir (or --consistency-grid)")
    paths = write_synthetic(generate(spec), args.out_dir)
    for kind, path in paths.items():
        log.info(f"  {kind}: {path}")


COMMANDS = {
    "score": cmd_score,
    "infer-blocks": cmd_infer_blocks,
    "analyze": cmd_analyze,
    "compare": cmd_compare,
    "simulate": cmd_simulate,
}


# ------------------ Logging ------------------
def setup_logging(level: str) -> None:
    """Rich log output on stderr; stdout is reserved for reports."""
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format=LOG_FORMAT,
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


def main(argv: list[str] | None = None) -> int:
    """Entry point; returns 0 on success, 1 on any werblock, file or YAML error."""
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        cfg = run_config_from_args(args)
        log.debug(f"Effective configuration: {cfg.effective()}")
        COMMANDS[args.subcommand](args, cfg)
    except WerBlockError as e:
        log.error(str(e))
        return 1
    except OSError as e:
        log.error(f"I/O error: {e}")
        return 1
    except yaml.YAMLError as e:
        log.error(f"Malformed YAML config: {e}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
