"""Confidence intervals for WER with inferred-block bootstrap."""

from .blocks import BlockPartition, infer_blocks, singleton_blocks, speaker_blocks
from .config import BootstrapConfig, GlassoConfig, NonparanormalConfig, RunConfig
from .errors import ValidationError, WerBlockError
from .eval_data import EmbeddingMatrix, EvalDataset, EvalRecord, load_eval_records
from .glasso import PrecisionEstimate, estimate_precision, solve_glasso
from .resampling import ConfidenceInterval, block_variance, bootstrap_replicates, run_analysis
from .wer import compute_wer, compute_wer_summary

__version__ = "0.1.0"

__all__ = [
    "BlockPartition",
    "BootstrapConfig",
    "ConfidenceInterval",
    "EmbeddingMatrix",
    "EvalDataset",
    "EvalRecord",
    "GlassoConfig",
    "NonparanormalConfig",
    "PrecisionEstimate",
    "RunConfig",
    "ValidationError",
    "WerBlockError",
    "block_variance",
    "bootstrap_replicates",
    "compute_wer",
    "compute_wer_summary",
    "estimate_precision",
    "infer_blocks",
    "load_eval_records",
    "run_analysis",
    "singleton_blocks",
    "solve_glasso",
    "speaker_blocks",
]
