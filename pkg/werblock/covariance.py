"""Empirical covariance across utterances and the nonparanormal transform."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri
from scipy.stats import rankdata

from .config import AUTO, NonparanormalConfig
from .errors import DegenerateVarianceError, ValidationError
from .eval_data import EmbeddingMatrix

log = logging.getLogger(__name__)

SOURCES = ("gaussian", "nonparanormal")


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    """Symmetric n_g x n_g matrix over utterances."""

    values: np.ndarray = field(repr=False)
    source: str = "gaussian"

    @property
    def n(self) -> int:
        return self.values.shape[0]


def _symmetric(values: np.ndarray) -> np.ndarray:
    """Mirror the upper triangle so the result is exactly symmetric."""
    upper = np.triu(values)
    out = upper + np.triu(values, 1).T
    out.setflags(write=False)
    return out


def empirical_covariance(emb: EmbeddingMatrix, source: str = "gaussian") -> CovarianceMatrix:
    """Covariance between rows over the L embedding coordinates (divisor L - 1)."""
    if emb.dim < 2:
        raise ValidationError(f"embedding dimension L must be >= 2, got {emb.dim}")
    centered = emb.values - emb.values.mean(axis=1, keepdims=True)
    values = centered @ centered.T / (emb.dim - 1)
    return CovarianceMatrix(_symmetric(values), source)


def winsorization_delta(dim: int) -> float:
    """Truncation level 1 / (4 L^(1/4) sqrt(pi log L)) for L observations."""
    if dim < 2:
        raise ValidationError(f"embedding dimension L must be >= 2, got {dim}")
    delta = 1.0 / (4.0 * dim**0.25 * math.sqrt(math.pi * math.log(dim)))
    # tiny L would push the formula past one half
    return min(delta, 0.49)


def apply_nonparanormal(emb: EmbeddingMatrix, cfg: NonparanormalConfig) -> EmbeddingMatrix:
    """Replace each row with Winsorized normal scores, then standardize the row."""
    dim = emb.dim
    if dim < 2:
        raise ValidationError(f"embedding dimension L must be >= 2, got {dim}")
    delta = winsorization_delta(dim) if cfg.winsorization_delta == AUTO else cfg.winsorization_delta

    for i, row in enumerate(emb.values):
        if np.all(row == row[0]):
            raise ValidationError(
                f"row {i} (utt_id '{emb.utt_ids[i]}') has all-equal values; correlation undefined"
            )

    ranks = rankdata(emb.values, method="average", axis=1)
    cdf = np.clip(ranks / (dim + 1), delta, 1.0 - delta)
    scores = ndtri(cdf)
    scores -= scores.mean(axis=1, keepdims=True)
    spread = scores.std(axis=1, ddof=1, keepdims=True)
    zero = np.flatnonzero(spread[:, 0] == 0)
    if zero.size:
        # every rank fell inside one truncation tail
        raise DegenerateVarianceError(int(zero[0]), "zero normal-score spread")
    log.debug(f"Nonparanormal transform on {emb.n} rows, L={dim}, delta={delta:.4g}")
    return emb.with_values(scores / spread)


def to_correlation(cov: CovarianceMatrix) -> CovarianceMatrix:
    """Normalize to unit diagonal; entries are clipped into [-1, 1]."""
    diag = np.diag(cov.values)
    zero = np.flatnonzero(diag <= 0)
    if zero.size:
        raise DegenerateVarianceError(int(zero[0]))
    scale = np.sqrt(diag)
    corr = np.clip(cov.values / np.outer(scale, scale), -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return CovarianceMatrix(_symmetric(corr), cov.source)
