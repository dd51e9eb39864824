"""Vanilla and blockwise bootstrap, percentile intervals, blockwise variance.

Replicate ``b`` draws from its own PCG64 stream seeded by
``SeedSequence(rng_seed, spawn_key=(b,))``, so replicate values are the same
however the replicates are split across workers.
"""

import logging
from collections.abc import Iterator
from dataclasses import dataclass, field

import numpy as np

from .blocks import BlockPartition, assert_partition_covers
from .config import BootstrapConfig
from .errors import InsufficientReplicatesError, ValidationError
from .eval_data import EvalDataset
from .parallel import ordered_map
from .wer import compute_wer_summary, replicate_statistics

log = logging.getLogger(__name__)

STATISTICS = ("wer_a", "wer_b", "delta_abs", "delta_rel")

MIN_REPLICATES = 100
RECOMMENDED_REPLICATES = 1000
UNDEFINED_WARN_FRACTION = 0.01
CHUNK_SIZE = 500


@dataclass(frozen=True)
class ConfidenceInterval:
    """Percentile interval around the full-dataset point estimate."""

    statistic: str
    point: float
    lower: float
    upper: float
    level: float
    replicates: int
    method: str = "bootstrap"
    warning: str | None = None

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def excludes_zero(self) -> bool:
        """True when the interval does not cover 0 (significant at ``level``)."""
        return self.lower > 0 or self.upper < 0


@dataclass(frozen=True)
class BlockVarianceEstimate:
    sigma_hat_sq: float
    k_n: int
    d_n: int


@dataclass(frozen=True, eq=False)
class ReplicateTable:
    """Replicate statistics, one row per replicate in replicate order.

    Columns follow ``STATISTICS``; NaN marks an undefined ``delta_rel``.
    """

    values: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return self.values.shape[0]

    def __iter__(self) -> Iterator[tuple[float, float, float, float]]:
        for row in self.values:
            yield tuple(float(x) for x in row)  # type: ignore[misc]

    def column(self, statistic: str) -> np.ndarray:
        if statistic not in STATISTICS:
            raise ValidationError(f"unknown statistic '{statistic}'")
        return self.values[:, STATISTICS.index(statistic)]


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    """Independent child stream for one replicate."""
    seq = np.random.SeedSequence(seed, spawn_key=(replicate,))
    return np.random.Generator(np.random.PCG64(seq))


def block_sums(dataset: EvalDataset, partition: BlockPartition) -> np.ndarray:
    """K x 3 integer sums of (m, e_a, e_b) per block."""
    sums = np.zeros((len(partition), 3), dtype=np.int64)
    for k, block in enumerate(partition.blocks):
        sums[k] = dataset.counts[list(block)].sum(axis=0)
    return sums


def _replicate_chunk(sums: np.ndarray, seed: int, start: int, stop: int) -> np.ndarray:
    k = sums.shape[0]
    totals = np.empty((stop - start, 3), dtype=np.int64)
    for row, b in enumerate(range(start, stop)):
        picks = replicate_rng(seed, b).integers(0, k, size=k)
        totals[row] = np.bincount(picks, minlength=k) @ sums
    return replicate_statistics(totals)


def bootstrap_replicates(
    dataset: EvalDataset,
    partition: BlockPartition,
    cfg: BootstrapConfig,
    workers: int | None = 1,
) -> ReplicateTable:
    """Resample K blocks with replacement ``cfg.n_replicates`` times.

    Singleton blocks give the vanilla bootstrap.
    """
    if len(partition) == 0:
        raise ValidationError("cannot bootstrap an empty block partition")
    assert_partition_covers(partition, len(dataset))

    sums = block_sums(dataset, partition)
    if sums[:, 0].sum() == 0:
        raise ValidationError("dataset has zero reference words")

    bounds = [
        (start, min(start + CHUNK_SIZE, cfg.n_replicates))
        for start in range(0, cfg.n_replicates, CHUNK_SIZE)
    ]
    chunks = ordered_map(
        lambda b: _replicate_chunk(sums, cfg.rng_seed, *b),
        bounds,
        workers,
    )
    values = np.concatenate(chunks, axis=0)
    values.setflags(write=False)
    log.info(
        f"Bootstrap finished: {cfg.n_replicates} replicates over {len(partition)} blocks "
        f"({partition.provenance})"
    )
    return ReplicateTable(values)


def percentile_ci(
    replicate_values: np.ndarray | list[float],
    level: float,
    point: float,
    statistic: str = "delta_rel",
    method: str = "bootstrap",
) -> ConfidenceInterval:
    """Linear-interpolation percentile interval; NaN replicates are dropped.

    Percentile p sits at fractional rank 1 + p(N - 1) of the sorted values.
    """
    values = np.asarray(replicate_values, dtype=np.float64)
    finite = values[np.isfinite(values)]
    if finite.size < 2:
        raise InsufficientReplicatesError(
            f"{statistic}: need at least 2 finite replicate values, got {finite.size}"
        )

    warning = None
    dropped = values.size - finite.size
    if dropped > UNDEFINED_WARN_FRACTION * values.size:
        warning = f"{dropped} of {values.size} replicates undefined and excluded"
        log.warning(f"{statistic}: {warning}")

    alpha = (1.0 - level) / 2.0
    lower, upper = np.percentile(finite, [100.0 * alpha, 100.0 * (1.0 - alpha)], method="linear")
    return ConfidenceInterval(
        statistic=statistic,
        point=float(point),
        lower=float(lower),
        upper=float(upper),
        level=level,
        replicates=int(finite.size),
        method=method,
        warning=warning,
    )


def block_variance(
    dataset: EvalDataset, partition: BlockPartition, system: str = "A"
) -> BlockVarianceEstimate:
    """Blockwise variance (d_n / K_n) * sum_k (block mean of Z - W_n)^2.

    Only defined when every utterance has the same reference length m.
    """
    assert_partition_covers(partition, len(dataset))
    counts = dataset.counts
    m = counts[:, 0]
    if np.any(m != m[0]):
        raise ValidationError("block_variance requires equal m for every record")
    if m[0] == 0:
        raise ValidationError("block_variance requires m > 0")

    z = counts[:, 1 if system == "A" else 2] / m[0]
    w_n = z.mean()
    k_n = len(partition)
    d_n = len(dataset) // k_n
    block_means = np.array([z[list(block)].mean() for block in partition.blocks])
    sigma = d_n / k_n * float(np.sum((block_means - w_n) ** 2))
    return BlockVarianceEstimate(sigma_hat_sq=sigma, k_n=k_n, d_n=d_n)


def run_analysis(
    dataset: EvalDataset,
    partition: BlockPartition,
    cfg: BootstrapConfig,
    method: str = "bootstrap",
    workers: int | None = 1,
) -> list[ConfidenceInterval]:
    """One bootstrap pass feeding percentile intervals for every statistic.

    ``delta_rel`` is omitted (with a warning) when system A makes no errors
    on the full dataset, since neither its point nor any replicate exists.
    """
    if cfg.n_replicates < MIN_REPLICATES:
        raise ValidationError(
            f"n_replicates must be >= {MIN_REPLICATES} for interval output, got {cfg.n_replicates}"
        )
    if cfg.n_replicates < RECOMMENDED_REPLICATES:
        log.warning(f"Only {cfg.n_replicates} bootstrap replicates; percentiles will be noisy")

    summary = compute_wer_summary(dataset)
    table = bootstrap_replicates(dataset, partition, cfg, workers)
    points = {
        "wer_a": summary.wer_a,
        "wer_b": summary.wer_b,
        "delta_abs": summary.delta_abs,
        "delta_rel": summary.delta_rel,
    }

    intervals = []
    for statistic in STATISTICS:
        point = points[statistic]
        if point is None:
            log.warning("delta_rel undefined: system A has no errors on the full dataset")
            continue
        intervals.append(
            percentile_ci(table.column(statistic), cfg.ci_level, point, statistic, method)
        )
    return intervals
