"""Synthetic datasets with known block structure and Monte-Carlo checks.

Each true block shares a latent embedding factor and a beta-distributed error
rate, so both the embedding correlation and the error-count correlation
inside a block equal ``within_block_corr`` while blocks stay independent.
A positive ``speaker_rate_corr`` draws each speaker's mean rate first, so
error counts also correlate across blocks of one speaker while the
embeddings still only show the blocks.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .blocks import BlockPartition, infer_blocks, speaker_blocks, write_blocks_file
from .config import MAX_SEED, VALID_MARGINALS, GlassoConfig, NonparanormalConfig
from .errors import ValidationError
from .eval_data import (
    EmbeddingMatrix,
    EvalDataset,
    EvalRecord,
    SpeakerPartition,
    group_by_speaker,
    write_embeddings,
    write_eval_records,
)
from .parallel import ordered_map
from .resampling import block_variance

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SyntheticSpec:
    """Generator parameters; every speaker holds ``utts_per_speaker`` utterances."""

    n_speakers: int = 4
    utts_per_speaker: int = 24
    block_size: int = 3
    within_block_corr: float = 0.7
    speaker_rate_corr: float = 0.0
    embedding_dim: int = 2000
    error_rate_mean: float = 0.1
    words_per_utt: int = 20
    marginal: str = "gaussian"
    rng_seed: int = 0
    system_b_ratio: float = 0.85

    def __post_init__(self) -> None:
        is_valid, errors = validate_synthetic_spec(self)
        if not is_valid:
            raise ValidationError("Invalid synthetic spec", errors)

    @property
    def n(self) -> int:
        return self.n_speakers * self.utts_per_speaker

    @property
    def true_block_size(self) -> int:
        """Independent rows form singleton blocks."""
        return self.block_size if self.within_block_corr > 0 else 1

    @property
    def concentration(self) -> float | None:
        """Beta concentration a + b giving intra-block error correlation rho."""
        rho = self.within_block_corr
        if rho == 0:
            return None
        return self.words_per_utt * (1.0 - rho) / rho


def validate_synthetic_spec(spec: SyntheticSpec) -> tuple[bool, list[str]]:
    """Validate generator parameters."""
    errors = []
    for name in ("n_speakers", "utts_per_speaker", "block_size", "embedding_dim", "words_per_utt"):
        value = getattr(spec, name)
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            errors.append(f"{name} must be a positive integer, got {value!r}")
    if not errors and spec.utts_per_speaker % spec.block_size:
        errors.append(
            f"block_size {spec.block_size} must divide utts_per_speaker {spec.utts_per_speaker}"
        )
    if not 0 <= spec.within_block_corr < 1:
        errors.append(f"within_block_corr must be in [0, 1), got {spec.within_block_corr}")
    if not 0 <= spec.speaker_rate_corr < 1:
        errors.append(f"speaker_rate_corr must be in [0, 1), got {spec.speaker_rate_corr}")
    if not 0 < spec.error_rate_mean < 1:
        errors.append(f"error_rate_mean must be in (0, 1), got {spec.error_rate_mean}")
    if not 0 < spec.system_b_ratio <= 1:
        errors.append(f"system_b_ratio must be in (0, 1], got {spec.system_b_ratio}")
    if spec.marginal not in VALID_MARGINALS:
        errors.append(
            f"Invalid marginal '{spec.marginal}'. "
            f"Must be one of: {', '.join(sorted(VALID_MARGINALS))}"
        )
    if not isinstance(spec.rng_seed, int) or not 0 <= spec.rng_seed <= MAX_SEED:
        errors.append(f"rng_seed must be an unsigned 64-bit integer, got {spec.rng_seed!r}")
    return len(errors) == 0, errors


@dataclass(frozen=True, eq=False)
class SyntheticData:
    spec: SyntheticSpec
    dataset: EvalDataset
    embeddings: EmbeddingMatrix = field(repr=False)
    speakers: SpeakerPartition = field(repr=False)
    truth: BlockPartition = field(repr=False)


def _block_rates(spec: SyntheticSpec, rng: np.random.Generator, n_blocks: int) -> np.ndarray:
    mu = spec.error_rate_mean
    means = np.full(n_blocks, mu)
    if spec.speaker_rate_corr > 0:
        # speaker means vary with variance speaker_rate_corr * mu (1 - mu)
        kappa_s = (1.0 - spec.speaker_rate_corr) / spec.speaker_rate_corr
        speaker_means = rng.beta(mu * kappa_s, (1.0 - mu) * kappa_s, size=spec.n_speakers)
        speaker_means = np.clip(speaker_means, 1e-9, 1.0 - 1e-9)
        means = np.repeat(speaker_means, spec.utts_per_speaker // spec.true_block_size)
    kappa = spec.concentration
    if kappa is None:
        return means
    return rng.beta(means * kappa, (1.0 - means) * kappa)


def generate(spec: SyntheticSpec) -> SyntheticData:
    """Draw one dataset; a fixed ``rng_seed`` gives identical output."""
    emb_rng, err_rng = (
        np.random.Generator(np.random.PCG64(s))
        for s in np.random.SeedSequence(spec.rng_seed).spawn(2)
    )
    d = spec.true_block_size
    n, dim, rho = spec.n, spec.embedding_dim, spec.within_block_corr
    n_blocks = n // d

    factors = emb_rng.standard_normal((n_blocks, dim))
    noise = emb_rng.standard_normal((n, dim))
    block_of = np.repeat(np.arange(n_blocks), d)
    values = math.sqrt(rho) * factors[block_of] + math.sqrt(1.0 - rho) * noise
    if spec.marginal == "cubed_gaussian":
        values = values**3

    rates = _block_rates(spec, err_rng, n_blocks)[block_of]
    m = spec.words_per_utt
    e_a = err_rng.binomial(m, rates)
    e_b = err_rng.binomial(m, rates * spec.system_b_ratio)

    records = []
    for i in range(n):
        speaker = f"spk{i // spec.utts_per_speaker:03d}"
        utt_id = f"{speaker}-{i % spec.utts_per_speaker:04d}"
        records.append(EvalRecord(utt_id, speaker, m, int(e_a[i]), int(e_b[i])))
    dataset = EvalDataset(tuple(records), f"synthetic-{spec.rng_seed}")

    embeddings = EmbeddingMatrix(tuple(dataset.utt_ids), values)
    truth = BlockPartition(
        tuple(tuple(range(k * d, (k + 1) * d)) for k in range(n_blocks)),
        provenance="truth",
    )
    log.debug(f"Generated {n} utterances in {n_blocks} true blocks (seed {spec.rng_seed})")
    return SyntheticData(spec, dataset, embeddings, group_by_speaker(dataset), truth)


def analytic_sigma_sq(spec: SyntheticSpec, system: str = "A") -> float:
    """Limit of n Var(W_n) for the generator.

    Var(Z) + (d - 1) Cov(Z_i, Z_j) within a block, plus (u - d) times the
    covariance of two blocks of one speaker (u utterances per speaker).
    """
    ratio = 1.0 if system == "A" else spec.system_b_ratio
    mu, m = spec.error_rate_mean, spec.words_per_utt
    var_speaker = spec.speaker_rate_corr * mu * (1.0 - mu)
    kappa = spec.concentration
    var_p = var_speaker
    if kappa is not None:
        var_p += (mu * (1.0 - mu) - var_speaker) / (kappa + 1.0)
    mean_rate = ratio * mu
    var_rate = ratio**2 * var_p
    var_z = (mean_rate - (var_rate + mean_rate**2)) / m + var_rate
    d, u = spec.true_block_size, spec.utts_per_speaker
    return var_z + (d - 1) * var_rate + (u - d) * ratio**2 * var_speaker


@dataclass(frozen=True)
class ConsistencyRow:
    n: int
    mse: float
    mean_sigma_hat_sq: float
    sigma_sq: float
    reps: int

    @property
    def relative_rmse(self) -> float:
        return math.sqrt(self.mse) / self.sigma_sq


def _rep_seed(seed: int, n: int, rep: int) -> int:
    state = np.random.SeedSequence(seed, spawn_key=(n, rep)).generate_state(1, np.uint64)
    return int(state[0])


def consistency_experiment(
    template: SyntheticSpec,
    n_grid: list[int],
    reps: int,
    glasso_cfg: GlassoConfig | None = None,
    nonpara: NonparanormalConfig | None = None,
    use_truth: bool = False,
    workers: int | None = 1,
) -> list[ConsistencyRow]:
    """Mean squared error of the blockwise variance estimate against the analytic value.

    Each n in ``n_grid`` must be a multiple of ``template.utts_per_speaker``;
    repetition ``rep`` at size ``n`` uses its own seed derived from
    ``(template.rng_seed, n, rep)``.
    """
    if reps < 1:
        raise ValidationError(f"reps must be positive, got {reps}")
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ValidationError(f"n_grid must be strictly increasing, got {n_grid}")
    bad = [n for n in n_grid if n % template.utts_per_speaker]
    if bad:
        raise ValidationError(
            f"every n must be a multiple of utts_per_speaker={template.utts_per_speaker}", bad
        )
    glasso_cfg = glasso_cfg or GlassoConfig()
    nonpara = nonpara or NonparanormalConfig(enabled=template.marginal == "cubed_gaussian")
    sigma_sq = analytic_sigma_sq(template)

    rows = []
    for n in n_grid:
        spec_n = replace(template, n_speakers=n // template.utts_per_speaker)

        def one_rep(rep: int, spec_n: SyntheticSpec = spec_n, n: int = n) -> float:
            data = generate(replace(spec_n, rng_seed=_rep_seed(template.rng_seed, n, rep)))
            if use_truth:
                blocks = data.truth
            else:
                blocks = infer_blocks(
                    data.dataset, data.embeddings, data.speakers, glasso_cfg, nonpara
                )
            return block_variance(data.dataset, blocks).sigma_hat_sq

        estimates = np.array(ordered_map(one_rep, range(reps), workers))
        row = ConsistencyRow(
            n=n,
            mse=float(np.mean((estimates - sigma_sq) ** 2)),
            mean_sigma_hat_sq=float(estimates.mean()),
            sigma_sq=sigma_sq,
            reps=reps,
        )
        log.info(f"n={n}: mse={row.mse:.3e}, relative rmse={row.relative_rmse:.3f}")
        rows.append(row)
    return rows


def write_synthetic(data: SyntheticData, out_dir: str | Path) -> dict[str, Path]:
    """Write the dataset in the regular input formats plus reference block files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "eval": out / "eval.tsv",
        "embeddings": out / "embeddings.bin",
        "speaker_blocks": out / "speaker_blocks.tsv",
        "true_blocks": out / "true_blocks.tsv",
    }
    write_eval_records(data.dataset, paths["eval"])
    write_embeddings(data.embeddings, paths["embeddings"], format="raw-binary")
    write_blocks_file(speaker_blocks(data.speakers), data.dataset, paths["speaker_blocks"])
    write_blocks_file(data.truth, data.dataset, paths["true_blocks"])
    log.info(f"Wrote synthetic dataset ({len(data.dataset)} utterances) to {out}")
    return paths
