"""Unit tests for bootstrap replicates, percentile intervals and blockwise variance."""

import numpy as np
import pytest

from tests.helpers.builders import SyntheticFactory, make_dataset, uniform_dataset
from tests.helpers.oracles import percentile
from werblock.blocks import BlockPartition, singleton_blocks, speaker_blocks
from werblock.config import BootstrapConfig
from werblock.errors import InsufficientReplicatesError, ValidationError
from werblock.eval_data import EvalDataset, group_by_speaker
from werblock.resampling import (
    STATISTICS,
    ConfidenceInterval,
    block_sums,
    block_variance,
    bootstrap_replicates,
    percentile_ci,
    replicate_rng,
    run_analysis,
)


class TestPercentileCI:
    """Test linear-interpolation percentile intervals."""

    def test_one_to_hundred(self) -> None:
        """Test 95% interval of 1..100."""
        ci = percentile_ci(list(range(1, 101)), 0.95, point=50.5)
        assert ci.lower == pytest.approx(3.475)
        assert ci.upper == pytest.approx(97.525)
        assert ci.replicates == 100

    def test_two_values(self) -> None:
        """Test 95% interval of [0, 10]."""
        ci = percentile_ci([0.0, 10.0], 0.95, point=5.0)
        assert ci.lower == pytest.approx(0.25)
        assert ci.upper == pytest.approx(9.75)

    def test_matches_oracle(self, rng: np.random.Generator) -> None:
        """Test random samples against the fractional-rank oracle."""
        for level in (0.5, 0.9, 0.95, 0.99):
            values = rng.standard_normal(int(rng.integers(2, 300))).tolist()
            ci = percentile_ci(values, level, point=0.0)
            alpha = (1 - level) / 2
            assert ci.lower == pytest.approx(percentile(values, alpha))
            assert ci.upper == pytest.approx(percentile(values, 1 - alpha))

    def test_constant_values(self) -> None:
        """Test identical replicates give a zero-width interval."""
        ci = percentile_ci([0.2] * 50, 0.95, point=0.2)
        assert ci.lower == ci.upper == 0.2
        assert ci.width == 0.0

    def test_nan_dropped_with_warning(self) -> None:
        """Test undefined replicates are excluded and reported."""
        values = [float(v) for v in range(1, 101)] + [float("nan")] * 5
        ci = percentile_ci(values, 0.95, point=50.5)
        assert ci.replicates == 100
        assert ci.lower == pytest.approx(3.475)
        assert ci.warning is not None and "5 of 105" in ci.warning

    def test_small_nan_share_not_reported(self) -> None:
        """Test at most 1% undefined replicates raise no warning."""
        values = [float(v) for v in range(200)] + [float("nan")]
        assert percentile_ci(values, 0.95, point=0.0).warning is None

    def test_too_few_finite_values(self) -> None:
        """Test fewer than two finite replicates is an error."""
        with pytest.raises(InsufficientReplicatesError):
            percentile_ci([1.0, float("nan"), float("nan")], 0.95, point=1.0)

    def test_excludes_zero(self) -> None:
        """Test significance flag."""
        assert ConfidenceInterval("delta_abs", -0.1, -0.2, -0.01, 0.95, 100).excludes_zero
        assert not ConfidenceInterval("delta_abs", 0.0, -0.2, 0.1, 0.95, 100).excludes_zero


class TestBootstrapReplicates:
    """Test resampling of blocks with replacement."""

    def test_same_seed_same_values(self, toy_dataset: EvalDataset) -> None:
        """Test two runs with one seed are identical."""
        cfg = BootstrapConfig(n_replicates=300, rng_seed=42)
        a = bootstrap_replicates(toy_dataset, singleton_blocks(6), cfg)
        b = bootstrap_replicates(toy_dataset, singleton_blocks(6), cfg)
        np.testing.assert_array_equal(a.values, b.values)

    def test_workers_do_not_change_values(self, toy_dataset: EvalDataset) -> None:
        """Test chunked parallel replicates match the serial run bit for bit."""
        cfg = BootstrapConfig(n_replicates=1700, rng_seed=7)
        serial = bootstrap_replicates(toy_dataset, singleton_blocks(6), cfg, workers=1)
        threaded = bootstrap_replicates(toy_dataset, singleton_blocks(6), cfg, workers=4)
        np.testing.assert_array_equal(serial.values, threaded.values)

    def test_prefix_stable(self, toy_dataset: EvalDataset) -> None:
        """Test replicate b does not depend on how many replicates are drawn."""
        short = bootstrap_replicates(toy_dataset, singleton_blocks(6), BootstrapConfig(200, 3))
        long = bootstrap_replicates(toy_dataset, singleton_blocks(6), BootstrapConfig(900, 3))
        np.testing.assert_array_equal(short.values, long.values[:200])

    def test_different_seeds_differ(self, toy_dataset: EvalDataset) -> None:
        """Test a new seed draws new replicates."""
        a = bootstrap_replicates(toy_dataset, singleton_blocks(6), BootstrapConfig(200, 1))
        b = bootstrap_replicates(toy_dataset, singleton_blocks(6), BootstrapConfig(200, 2))
        assert not np.array_equal(a.values, b.values)

    def test_replicate_uses_own_stream(self, toy_dataset: EvalDataset) -> None:
        """Test replicate b is the bincount of K draws from its child stream."""
        partition = singleton_blocks(6)
        table = bootstrap_replicates(toy_dataset, partition, BootstrapConfig(100, 9))
        picks = replicate_rng(9, 37).integers(0, 6, size=6)
        totals = np.bincount(picks, minlength=6) @ block_sums(toy_dataset, partition)
        assert table.values[37, 0] == pytest.approx(totals[1] / totals[0])

    def test_single_block_is_degenerate(self, toy_dataset: EvalDataset) -> None:
        """Test one block reproduces the point estimate in every replicate."""
        partition = BlockPartition((tuple(range(6)),), provenance="file")
        table = bootstrap_replicates(toy_dataset, partition, BootstrapConfig(150, 0))
        point = 8 / 51
        np.testing.assert_allclose(table.column("wer_a"), point)

    def test_identical_records(self) -> None:
        """Test identical records give zero variance."""
        ds = uniform_dataset(8, 10, [2] * 8, [1] * 8)
        table = bootstrap_replicates(ds, singleton_blocks(8), BootstrapConfig(200, 0))
        assert np.all(table.column("wer_a") == 0.2)
        assert np.all(table.column("delta_rel") == -0.5)

    def test_two_block_enumeration(self) -> None:
        """Test W_A over two singletons takes 0, 1/2, 1 with weights 1/4, 1/2, 1/4."""
        ds = uniform_dataset(2, 1, [0, 1])
        table = bootstrap_replicates(ds, singleton_blocks(2), BootstrapConfig(10_000, 0))
        values = table.column("wer_a")
        for target, expected in ((0.0, 0.25), (0.5, 0.5), (1.0, 0.25)):
            assert np.mean(values == target) == pytest.approx(expected, abs=0.02)

    def test_count_scaling_invariance(self) -> None:
        """Test multiplying every count by c leaves every replicate unchanged."""
        rows = [("a", "s", 7, 2, 1), ("b", "s", 3, 0, 1), ("c", "t", 9, 4, 4)]
        scaled = [(u, s, 5 * m, 5 * a, 5 * b) for u, s, m, a, b in rows]
        cfg = BootstrapConfig(300, 11)
        a = bootstrap_replicates(make_dataset(rows), singleton_blocks(3), cfg)
        b = bootstrap_replicates(make_dataset(scaled), singleton_blocks(3), cfg)
        np.testing.assert_array_equal(a.values, b.values)

    def test_undefined_relative_replicates(self) -> None:
        """Test replicates drawing only error-free A blocks give NaN delta_rel."""
        ds = uniform_dataset(2, 4, [0, 1], [1, 1])
        table = bootstrap_replicates(ds, singleton_blocks(2), BootstrapConfig(400, 0))
        nan = np.isnan(table.column("delta_rel"))
        assert nan.any()
        np.testing.assert_array_equal(nan, table.column("wer_a") == 0)

    def test_partition_must_cover(self, toy_dataset: EvalDataset) -> None:
        """Test a partition missing an utterance is rejected."""
        with pytest.raises(ValidationError):
            bootstrap_replicates(toy_dataset, singleton_blocks(5), BootstrapConfig(100, 0))

    def test_values_read_only(self, toy_dataset: EvalDataset) -> None:
        """Test the replicate table cannot be modified."""
        table = bootstrap_replicates(toy_dataset, singleton_blocks(6), BootstrapConfig(100, 0))
        with pytest.raises(ValueError):
            table.values[0, 0] = 1.0

    def test_iterates_rows(self, toy_dataset: EvalDataset) -> None:
        """Test the table yields one 4-tuple per replicate."""
        table = bootstrap_replicates(toy_dataset, singleton_blocks(6), BootstrapConfig(120, 0))
        rows = list(table)
        assert len(rows) == len(table) == 120
        assert all(len(row) == len(STATISTICS) for row in rows)


class TestBlockVariance:
    """Test the blockwise variance estimator."""

    def test_hand_example(self) -> None:
        """Test four utterances in two blocks with Z = 0, 0, 1, 1."""
        ds = uniform_dataset(4, 1, [0, 0, 1, 1])
        est = block_variance(ds, BlockPartition(((0, 1), (2, 3))))
        assert est.sigma_hat_sq == pytest.approx(0.5)
        assert (est.k_n, est.d_n) == (2, 2)

    def test_singletons_equal_plain_variance(self, rng: np.random.Generator) -> None:
        """Test singleton blocks reduce to the population variance of Z."""
        e_a = rng.integers(0, 11, size=40).tolist()
        ds = uniform_dataset(40, 10, e_a)
        z = np.array(e_a) / 10
        est = block_variance(ds, singleton_blocks(40))
        assert est.sigma_hat_sq == pytest.approx(z.var())

    def test_system_b(self) -> None:
        """Test the estimate can target system B."""
        ds = uniform_dataset(4, 1, [0, 0, 0, 0], [0, 0, 1, 1])
        est = block_variance(ds, BlockPartition(((0, 1), (2, 3))), system="B")
        assert est.sigma_hat_sq == pytest.approx(0.5)

    def test_unequal_lengths_rejected(self) -> None:
        """Test differing reference lengths are rejected."""
        ds = make_dataset([("a", "s", 3, 1, 1), ("b", "s", 4, 1, 1)])
        with pytest.raises(ValidationError):
            block_variance(ds, singleton_blocks(2))


class TestRunAnalysis:
    """Test the full interval pass over one partition."""

    def test_intervals_bracket_points(self, toy_dataset: EvalDataset) -> None:
        """Test every statistic's interval contains its point estimate."""
        cis = run_analysis(toy_dataset, singleton_blocks(6), BootstrapConfig(2000, 5))
        assert [ci.statistic for ci in cis] == list(STATISTICS)
        for ci in cis:
            assert ci.lower <= ci.point <= ci.upper

    def test_too_few_replicates(self, toy_dataset: EvalDataset) -> None:
        """Test fewer than 100 replicates is refused."""
        with pytest.raises(ValidationError):
            run_analysis(toy_dataset, singleton_blocks(6), BootstrapConfig(99, 0))

    def test_few_replicates_warns(
        self, toy_dataset: EvalDataset, caplog: pytest.LogCaptureFixture
    ) -> None:
        """Test fewer than 1000 replicates logs a warning."""
        run_analysis(toy_dataset, singleton_blocks(6), BootstrapConfig(150, 0))
        assert "replicates" in caplog.text

    def test_relative_skipped_when_undefined(self) -> None:
        """Test delta_rel is omitted when system A makes no errors."""
        ds = uniform_dataset(5, 10, [0] * 5, [1, 0, 2, 0, 1])
        cis = run_analysis(ds, singleton_blocks(5), BootstrapConfig(200, 0))
        assert [ci.statistic for ci in cis] == ["wer_a", "wer_b", "delta_abs"]

    def test_method_tag(self, toy_dataset: EvalDataset) -> None:
        """Test intervals carry the method name."""
        partition = speaker_blocks(group_by_speaker(toy_dataset))
        cis = run_analysis(
            toy_dataset, partition, BootstrapConfig(200, 0), method="block-bootstrap"
        )
        assert {ci.method for ci in cis} == {"block-bootstrap"}

    def test_speaker_blocks_wider_under_dependence(self, synthetic: SyntheticFactory) -> None:
        """Test speaker blocks widen the W_A interval on correlated data."""
        wider = 0
        for seed in range(100):
            data = synthetic(
                n_speakers=8,
                utts_per_speaker=12,
                block_size=12,
                within_block_corr=0.8,
                embedding_dim=2,
                rng_seed=seed,
            )
            cfg = BootstrapConfig(200, seed)
            vanilla = run_analysis(data.dataset, singleton_blocks(96), cfg)[0]
            block = run_analysis(data.dataset, speaker_blocks(data.speakers), cfg)[0]
            wider += block.width > vanilla.width
        assert wider >= 95
