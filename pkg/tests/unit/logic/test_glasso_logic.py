"""Unit tests for the graphical lasso solver and penalty selection."""

import numpy as np
import pytest

from tests.helpers.assertions import assert_kkt
from tests.helpers.oracles import glasso_proximal_gradient, random_correlation
from werblock import glasso
from werblock.config import GlassoConfig
from werblock.covariance import CovarianceMatrix
from werblock.errors import ValidationError
from werblock.eval_data import EmbeddingMatrix
from werblock.glasso import (
    PrecisionEstimate,
    estimate_precision,
    lambda_grid,
    lambda_max,
    penalized_objective,
    refit_on_support,
    screen_components,
    select_from_scores,
    select_lambda_cv,
    solve_glasso,
)


def _tight(lam: float, **overrides: object) -> GlassoConfig:
    values: dict[str, object] = {
        "lam": lam,
        "convergence_tol": 1e-10,
        "inner_tol": 1e-12,
        "max_outer_iters": 2000,
        "max_inner_iters": 10_000,
    }
    values.update(overrides)
    return GlassoConfig(**values)  # type: ignore[arg-type]


def _corr(values: np.ndarray | list[list[float]]) -> CovarianceMatrix:
    return CovarianceMatrix(np.asarray(values, dtype=float))


def _emb(values: np.ndarray) -> EmbeddingMatrix:
    return EmbeddingMatrix(tuple(f"u{i}" for i in range(values.shape[0])), values)


EXAMPLE_3X3 = [[1.0, 0.6, 0.0], [0.6, 1.0, 0.3], [0.0, 0.3, 1.0]]


class TestUnpenalized:
    """Test lambda = 0 returns the plain inverse."""

    def test_two_by_two(self) -> None:
        """Test the inverse of [[1, .5], [.5, 1]]."""
        est = solve_glasso(_corr([[1.0, 0.5], [0.5, 1.0]]), GlassoConfig(lam=0.0))
        np.testing.assert_allclose(est.theta, [[4 / 3, -2 / 3], [-2 / 3, 4 / 3]], atol=1e-9)
        assert est.converged

    def test_matches_inverse(self, rng: np.random.Generator) -> None:
        """Test 50 random well-conditioned inputs against numpy's inverse."""
        for _ in range(50):
            corr = random_correlation(rng, int(rng.integers(2, 9)))
            est = solve_glasso(_corr(corr), GlassoConfig(lam=0.0))
            np.testing.assert_allclose(est.theta, np.linalg.inv(corr), atol=1e-6)

    def test_singular_rejected(self) -> None:
        """Test lambda = 0 on a singular matrix is a validation error."""
        with pytest.raises(ValidationError):
            solve_glasso(_corr([[1.0, 1.0], [1.0, 1.0]]), GlassoConfig(lam=0.0))


class TestLargePenalty:
    """Test penalties at or above lambda_max."""

    @pytest.mark.parametrize("screening", [True, False])
    def test_diagonal_solution(self, rng: np.random.Generator, screening: bool) -> None:
        """Test lambda = lambda_max zeroes every off-diagonal entry."""
        corr = random_correlation(rng, 6)
        lam = lambda_max(_corr(corr))
        est = solve_glasso(_corr(corr), GlassoConfig(lam=lam, screening=screening))
        assert est.edges() == []
        np.testing.assert_allclose(np.diag(est.theta), 1.0 / (1.0 + lam))

    def test_lambda_max_is_largest_offdiagonal(self) -> None:
        """Test lambda_max reads the largest absolute off-diagonal entry."""
        assert lambda_max(_corr([[1.0, -0.7, 0.2], [-0.7, 1.0, 0.1], [0.2, 0.1, 1.0]])) == 0.7
        assert lambda_max(_corr([[1.0]])) == 0.0


class TestAgainstOracle:
    """Test coordinate descent against an independent proximal-gradient solver."""

    def test_three_by_three_example(self) -> None:
        """Test the 3x3 example at lambda = 0.1."""
        corr = np.array(EXAMPLE_3X3)
        est = solve_glasso(_corr(corr), _tight(0.1))
        np.testing.assert_allclose(est.theta, glasso_proximal_gradient(corr, 0.1), atol=1e-5)

    def test_small_random_instances(self, rng: np.random.Generator) -> None:
        """Test 20 random inputs with n <= 5."""
        for _ in range(20):
            corr = random_correlation(rng, int(rng.integers(2, 6)))
            lam = float(rng.uniform(0.1, 0.9)) * lambda_max(_corr(corr))
            est = solve_glasso(_corr(corr), _tight(lam))
            expected = glasso_proximal_gradient(corr, lam)
            np.testing.assert_allclose(est.theta, expected, atol=1e-5)


class TestOptimality:
    """Test stationarity and structural properties of the solution."""

    def test_kkt_small(self, rng: np.random.Generator) -> None:
        """Test KKT conditions on 15 random inputs with n <= 6."""
        for _ in range(15):
            corr = random_correlation(rng, int(rng.integers(2, 7)))
            lam = float(rng.uniform(0.02, 1.0)) * lambda_max(_corr(corr))
            est = solve_glasso(_corr(corr), _tight(lam))
            assert est.converged
            assert_kkt(corr, est)

    @pytest.mark.slow
    @pytest.mark.timeout(900)
    def test_kkt_random(self, rng: np.random.Generator) -> None:
        """Test KKT conditions on 100 random inputs with n <= 15."""
        for _ in range(100):
            corr = random_correlation(rng, int(rng.integers(2, 16)))
            lam = float(rng.uniform(0.02, 1.0)) * lambda_max(_corr(corr))
            est = solve_glasso(_corr(corr), _tight(lam))
            assert est.converged
            assert_kkt(corr, est)

    def test_theta_inverts_w(self, rng: np.random.Generator) -> None:
        """Test theta @ W is the identity at convergence."""
        corr = random_correlation(rng, 7)
        est = solve_glasso(_corr(corr), _tight(0.3 * lambda_max(_corr(corr))))
        np.testing.assert_allclose(est.theta @ est.w, np.eye(7), atol=1e-6)

    def test_symmetric_positive_definite(self, rng: np.random.Generator) -> None:
        """Test theta is exactly symmetric and positive definite."""
        corr = random_correlation(rng, 8)
        est = solve_glasso(_corr(corr), GlassoConfig(lam=0.2 * lambda_max(_corr(corr))))
        np.testing.assert_array_equal(est.theta, est.theta.T)
        assert np.linalg.eigvalsh(est.theta).min() > 0

    def test_dual_gap_small(self, rng: np.random.Generator) -> None:
        """Test the reported duality gap vanishes at tight tolerance."""
        corr = random_correlation(rng, 5)
        est = solve_glasso(_corr(corr), _tight(0.4 * lambda_max(_corr(corr))))
        assert abs(est.dual_gap) < 1e-6

    def test_objective_trace_non_decreasing(self, rng: np.random.Generator) -> None:
        """Test the penalized log-likelihood never drops between sweeps."""
        for _ in range(20):
            corr = random_correlation(rng, 10)
            est = solve_glasso(
                _corr(corr),
                _tight(0.1 * lambda_max(_corr(corr)), screening=False),
                record_objective=True,
            )
            trace = np.array(est.objective_trace)
            assert len(trace) == est.iterations
            assert np.all(np.diff(trace) >= -1e-10)

    def test_objective_trace_ends_at_solution(self, rng: np.random.Generator) -> None:
        """Test the last recorded value is the objective of the returned theta."""
        corr = random_correlation(rng, 8)
        lam = 0.2 * lambda_max(_corr(corr))
        est = solve_glasso(_corr(corr), _tight(lam, screening=False), record_objective=True)
        assert est.objective_trace[-1] == pytest.approx(
            penalized_objective(corr, est.theta, lam), abs=1e-9
        )

    def test_objective_trace_adds_over_components(self) -> None:
        """Test a screened solve reports the objective of the whole matrix."""
        corr = np.eye(5)
        corr[0, 1] = corr[1, 0] = 0.6
        corr[2, 3] = corr[3, 2] = -0.5
        est = solve_glasso(_corr(corr), _tight(0.1), record_objective=True)
        assert len(est.objective_trace) == est.iterations
        assert np.all(np.diff(est.objective_trace) >= -1e-10)
        assert est.objective_trace[-1] == pytest.approx(
            penalized_objective(corr, est.theta, 0.1), abs=1e-9
        )

    def test_objective_uses_shifted_trace(self) -> None:
        """Test the diagonal of theta is charged at S + lam*I."""
        theta = np.diag([2.0, 4.0])
        expected = np.log(8.0) - (2.0 + 4.0) * 1.5
        assert penalized_objective(np.eye(2), theta, 0.5) == pytest.approx(expected)

    def test_objective_not_positive_definite(self) -> None:
        """Test an indefinite matrix scores minus infinity."""
        assert penalized_objective(np.eye(2), np.array([[1.0, 2.0], [2.0, 1.0]]), 0.1) == -np.inf
    def test_permutation_equivariance(self, rng: np.random.Generator) -> None:
        """Test relabeling utterances permutes the solution."""
        corr = random_correlation(rng, 6)
        lam = 0.3 * lambda_max(_corr(corr))
        perm = rng.permutation(6)
        base = solve_glasso(_corr(corr), _tight(lam)).theta
        permuted = solve_glasso(_corr(corr[np.ix_(perm, perm)]), _tight(lam)).theta
        expected = base[np.ix_(perm, perm)]
        np.testing.assert_array_equal(permuted == 0, expected == 0)
        np.testing.assert_allclose(permuted, expected, atol=1e-6)


class TestScreening:
    """Test component screening and its exactness."""

    def test_components(self) -> None:
        """Test |S_ij| > lam defines the components."""
        corr = _corr(
            [
                [1.0, 0.5, 0.0, 0.0],
                [0.5, 1.0, 0.1, 0.0],
                [0.0, 0.1, 1.0, 0.0],
                [0.0, 0.0, 0.0, 1.0],
            ]
        )
        comps = [c.tolist() for c in screen_components(corr, 0.2)]
        assert comps == [[0, 1], [2], [3]]

    def test_equal_to_unscreened(self, rng: np.random.Generator) -> None:
        """Test screened and unscreened solves agree on pattern and values."""
        for _ in range(10):
            corr = random_correlation(rng, 9)
            lam = float(rng.uniform(0.3, 0.8)) * lambda_max(_corr(corr))
            screened = solve_glasso(_corr(corr), _tight(lam, screening=True)).theta
            full = solve_glasso(_corr(corr), _tight(lam, screening=False)).theta
            np.testing.assert_array_equal(screened == 0, full == 0)
            np.testing.assert_allclose(screened, full, atol=1e-6)


class TestPath:
    """Test warm starts and the penalty path."""

    def test_warm_start_same_solution(self, rng: np.random.Generator) -> None:
        """Test a warm start changes the path, not the answer."""
        corr = random_correlation(rng, 8)
        lam_max = lambda_max(_corr(corr))
        previous = solve_glasso(_corr(corr), _tight(0.6 * lam_max))
        warm = solve_glasso(_corr(corr), _tight(0.3 * lam_max), warm_start=previous).theta
        cold = solve_glasso(_corr(corr), _tight(0.3 * lam_max)).theta
        np.testing.assert_allclose(warm, cold, atol=1e-6)

    def test_sparsity_monotone_in_lambda(self, rng: np.random.Generator) -> None:
        """Test a larger penalty rarely keeps more edges."""
        ok = 0
        for _ in range(40):
            corr = random_correlation(rng, 8)
            lam_max = lambda_max(_corr(corr))
            low, high = sorted(rng.uniform(0.05, 1.0, size=2) * lam_max)
            n_low = len(solve_glasso(_corr(corr), GlassoConfig(lam=float(low))).edges())
            n_high = len(solve_glasso(_corr(corr), GlassoConfig(lam=float(high))).edges())
            ok += n_high <= n_low
        assert ok >= 38

    def test_grid_shape(self) -> None:
        """Test the grid descends geometrically to 1% of lambda_max."""
        grid = lambda_grid(0.8, 20)
        assert len(grid) == 20
        assert grid[0] == pytest.approx(0.8)
        assert grid[-1] == pytest.approx(0.008)
        assert np.all(np.diff(grid) < 0)
        np.testing.assert_allclose(grid[1:] / grid[:-1], grid[1] / grid[0])

    def test_grid_degenerate(self) -> None:
        """Test a zero lambda_max or a one-point grid."""
        np.testing.assert_array_equal(lambda_grid(0.0, 20), [0.0])
        np.testing.assert_array_equal(lambda_grid(0.5, 1), [0.5])


class TestRefit:
    """Test refitting on a fixed support."""

    def _estimate(self, theta: np.ndarray) -> PrecisionEstimate:
        return PrecisionEstimate(
            theta=theta,
            w=np.linalg.inv(theta),
            lambda_used=0.2,
            converged=True,
            iterations=1,
            dual_gap=0.0,
        )

    def test_chain_support_gives_exact_inverse(self) -> None:
        """Test a chain support recovers the inverse of a Markov-chain correlation."""
        corr = np.array([[1.0, 0.6, 0.36], [0.6, 1.0, 0.6], [0.36, 0.6, 1.0]])
        chain = np.array([[1.0, -0.5, 0.0], [-0.5, 1.0, -0.5], [0.0, -0.5, 1.0]])
        theta = refit_on_support(_corr(corr), self._estimate(chain), 0.0, _tight(0.0))
        assert theta[0, 2] == 0.0
        np.testing.assert_allclose(theta, np.linalg.inv(corr), atol=1e-6)

    def test_zero_pattern_kept(self, rng: np.random.Generator) -> None:
        """Test the refit adds no edge and drops none."""
        corr = random_correlation(rng, 8)
        est = solve_glasso(_corr(corr), _tight(0.4 * lambda_max(_corr(corr))))
        theta = refit_on_support(_corr(corr), est, 0.01, _tight(0.01))
        np.testing.assert_array_equal(theta == 0, est.theta == 0)
        assert np.linalg.eigvalsh(theta).min() > 0

    def test_undoes_shrinkage(self) -> None:
        """Test a refit edge is stronger than the penalized one."""
        corr = np.array([[1.0, 0.7], [0.7, 1.0]])
        est = solve_glasso(_corr(corr), _tight(0.3))
        theta = refit_on_support(_corr(corr), est, 0.0, _tight(0.0))
        np.testing.assert_allclose(theta, np.linalg.inv(corr), atol=1e-6)
        assert abs(theta[0, 1]) > abs(est.theta[0, 1])

    def test_empty_support_is_diagonal(self) -> None:
        """Test an edgeless estimate refits to the inverse diagonal."""
        corr = np.array(EXAMPLE_3X3)
        theta = refit_on_support(_corr(corr), self._estimate(np.eye(3)), 0.1, _tight(0.1))
        np.testing.assert_allclose(theta, np.eye(3) / 1.1)


class TestCrossValidation:
    """Test penalty selection over embedding-dimension folds."""

    def test_leave_one_out_small_dimension(self, rng: np.random.Generator) -> None:
        """Test L = 5 with five folds selects a grid point."""
        est = estimate_precision(_emb(rng.standard_normal((3, 5))), GlassoConfig(cv_folds=5))
        assert est.lambda_used in est.cv_grid
        assert len(est.cv_scores) == len(est.cv_grid)

    def test_folds_exceeding_dimension_rejected(self, rng: np.random.Generator) -> None:
        """Test cv_folds > L is a validation error."""
        with pytest.raises(ValidationError):
            select_lambda_cv(_emb(rng.standard_normal((3, 5))), GlassoConfig(cv_folds=6))

    def test_ties_prefer_sparser(
        self, rng: np.random.Generator, monkeypatch: pytest.MonkeyPatch
    ) -> None:
        """Test equal scores resolve to the larger penalty on every entry point."""
        grid = np.array([0.5, 0.2, 0.1])
        fold_scores = np.array([[1.0, 1.0, 0.5], [1.0, 1.0, 0.5]])
        monkeypatch.setattr(
            glasso, "_cv_fold_scores", lambda emb, cfg, workers: (grid, fold_scores)
        )
        emb = _emb(rng.standard_normal((4, 40)))
        for rule in ("one-se", "max"):
            cfg = GlassoConfig(cv_rule=rule)
            assert select_lambda_cv(emb, cfg) == 0.5
            est = estimate_precision(emb, cfg)
            assert est.lambda_used == 0.5
            assert est.cv_scores == (1.0, 1.0, 0.5)

    def test_one_standard_error_rule(self) -> None:
        """Test one-se backs off to a sparser penalty that max would skip."""
        fold_scores = np.array([[1.9, 2.0, 2.1], [2.1, 2.4, 2.5]])
        assert select_from_scores(fold_scores, "max") == 2
        assert select_from_scores(fold_scores, "one-se") == 1

    def test_all_scores_infinite(self) -> None:
        """Test a grid with no finite score falls back to the largest penalty."""
        fold_scores = np.full((3, 4), -np.inf)
        assert select_from_scores(fold_scores, "one-se") == 0

    def test_duplicated_rows_keep_edge(self, rng: np.random.Generator) -> None:
        """Test two identical rows end up connected."""
        values = rng.standard_normal((4, 200))
        values[1] = values[0]
        est = estimate_precision(_emb(values), GlassoConfig())
        assert (0, 1) in est.edges()

    def test_strong_pairs_recovered_without_extras(self, rng: np.random.Generator) -> None:
        """Test the selected graph holds the correlated pairs and nothing else."""
        values = rng.standard_normal((6, 1000))
        values[1] = 0.8 * values[0] + 0.6 * values[1]
        values[3] = 0.8 * values[2] + 0.6 * values[3]
        est = estimate_precision(_emb(values), GlassoConfig())
        assert est.edges() == [(0, 1), (2, 3)]

    @pytest.mark.slow
    @pytest.mark.timeout(1800)
    def test_independent_rows_mostly_edgeless(self) -> None:
        """Test i.i.d. 12 x 2000 embeddings leave at least 95% of entries zero."""
        fractions = []
        off = ~np.eye(12, dtype=bool)
        for seed in range(20):
            values = np.random.default_rng(seed).standard_normal((12, 2000))
            est = estimate_precision(_emb(values), GlassoConfig(rng_seed=seed))
            fractions.append(float((est.theta[off] == 0).mean()))
        assert np.mean(fractions) >= 0.95

    def test_deterministic_across_workers(self, rng: np.random.Generator) -> None:
        """Test the selected penalty and solution ignore the worker count."""
        values = rng.standard_normal((5, 60))
        values[2] += values[0]
        serial = estimate_precision(_emb(values), GlassoConfig(cv_grid_size=8), workers=1)
        threaded = estimate_precision(_emb(values), GlassoConfig(cv_grid_size=8), workers=3)
        assert serial.lambda_used == threaded.lambda_used
        np.testing.assert_array_equal(serial.theta, threaded.theta)

    def test_fixed_lambda_skips_cv(self, rng: np.random.Generator) -> None:
        """Test a numeric lambda is used as given."""
        est = estimate_precision(_emb(rng.standard_normal((4, 30))), GlassoConfig(lam=0.25))
        assert est.lambda_used == 0.25
        assert est.cv_grid == ()


class TestSolverInputs:
    """Test solver argument validation."""

    def test_auto_lambda_needs_estimate_precision(self) -> None:
        """Test solve_glasso refuses the auto-cv setting."""
        with pytest.raises(ValidationError):
            solve_glasso(_corr(EXAMPLE_3X3), GlassoConfig())

    def test_asymmetric_rejected(self) -> None:
        """Test a non-symmetric input is rejected."""
        with pytest.raises(ValidationError):
            solve_glasso(_corr([[1.0, 0.5], [0.4, 1.0]]), GlassoConfig(lam=0.1))
