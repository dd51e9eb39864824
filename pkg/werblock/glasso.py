"""Graphical lasso by block coordinate descent, with cross-validated penalty.

The solver maximizes

    log det(Theta) - tr((S + lam*I) Theta) - lam * sum_{i != j} |Theta_ij|

over positive-definite Theta. The diagonal shift matches the working
covariance W, which starts at S + lam*I and keeps that diagonal. Each outer
sweep visits every column j, solves the lasso subproblem

    min_beta 1/2 beta' W_11 beta - s_12' beta + lam ||beta||_1

by cyclic coordinate descent, and writes W_11 beta back into column j.
Coefficients come out of soft-thresholding, so zeros in Theta are exact.

Cross-validation scores each penalty by a near-unpenalized refit on the
support that penalty selects, so shrinkage of strong edges does not drag the
choice toward dense graphs.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import GlassoConfig, NonparanormalConfig
from .covariance import CovarianceMatrix, apply_nonparanormal, empirical_covariance, to_correlation
from .errors import DegenerateVarianceError, SolverError, ValidationError
from .eval_data import EmbeddingMatrix
from .parallel import ordered_map
from .unionfind import components

log = logging.getLogger(__name__)

LAMBDA_MIN_RATIO = 0.01


@dataclass(frozen=True, eq=False)
class PrecisionEstimate:
    """Sparse precision estimate and its solver metadata.

    ``objective_trace`` (when recorded) holds the penalized log-likelihood of
    the module docstring after every outer sweep.
    """

    theta: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)
    lambda_used: float
    converged: bool
    iterations: int
    dual_gap: float
    objective_trace: tuple[float, ...] = ()
    cv_grid: tuple[float, ...] = ()
    cv_scores: tuple[float, ...] = ()

    @property
    def n(self) -> int:
        return self.theta.shape[0]

    def edges(self) -> list[tuple[int, int]]:
        """Nonzero off-diagonal positions (i < j)."""
        rows, cols = np.nonzero(np.triu(self.theta, 1))
        return list(zip(rows.tolist(), cols.tolist()))


@dataclass(frozen=True)
class CvSelection:
    """Penalty grid, per-fold held-out scores and the chosen grid index."""

    grid: np.ndarray = field(repr=False)
    fold_scores: np.ndarray = field(repr=False)
    best: int

    @property
    def lam(self) -> float:
        return float(self.grid[self.best])

    @property
    def mean_scores(self) -> np.ndarray:
        return self.fold_scores.mean(axis=0)


@dataclass
class _DenseSolution:
    w: np.ndarray
    coefs: np.ndarray
    converged: bool
    iterations: int
    trace: list[float]


def _soft_threshold(x: float, lam: float) -> float:
    if x > lam:
        return x - lam
    if x < -lam:
        return x + lam
    return 0.0


def _lasso_cd(
    gram: np.ndarray,
    target: np.ndarray,
    penalties: list[float],
    beta: np.ndarray,
    tol: float,
    max_iter: int,
) -> np.ndarray:
    """Cyclic coordinate descent on 1/2 b'Gb - t'b + sum_k pen_k |b_k|, in place.

    An infinite penalty pins its coordinate at zero.
    """
    grad = gram @ beta
    diag = np.diag(gram).tolist()
    target_list = target.tolist()
    for _ in range(max_iter):
        max_change = 0.0
        for k in range(len(diag)):
            old = float(beta[k])
            partial = target_list[k] - float(grad[k]) + diag[k] * old
            new = _soft_threshold(partial, penalties[k]) / diag[k]
            if new != old:
                delta = new - old
                grad += delta * gram[:, k]
                beta[k] = new
                if abs(delta) > max_change:
                    max_change = abs(delta)
        if max_change <= tol:
            break
    return beta


def _log_det(w: np.ndarray) -> float:
    sign, value = np.linalg.slogdet(w)
    if sign <= 0:
        raise SolverError("working covariance lost positive definiteness")
    return float(value)


def penalized_objective(s: np.ndarray, theta: np.ndarray, lam: float) -> float:
    """log det(Theta) - tr((S + lam*I) Theta) - lam * sum_{i != j} |Theta_ij|.

    Minus infinity when ``theta`` is not positive definite.
    """
    sign, log_det = np.linalg.slogdet(theta)
    if sign <= 0:
        return -math.inf
    off = ~np.eye(theta.shape[0], dtype=bool)
    trace = float(np.sum(s * theta)) + lam * float(np.trace(theta))
    return float(log_det) - trace - lam * float(np.abs(theta[off]).sum())


def _solve_dense(
    s: np.ndarray,
    lam: float,
    cfg: GlassoConfig,
    threshold: float,
    coefs: np.ndarray,
    record_objective: bool,
    support: np.ndarray | None = None,
) -> _DenseSolution:
    """Block coordinate descent; entries outside ``support`` stay exactly zero."""
    p = s.shape[0]
    w = s.copy()
    w[np.diag_indices(p)] += lam
    others = [np.delete(np.arange(p), j) for j in range(p)]
    if support is None:
        penalties = [[lam] * (p - 1) for _ in range(p)]
    else:
        penalties = [np.where(support[others[j], j], lam, math.inf).tolist() for j in range(p)]
    trace: list[float] = []
    converged = False
    iteration = 0

    for iteration in range(1, cfg.max_outer_iters + 1):
        w_old = w.copy()
        for j in range(p):
            idx = others[j]
            gram = w[np.ix_(idx, idx)]
            beta = _lasso_cd(
                gram, s[idx, j], penalties[j], coefs[j].copy(), cfg.inner_tol, cfg.max_inner_iters
            )
            coefs[j] = beta
            w12 = gram @ beta
            w[idx, j] = w12
            w[j, idx] = w12
        if not np.all(np.isfinite(w)):
            raise SolverError("non-finite working covariance; the problem is too ill-conditioned")
        if record_objective:
            trace.append(penalized_objective(s, _recover_theta(w, coefs), lam))
        change = float(np.abs(w - w_old).mean())
        log.debug(f"glasso sweep {iteration}: mean |dW| = {change:.3e}")
        if change <= threshold:
            converged = True
            break

    return _DenseSolution(w, coefs, converged, iteration, trace)


def _recover_theta(w: np.ndarray, coefs: np.ndarray) -> np.ndarray:
    p = w.shape[0]
    theta = np.zeros((p, p))
    for j in range(p):
        idx = np.delete(np.arange(p), j)
        beta = coefs[j]
        t_jj = 1.0 / (w[j, j] - w[idx, j] @ beta)
        theta[j, j] = t_jj
        theta[idx, j] = -beta * t_jj
    # exact zeros survive the average only where both columns agree
    return (theta + theta.T) / 2.0


def _warm_coefs(prev: PrecisionEstimate | None, comp: np.ndarray) -> np.ndarray:
    size = len(comp)
    coefs = np.zeros((size, max(size - 1, 0)))
    if prev is None:
        return coefs
    sub = prev.theta[np.ix_(comp, comp)]
    for j in range(size):
        idx = np.delete(np.arange(size), j)
        coefs[j] = -sub[idx, j] / sub[j, j]
    return coefs


def _convergence_threshold(s: np.ndarray, cfg: GlassoConfig) -> float:
    p = s.shape[0]
    mean_abs = float(np.abs(s[~np.eye(p, dtype=bool)]).mean()) if p > 1 else 0.0
    return cfg.convergence_tol * mean_abs if mean_abs > 0 else cfg.convergence_tol


def lambda_max(corr: CovarianceMatrix) -> float:
    """Smallest penalty that zeroes every off-diagonal entry."""
    s = corr.values
    if s.shape[0] < 2:
        return 0.0
    return float(np.max(np.abs(s[~np.eye(s.shape[0], dtype=bool)])))


def lambda_grid(lam_max: float, size: int) -> np.ndarray:
    """Descending log-spaced grid from ``lam_max`` to ``0.01 * lam_max``."""
    if lam_max <= 0:
        return np.array([0.0])
    if size == 1:
        return np.array([lam_max])
    return np.geomspace(lam_max, LAMBDA_MIN_RATIO * lam_max, size)


def screen_components(corr: CovarianceMatrix, lam: float) -> list[np.ndarray]:
    """Connected components of the graph with edges where |S_ij| > lam.

    The glasso solution is block diagonal over these components, so each can
    be solved on its own.
    """
    s = corr.values
    rows, cols = np.nonzero(np.triu(np.abs(s) > lam, 1))
    groups = components(s.shape[0], zip(rows.tolist(), cols.tolist()))
    return [np.array(g) for g in groups]


def _dual_gap(s: np.ndarray, theta: np.ndarray, lam: float) -> float:
    p = s.shape[0]
    off = ~np.eye(p, dtype=bool)
    shifted = s + lam * np.eye(p)
    return float(np.sum(shifted * theta) - p + lam * np.abs(theta[off]).sum())


def _unpenalized(s: np.ndarray, record_objective: bool) -> PrecisionEstimate:
    """Without a penalty the maximizer is the plain inverse."""
    try:
        np.linalg.cholesky(s)
    except np.linalg.LinAlgError as e:
        raise ValidationError(
            "lambda=0 needs a nonsingular correlation matrix (more dimensions than utterances)"
        ) from e
    theta = np.linalg.inv(s)
    theta = (theta + theta.T) / 2.0
    return PrecisionEstimate(
        theta=theta,
        w=s.copy(),
        lambda_used=0.0,
        converged=True,
        iterations=0,
        dual_gap=_dual_gap(s, theta, 0.0),
        objective_trace=(penalized_objective(s, theta, 0.0),) if record_objective else (),
    )


def solve_glasso(
    corr: CovarianceMatrix,
    cfg: GlassoConfig,
    warm_start: PrecisionEstimate | None = None,
    record_objective: bool = False,
) -> PrecisionEstimate:
    """Solve the penalized likelihood for a fixed ``cfg.lam``."""
    if cfg.auto:
        raise ValidationError(
            "solve_glasso needs a fixed lambda; use estimate_precision for auto-cv"
        )
    lam = float(cfg.lam)
    s = np.asarray(corr.values, dtype=np.float64)
    p = s.shape[0]
    if s.shape != (p, p) or not np.array_equal(s, s.T):
        raise ValidationError("glasso input must be a symmetric square matrix")

    if lam == 0.0:
        return _unpenalized(s, record_objective)

    threshold = _convergence_threshold(s, cfg)
    comps = screen_components(corr, lam) if cfg.screening else [np.arange(p)]
    theta = np.zeros((p, p))
    w = np.zeros((p, p))
    converged = True
    iterations = 0
    traces: list[list[float]] = []
    singleton_objective = 0.0

    for comp in comps:
        if len(comp) == 1:
            i = int(comp[0])
            w[i, i] = s[i, i] + lam
            if w[i, i] <= 0:
                raise DegenerateVarianceError(i)
            theta[i, i] = 1.0 / w[i, i]
            singleton_objective -= float(np.log(w[i, i])) + 1.0
            continue
        sub = s[np.ix_(comp, comp)]
        solution = _solve_dense(
            sub, lam, cfg, threshold, _warm_coefs(warm_start, comp), record_objective
        )
        block = np.ix_(comp, comp)
        w[block] = solution.w
        theta[block] = _recover_theta(solution.w, solution.coefs)
        converged = converged and solution.converged
        iterations = max(iterations, solution.iterations)
        traces.append(solution.trace)

    trace: tuple[float, ...] = ()
    if record_objective:
        # the objective adds over components; early finishers keep their final value
        length = max((len(t) for t in traces), default=1)
        total = np.full(length, singleton_objective)
        for t in traces:
            total += np.array(t + [t[-1]] * (length - len(t)))
        trace = tuple(total.tolist())

    try:
        np.linalg.cholesky(theta)
    except np.linalg.LinAlgError as e:
        raise SolverError(
            f"estimated precision matrix is not positive definite (lambda={lam:g})"
        ) from e

    if not converged:
        log.warning(f"glasso did not converge in {cfg.max_outer_iters} sweeps (lambda={lam:.4g})")

    return PrecisionEstimate(
        theta=theta,
        w=w,
        lambda_used=lam,
        converged=converged,
        iterations=iterations,
        dual_gap=_dual_gap(s, theta, lam),
        objective_trace=trace,
    )


def refit_on_support(
    corr: CovarianceMatrix, est: PrecisionEstimate, lam: float, cfg: GlassoConfig
) -> np.ndarray:
    """Precision at penalty ``lam`` with the zero-pattern of ``est`` enforced.

    With a small ``lam`` this undoes most of the shrinkage on the edges that
    ``est`` kept while adding no new ones.
    """
    s = np.asarray(corr.values, dtype=np.float64)
    p = s.shape[0]
    theta = np.zeros((p, p))
    threshold = _convergence_threshold(s, cfg)
    for group in components(p, est.edges()):
        comp = np.array(group)
        if len(comp) == 1:
            i = int(comp[0])
            theta[i, i] = 1.0 / (s[i, i] + lam)
            continue
        block = np.ix_(comp, comp)
        support = est.theta[block] != 0
        solution = _solve_dense(
            s[block], lam, cfg, threshold, _warm_coefs(est, comp), False, support
        )
        theta[block] = _recover_theta(solution.w, solution.coefs)
    return theta


def held_out_score(theta: np.ndarray, s_test: np.ndarray) -> float:
    """Gaussian log-likelihood log det(Theta) - tr(S_test Theta), up to scale."""
    sign, log_det = np.linalg.slogdet(theta)
    if sign <= 0:
        return -math.inf
    return float(log_det) - float(np.sum(s_test * theta))


def _standardized_split(
    values: np.ndarray, train: np.ndarray, test: np.ndarray
) -> tuple[CovarianceMatrix, np.ndarray]:
    """Training correlation and held-out scatter, both on the training scale."""
    x_train = values[:, train]
    mean = x_train.mean(axis=1, keepdims=True)
    sd = x_train.std(axis=1, ddof=1, keepdims=True)
    zero = np.flatnonzero(sd[:, 0] == 0)
    if zero.size:
        raise DegenerateVarianceError(int(zero[0]), "zero variance on training dimensions")
    z_test = (values[:, test] - mean) / sd
    ids = tuple(str(i) for i in range(values.shape[0]))
    corr_train = to_correlation(empirical_covariance(EmbeddingMatrix(ids, x_train)))
    return corr_train, z_test @ z_test.T / len(test)


def _cv_fold_scores(
    emb: EmbeddingMatrix, cfg: GlassoConfig, workers: int | None
) -> tuple[np.ndarray, np.ndarray]:
    """Penalty grid and a folds x grid array of held-out scores."""
    dim, k = emb.dim, cfg.cv_folds
    if k > dim:
        raise ValidationError(f"cv_folds ({k}) exceeds embedding dimension L ({dim})")
    rng = np.random.default_rng(np.random.SeedSequence(cfg.rng_seed))
    folds = np.array_split(rng.permutation(dim), k)
    if dim - max(len(f) for f in folds) < 2:
        raise ValidationError(f"L={dim} leaves fewer than 2 training dimensions per fold")

    corr = to_correlation(empirical_covariance(emb))
    grid = lambda_grid(lambda_max(corr), cfg.cv_grid_size)
    values = emb.values

    def fold_path(test: np.ndarray) -> list[float]:
        train = np.setdiff1d(np.arange(dim), test)
        corr_train, s_test = _standardized_split(values, train, test)
        refit_lam = LAMBDA_MIN_RATIO * lambda_max(corr_train)
        scores = []
        warm = None
        for lam in grid:
            est = solve_glasso(corr_train, cfg.with_lambda(lam), warm_start=warm)
            warm = est
            theta = refit_on_support(corr_train, est, refit_lam, cfg)
            scores.append(held_out_score(theta, s_test))
        return scores

    return grid, np.array(ordered_map(fold_path, folds, workers))


def select_from_scores(fold_scores: np.ndarray, rule: str) -> int:
    """Grid index chosen from per-fold scores over a descending penalty grid.

    ``max`` takes the best mean score. ``one-se`` takes the largest penalty
    whose mean is within one standard error of that best. Either way ties go
    to the larger penalty.
    """
    mean = fold_scores.mean(axis=0)
    best = int(np.argmax(mean))
    n_folds = fold_scores.shape[0]
    if rule == "max" or n_folds < 2 or not np.isfinite(mean[best]):
        return best
    se = float(fold_scores[:, best].std(ddof=1)) / math.sqrt(n_folds)
    return int(np.flatnonzero(mean >= mean[best] - se)[0])


def cross_validate(
    emb: EmbeddingMatrix, cfg: GlassoConfig, workers: int | None = 1
) -> CvSelection:
    """Score the penalty grid over dimension folds and pick one penalty."""
    grid, fold_scores = _cv_fold_scores(emb, cfg, workers)
    selection = CvSelection(grid, fold_scores, select_from_scores(fold_scores, cfg.cv_rule))
    log.debug(
        f"CV over {len(grid)} penalties ({cfg.cv_rule}): lambda={selection.lam:.4g}, "
        f"score={selection.mean_scores[selection.best]:.4f}"
    )
    return selection


def select_lambda_cv(emb: EmbeddingMatrix, cfg: GlassoConfig, workers: int | None = 1) -> float:
    """Penalty chosen by held-out Gaussian log-likelihood over dimension folds."""
    return cross_validate(emb, cfg, workers).lam


def estimate_precision(
    emb: EmbeddingMatrix,
    cfg: GlassoConfig,
    nonpara: NonparanormalConfig | None = None,
    workers: int | None = 1,
) -> PrecisionEstimate:
    """Optional nonparanormal transform, correlation, penalty selection and solve."""
    nonpara = nonpara or NonparanormalConfig()
    data = apply_nonparanormal(emb, nonpara) if nonpara.enabled else emb
    source = "nonparanormal" if nonpara.enabled else "gaussian"
    corr = to_correlation(empirical_covariance(data, source))

    selection = None
    if not cfg.auto:
        lam = float(cfg.lam)
    elif corr.n < 2:
        lam = 0.0
    else:
        selection = cross_validate(data, cfg, workers)
        lam = selection.lam

    est = solve_glasso(corr, cfg.with_lambda(lam))
    log.debug(f"Precision estimate: n={est.n}, lambda={lam:.4g}, edges={len(est.edges())}")
    if selection is None:
        return est
    return replace(
        est,
        cv_grid=tuple(selection.grid.tolist()),
        cv_scores=tuple(selection.mean_scores.tolist()),
    )


def write_precision_dump(est: PrecisionEstimate, path: str | Path) -> None:
    """Write ``i<TAB>j<TAB>theta_ij`` for every nonzero off-diagonal pair."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for i, j in est.edges():
            f.write(f"{i}\t{j}\t{float(est.theta[i, j])!r}\n")
