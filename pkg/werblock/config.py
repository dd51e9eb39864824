"""Typed configuration objects, YAML loading and validation.

Every config is a frozen dataclass validated on construction. Validation
follows a two-step shape: ``validate_*`` returns ``(is_valid, errors)`` and
``assert_valid_*`` raises :class:`ValidationError` listing every problem.
"""

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import yaml

from .errors import ValidationError

AUTO = "auto"
AUTO_CV = "auto-cv"

VALID_SUBCOMMANDS = {"score", "infer-blocks", "analyze", "simulate", "compare"}
VALID_METHODS = {"bootstrap", "block-bootstrap", "inferred-block-bootstrap"}
VALID_ESTIMATORS = {"glasso", "nonparanormal"}
VALID_FORMATS = {"text", "tsv"}
VALID_MARGINALS = {"gaussian", "cubed_gaussian"}
VALID_CV_RULES = {"one-se", "max"}

MAX_SEED = 2**64 - 1


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_real(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _check_seed(value: Any, name: str, errors: list[str]) -> None:
    if not _is_int(value) or not 0 <= value <= MAX_SEED:
        errors.append(f"{name} must be an unsigned 64-bit integer, got {value!r}")


@dataclass(frozen=True)
class GlassoConfig:
    """Graphical lasso settings; ``lam`` is a penalty or ``"auto-cv"``."""

    lam: float | str = AUTO_CV
    max_outer_iters: int = 100
    convergence_tol: float = 1e-4
    inner_tol: float = 1e-7
    max_inner_iters: int = 1000
    cv_folds: int = 5
    cv_grid_size: int = 20
    cv_rule: str = "one-se"
    rng_seed: int = 0
    screening: bool = True

    def __post_init__(self) -> None:
        assert_valid_glasso_config(self)

    @property
    def auto(self) -> bool:
        return self.lam == AUTO_CV

    def with_lambda(self, lam: float) -> "GlassoConfig":
        return replace(self, lam=float(lam))


@dataclass(frozen=True)
class NonparanormalConfig:
    """Winsorized normal-score transform settings."""

    enabled: bool = False
    winsorization_delta: float | str = AUTO

    def __post_init__(self) -> None:
        assert_valid_nonparanormal_config(self)


@dataclass(frozen=True)
class BootstrapConfig:
    """Bootstrap replicate count, seed and CI level."""

    n_replicates: int = 10_000
    rng_seed: int = 0
    ci_level: float = 0.95

    def __post_init__(self) -> None:
        assert_valid_bootstrap_config(self)


@dataclass(frozen=True)
class RunConfig:
    """Effective configuration of one CLI run."""

    subcommand: str
    method: str = "inferred-block-bootstrap"
    estimator: str = "glasso"
    eval_path: Path | None = None
    embeddings_path: Path | None = None
    extra_embeddings: tuple[Path, ...] = ()
    blocks_file: Path | None = None
    out: Path | None = None
    report_format: str = "text"
    global_graph: bool = False
    seed: int = 0
    workers: int | None = None
    glasso: GlassoConfig = field(default_factory=GlassoConfig)
    nonparanormal: NonparanormalConfig = field(default_factory=NonparanormalConfig)
    bootstrap: BootstrapConfig = field(default_factory=BootstrapConfig)

    def __post_init__(self) -> None:
        assert_valid_run_config(self)

    def effective(self) -> list[tuple[str, str]]:
        """Ordered settings embedded in reports (worker count excluded)."""
        glasso = self.glasso
        items = [
            ("subcommand", self.subcommand),
            ("method", self.method),
            ("estimator", self.estimator),
            ("seed", str(self.seed)),
            ("bboot", str(self.bootstrap.n_replicates)),
            ("ci_level", f"{self.bootstrap.ci_level:g}"),
            ("lambda", str(glasso.lam)),
            ("cv_folds", str(glasso.cv_folds)),
            ("cv_grid_size", str(glasso.cv_grid_size)),
            ("cv_rule", glasso.cv_rule),
            ("convergence_tol", f"{glasso.convergence_tol:g}"),
            ("max_outer_iters", str(glasso.max_outer_iters)),
            ("winsorization_delta", str(self.nonparanormal.winsorization_delta)),
            ("global_graph", str(self.global_graph).lower()),
        ]
        if self.eval_path is not None:
            items.append(("eval", str(self.eval_path)))
        if self.embeddings_path is not None:
            items.append(("embeddings", str(self.embeddings_path)))
        if self.extra_embeddings:
            items.append(("extra_embeddings", ",".join(str(p) for p in self.extra_embeddings)))
        if self.blocks_file is not None:
            items.append(("blocks_file", str(self.blocks_file)))
        return items


def validate_glasso_config(cfg: GlassoConfig) -> tuple[bool, list[str]]:
    """Validate a glasso configuration."""
    errors = []

    if isinstance(cfg.lam, str):
        if cfg.lam != AUTO_CV:
            errors.append(f"lambda must be a non-negative number or '{AUTO_CV}'")
    elif not _is_real(cfg.lam) or cfg.lam < 0:
        errors.append(f"lambda must be non-negative, got {cfg.lam!r}")

    if not _is_int(cfg.max_outer_iters) or cfg.max_outer_iters < 1:
        errors.append(f"max_outer_iters must be a positive integer, got {cfg.max_outer_iters!r}")
    if not _is_int(cfg.max_inner_iters) or cfg.max_inner_iters < 1:
        errors.append(f"max_inner_iters must be a positive integer, got {cfg.max_inner_iters!r}")
    if not _is_real(cfg.convergence_tol) or cfg.convergence_tol <= 0:
        errors.append(f"convergence_tol must be positive, got {cfg.convergence_tol!r}")
    if not _is_real(cfg.inner_tol) or cfg.inner_tol <= 0:
        errors.append(f"inner_tol must be positive, got {cfg.inner_tol!r}")
    if not _is_int(cfg.cv_folds) or cfg.cv_folds < 2:
        errors.append(f"cv_folds must be an integer >= 2, got {cfg.cv_folds!r}")
    if not _is_int(cfg.cv_grid_size) or cfg.cv_grid_size < 1:
        errors.append(f"cv_grid_size must be a positive integer, got {cfg.cv_grid_size!r}")
    if cfg.cv_rule not in VALID_CV_RULES:
        errors.append(
            f"Invalid cv_rule '{cfg.cv_rule}'. "
            f"Must be one of: {', '.join(sorted(VALID_CV_RULES))}"
        )
    _check_seed(cfg.rng_seed, "rng_seed", errors)

    return len(errors) == 0, errors


def validate_nonparanormal_config(cfg: NonparanormalConfig) -> tuple[bool, list[str]]:
    """Validate a nonparanormal configuration."""
    errors = []
    delta = cfg.winsorization_delta
    if isinstance(delta, str):
        if delta != AUTO:
            errors.append(f"winsorization_delta must be in (0, 0.5) or '{AUTO}'")
    elif not _is_real(delta) or not 0 < delta < 0.5:
        errors.append(f"winsorization_delta must be in (0, 0.5), got {delta!r}")
    if not isinstance(cfg.enabled, bool):
        errors.append("enabled must be a boolean")
    return len(errors) == 0, errors


def validate_bootstrap_config(cfg: BootstrapConfig) -> tuple[bool, list[str]]:
    """Validate a bootstrap configuration."""
    errors = []
    if not _is_int(cfg.n_replicates) or cfg.n_replicates < 1:
        errors.append(f"n_replicates must be a positive integer, got {cfg.n_replicates!r}")
    if not _is_real(cfg.ci_level) or not 0 < cfg.ci_level < 1:
        errors.append(f"ci_level must be in (0, 1), got {cfg.ci_level!r}")
    _check_seed(cfg.rng_seed, "rng_seed", errors)
    return len(errors) == 0, errors


def validate_run_config(cfg: RunConfig) -> tuple[bool, list[str]]:
    """Validate a run configuration, including cross-field rules."""
    errors = []

    if cfg.subcommand not in VALID_SUBCOMMANDS:
        errors.append(
            f"Invalid subcommand '{cfg.subcommand}'. "
            f"Must be one of: {', '.join(sorted(VALID_SUBCOMMANDS))}"
        )
    if cfg.method not in VALID_METHODS:
        errors.append(
            f"Invalid method '{cfg.method}'. Must be one of: {', '.join(sorted(VALID_METHODS))}"
        )
    if cfg.estimator not in VALID_ESTIMATORS:
        errors.append(
            f"Invalid estimator '{cfg.estimator}'. "
            f"Must be one of: {', '.join(sorted(VALID_ESTIMATORS))}"
        )
    if cfg.report_format not in VALID_FORMATS:
        errors.append(f"Invalid format '{cfg.report_format}'")
    _check_seed(cfg.seed, "seed", errors)
    if cfg.workers is not None and (not _is_int(cfg.workers) or cfg.workers < 0):
        errors.append(f"workers must be a non-negative integer, got {cfg.workers!r}")

    if cfg.extra_embeddings and cfg.embeddings_path is None:
        errors.append("--extra-embeddings needs --embeddings")

    if cfg.subcommand == "analyze" and cfg.method == "inferred-block-bootstrap":
        if cfg.embeddings_path is None and cfg.blocks_file is None:
            errors.append("method inferred-block-bootstrap requires --embeddings or --blocks-file")

    return len(errors) == 0, errors


def _assert(result: tuple[bool, list[str]], what: str) -> None:
    is_valid, errors = result
    if not is_valid:
        raise ValidationError(f"Invalid {what} configuration", errors)


def assert_valid_glasso_config(cfg: GlassoConfig) -> None:
    _assert(validate_glasso_config(cfg), "glasso")


def assert_valid_nonparanormal_config(cfg: NonparanormalConfig) -> None:
    _assert(validate_nonparanormal_config(cfg), "nonparanormal")


def assert_valid_bootstrap_config(cfg: BootstrapConfig) -> None:
    _assert(validate_bootstrap_config(cfg), "bootstrap")


def assert_valid_run_config(cfg: RunConfig) -> None:
    _assert(validate_run_config(cfg), "run")


_SECTIONS = {
    "glasso": GlassoConfig,
    "nonparanormal": NonparanormalConfig,
    "bootstrap": BootstrapConfig,
}


def load_config(path: str | Path) -> dict[str, dict[str, Any]]:
    """Load a YAML config file into per-section override dicts.

    Unknown sections or keys are reported together as one validation error.
    """
    with open(path, encoding="utf-8") as f:
        raw = yaml.safe_load(f) or {}

    if not isinstance(raw, dict):
        raise ValidationError(f"Config file {path} must contain a mapping")

    errors = []
    sections: dict[str, dict[str, Any]] = {}
    for name, values in raw.items():
        if name not in _SECTIONS:
            errors.append(f"unknown section '{name}'")
            continue
        if not isinstance(values, dict):
            errors.append(f"section '{name}' must be a mapping")
            continue
        known = {f.name for f in fields(_SECTIONS[name])}
        # the YAML spelling of the glasso penalty is "lambda"
        values = {("lam" if k == "lambda" else k): v for k, v in values.items()}
        for key in values:
            if key not in known:
                errors.append(f"unknown key '{key}' in section '{name}'")
        sections[name] = values

    if errors:
        raise ValidationError(f"Invalid config file {path}", errors)
    return sections


def build_config(cls: type, base: dict[str, Any] | None, **overrides: Any) -> Any:
    """Merge YAML values with non-None CLI overrides and construct ``cls``."""
    values = dict(base or {})
    values.update({k: v for k, v in overrides.items() if v is not None})
    return cls(**values)


def config_summary(cfg: Any) -> str:
    """Get a one-line summary of a config dataclass."""
    return " | ".join(f"{k}={v}" for k, v in asdict(cfg).items())
