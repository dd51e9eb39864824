"""Shared pytest fixtures and configuration."""

from pathlib import Path

import numpy as np
import pytest

from tests.helpers.builders import LineWriter, SyntheticFactory, make_dataset
from werblock.eval_data import EmbeddingMatrix, EvalDataset
from werblock.simulation import SyntheticData, SyntheticSpec, generate


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator so every test draws the same numbers."""
    return np.random.default_rng(12345)


@pytest.fixture
def toy_dataset() -> EvalDataset:
    """Two speakers, three utterances each."""
    return make_dataset(
        [
            ("s1-0", "s1", 10, 1, 2),
            ("s1-1", "s1", 8, 2, 1),
            ("s1-2", "s1", 12, 0, 0),
            ("s2-0", "s2", 5, 1, 1),
            ("s2-1", "s2", 7, 3, 2),
            ("s2-2", "s2", 9, 1, 0),
        ]
    )


@pytest.fixture
def toy_embeddings(toy_dataset: EvalDataset, rng: np.random.Generator) -> EmbeddingMatrix:
    """Independent Gaussian rows except s1-0/s1-1, which share a factor."""
    values = rng.standard_normal((6, 400))
    values[1] = 0.8 * values[0] + 0.6 * values[1]
    return EmbeddingMatrix(tuple(toy_dataset.utt_ids), values)


@pytest.fixture
def synthetic() -> SyntheticFactory:
    """Factory for synthetic datasets with overridable spec fields."""

    def factory(**overrides: object) -> SyntheticData:
        return generate(SyntheticSpec(**overrides))  # type: ignore[arg-type]

    return factory


@pytest.fixture
def write_lines(tmp_path: Path) -> LineWriter:
    """Write lines to a file under tmp_path and return its path."""

    def writer(name: str, lines: list[str]) -> Path:
        path = tmp_path / name
        path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
        return path

    return writer
