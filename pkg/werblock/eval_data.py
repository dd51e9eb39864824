"""Evaluation data model and file ingestion.

Scoring records, utterance embeddings and the speaker partition are loaded
once and never mutated afterwards; every structure here is safe to share
between threads.
"""

import logging
import struct
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import DuplicateIdError, MissingEmbeddingError, ParseError, ValidationError

log = logging.getLogger(__name__)

EMBEDDING_MAGIC = b"WSEB"
EVAL_HEADER = "# utt_id\tspeaker_id\tm\te_a\te_b"
FORMATS = ("tsv", "raw-binary")


@dataclass(frozen=True)
class EvalRecord:
    """One utterance's scoring tuple."""

    utt_id: str
    speaker_id: str
    m: int
    e_a: int
    e_b: int

    def __post_init__(self) -> None:
        for name in ("m", "e_a", "e_b"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be non-negative for utt_id '{self.utt_id}'")


@dataclass(frozen=True)
class EvalDataset:
    """Ordered records; position in ``records`` is the utterance index."""

    records: tuple[EvalRecord, ...]
    name: str = "dataset"

    def __post_init__(self) -> None:
        if not self.records:
            raise ValidationError(f"no records in {self.name}")
        seen: set[str] = set()
        for record in self.records:
            if record.utt_id in seen:
                raise DuplicateIdError(record.utt_id, self.name)
            seen.add(record.utt_id)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def utt_ids(self) -> list[str]:
        return [r.utt_id for r in self.records]

    @cached_property
    def counts(self) -> np.ndarray:
        """Integer matrix of shape (n, 3) with columns m, e_a, e_b."""
        arr = np.array([(r.m, r.e_a, r.e_b) for r in self.records], dtype=np.int64)
        arr.setflags(write=False)
        return arr

    def subset(self, indices: Sequence[int], name: str | None = None) -> "EvalDataset":
        return EvalDataset(tuple(self.records[i] for i in indices), name or self.name)


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """Utterance embedding rows, float64, one row per utt_id."""

    utt_ids: tuple[str, ...]
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2:
            raise ValidationError("embedding values must be a 2-D matrix")
        if values.shape[0] != len(self.utt_ids):
            raise ValidationError(
                f"{len(self.utt_ids)} utt_ids for {values.shape[0]} embedding rows"
            )
        if values.shape[1] < 2:
            raise ValidationError(f"embedding dimension L must be >= 2, got {values.shape[1]}")
        bad = np.argwhere(~np.isfinite(values))
        if bad.size:
            row = int(bad[0][0])
            raise ValidationError(f"non-finite embedding value for utt_id '{self.utt_ids[row]}'")
        if len(set(self.utt_ids)) != len(self.utt_ids):
            dup = next(u for u in self.utt_ids if self.utt_ids.count(u) > 1)
            raise DuplicateIdError(dup, "embeddings")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @cached_property
    def _row_index(self) -> dict[str, int]:
        return {u: i for i, u in enumerate(self.utt_ids)}

    def rows_for(self, utt_ids: Sequence[str]) -> "EmbeddingMatrix":
        """Select rows by utt_id, in the given order."""
        index = self._row_index
        missing = next((u for u in utt_ids if u not in index), None)
        if missing is not None:
            raise MissingEmbeddingError(missing)
        rows = [index[u] for u in utt_ids]
        return EmbeddingMatrix(tuple(utt_ids), self.values[rows])

    def with_values(self, values: np.ndarray) -> "EmbeddingMatrix":
        return EmbeddingMatrix(self.utt_ids, values)


@dataclass(frozen=True)
class SpeakerPartition:
    """Speaker id to utterance indices, in order of first appearance."""

    groups: dict[str, tuple[int, ...]]

    def __len__(self) -> int:
        return len(self.groups)


def _parse_count(text: str, name: str, path: Path, line_no: int) -> int:
    if not (text.isascii() and text.isdigit()):
        raise ParseError(path, line_no, f"{name} must be a non-negative integer, got '{text}'")
    return int(text, 10)


def load_eval_records(path: str | Path, name: str | None = None) -> EvalDataset:
    """Load ``utt_id<TAB>speaker_id<TAB>m<TAB>e_a<TAB>e_b`` lines.

    Lines starting with '#' and blank lines are skipped.
    """
    path = Path(path)
    records = []
    with open(path, encoding="utf-8") as f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise ParseError(path, line_no, f"expected 5 fields, got {len(parts)}")
            utt_id, speaker_id, m, e_a, e_b = parts
            records.append(
                EvalRecord(
                    utt_id=utt_id,
                    speaker_id=speaker_id,
                    m=_parse_count(m, "m", path, line_no),
                    e_a=_parse_count(e_a, "e_a", path, line_no),
                    e_b=_parse_count(e_b, "e_b", path, line_no),
                )
            )
    dataset = EvalDataset(tuple(records), name or path.stem)
    log.info(f"Loaded {len(dataset)} eval records from {path}")
    return dataset


def write_eval_records(dataset: EvalDataset, path: str | Path) -> None:
    """Write the eval TSV; ``load_eval_records`` reads it back unchanged."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(EVAL_HEADER + "\n")
        for r in dataset.records:
            f.write(f"{r.utt_id}\t{r.speaker_id}\t{r.m}\t{r.e_a}\t{r.e_b}\n")


def detect_embedding_format(path: str | Path) -> str:
    """Binary files start with the ``WSEB`` magic; anything else is TSV."""
    with open(path, "rb") as f:
        return "raw-binary" if f.read(4) == EMBEDDING_MAGIC else "tsv"


def _load_embeddings_tsv(path: Path) -> EmbeddingMatrix:
    ids: list[str] = []
    rows: list[list[float]] = []
    width = None
    with open(path, encoding="utf-8") as f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if width is None:
                width = len(parts) - 1
            elif len(parts) - 1 != width:
                raise ParseError(
                    path, line_no, f"ragged row: expected {width} values, got {len(parts) - 1}"
                )
            try:
                values = [float(v) for v in parts[1:]]
            except ValueError as e:
                raise ParseError(path, line_no, f"invalid number: {e}") from e
            ids.append(parts[0])
            rows.append(values)
    if not rows:
        raise ValidationError(f"no embedding rows in {path}")
    return EmbeddingMatrix(tuple(ids), np.array(rows, dtype=np.float64))


def _load_embeddings_binary(path: Path) -> EmbeddingMatrix:
    data = path.read_bytes()
    if data[:4] != EMBEDDING_MAGIC:
        raise ParseError(path, 1, "missing WSEB magic")
    try:
        n, dim = struct.unpack_from("<II", data, 4)
        offset = 12
        ids = []
        for _ in range(n):
            (length,) = struct.unpack_from("<H", data, offset)
            offset += 2
            ids.append(data[offset : offset + length].decode("utf-8"))
            offset += length
    except (struct.error, UnicodeDecodeError) as e:
        raise ParseError(path, 1, f"corrupt header: {e}") from e
    expected = offset + n * dim * 8
    if len(data) != expected:
        raise ParseError(path, 1, f"expected {expected} bytes, got {len(data)}")
    values = np.frombuffer(data, dtype="<f8", count=n * dim, offset=offset).reshape(n, dim)
    return EmbeddingMatrix(tuple(ids), values.astype(np.float64))


def load_embeddings(path: str | Path, format: str | None = None) -> EmbeddingMatrix:
    """Load embeddings from TSV or raw-binary; the format is sniffed when omitted."""
    path = Path(path)
    fmt = format or detect_embedding_format(path)
    if fmt not in FORMATS:
        raise ValidationError(f"unknown embedding format '{fmt}'")
    emb = _load_embeddings_binary(path) if fmt == "raw-binary" else _load_embeddings_tsv(path)
    log.info(f"Loaded {emb.n} embeddings of dimension {emb.dim} from {path} ({fmt})")
    return emb


def write_embeddings(emb: EmbeddingMatrix, path: str | Path, format: str = "raw-binary") -> None:
    """Write embeddings in either supported format."""
    if format == "tsv":
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for utt_id, row in zip(emb.utt_ids, emb.values):
                f.write(utt_id + "\t" + "\t".join(repr(float(v)) for v in row) + "\n")
        return
    if format != "raw-binary":
        raise ValidationError(f"unknown embedding format '{format}'")
    with open(path, "wb") as f:
        f.write(EMBEDDING_MAGIC)
        f.write(struct.pack("<II", emb.n, emb.dim))
        for utt_id in emb.utt_ids:
            encoded = utt_id.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
        f.write(np.ascontiguousarray(emb.values, dtype="<f8").tobytes())


def group_by_speaker(dataset: EvalDataset) -> SpeakerPartition:
    """Group utterance indices by speaker, preserving dataset order."""
    groups: dict[str, list[int]] = {}
    for i, record in enumerate(dataset.records):
        groups.setdefault(record.speaker_id, []).append(i)
    return SpeakerPartition({k: tuple(v) for k, v in groups.items()})


def align_embeddings(
    dataset: EvalDataset, emb: EmbeddingMatrix, indices: Sequence[int] | None = None
) -> EmbeddingMatrix:
    """Embedding rows for the dataset's utterances (or a subset), in dataset order."""
    if indices is None:
        indices = range(len(dataset))
    return emb.rows_for([dataset.records[i].utt_id for i in indices])


def concat_embeddings(first: EmbeddingMatrix, second: EmbeddingMatrix) -> EmbeddingMatrix:
    """Column-wise concatenation aligned on ``first``'s utt_id order."""
    other = second.rows_for(first.utt_ids)
    return EmbeddingMatrix(first.utt_ids, np.hstack([first.values, other.values]))
