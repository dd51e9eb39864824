"""Independent-block inference from precision zero-patterns."""

import logging
import statistics
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

from .config import GlassoConfig, NonparanormalConfig
from .errors import ParseError, SolverError, ValidationError
from .eval_data import EmbeddingMatrix, EvalDataset, SpeakerPartition, align_embeddings
from .glasso import PrecisionEstimate, estimate_precision
from .parallel import ordered_map
from .unionfind import components

log = logging.getLogger(__name__)

PROVENANCES = ("speaker", "inferred", "singleton", "file", "truth")


@dataclass(frozen=True)
class UtteranceGraph:
    """Undirected graph; edges are (i, j) pairs with i < j."""

    n: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self) -> None:
        for i, j in self.edges:
            if i == j:
                raise ValidationError(f"self-loop at vertex {i}")
            if not (0 <= i < j < self.n):
                raise ValidationError(f"edge ({i}, {j}) must satisfy 0 <= i < j < {self.n}")


@dataclass(frozen=True)
class SpeakerBlockStats:
    """Per-speaker block diagnostics."""

    speaker_id: str
    n_utts: int
    n_blocks: int
    lambda_used: float | None = None

    @property
    def ratio(self) -> float:
        return self.n_blocks / self.n_utts


@dataclass(frozen=True)
class BlockPartition:
    """Disjoint blocks of global utterance indices in canonical order."""

    blocks: tuple[tuple[int, ...], ...]
    provenance: str = "inferred"
    stats: tuple[SpeakerBlockStats, ...] = ()

    def __post_init__(self) -> None:
        if self.provenance not in PROVENANCES:
            raise ValidationError(f"unknown block provenance '{self.provenance}'")
        if any(len(b) == 0 for b in self.blocks):
            raise ValidationError("blocks must be non-empty")
        canonical = tuple(sorted((tuple(sorted(b)) for b in self.blocks), key=lambda b: b[0]))
        object.__setattr__(self, "blocks", canonical)

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def n_items(self) -> int:
        return sum(len(b) for b in self.blocks)

    def covers(self, n: int) -> bool:
        """True iff the blocks are disjoint and their union is exactly 0..n-1."""
        flat = sorted(i for b in self.blocks for i in b)
        return flat == list(range(n))

    def median_ratio(self) -> float | None:
        if not self.stats:
            return None
        return statistics.median(s.ratio for s in self.stats)


def assert_partition_covers(partition: BlockPartition, n: int) -> None:
    if not partition.covers(n):
        raise ValidationError(f"block partition does not cover exactly the {n} dataset utterances")


def graph_from_precision(est: PrecisionEstimate) -> UtteranceGraph:
    """Edge (i, j) iff theta[i, j] != 0; no tolerance is applied."""
    nonzero = est.theta != 0
    if (nonzero != nonzero.T).any():
        raise SolverError("precision matrix has an asymmetric zero-pattern")
    return UtteranceGraph(n=est.n, edges=frozenset(est.edges()))


def connected_components(g: UtteranceGraph) -> BlockPartition:
    """Blocks are the connected components of ``g``."""
    groups = components(g.n, sorted(g.edges))
    return BlockPartition(tuple(tuple(c) for c in groups), provenance="inferred")


def singleton_blocks(n: int) -> BlockPartition:
    """Every utterance in its own block (vanilla bootstrap)."""
    return BlockPartition(tuple((i,) for i in range(n)), provenance="singleton")


def speaker_blocks(partition: SpeakerPartition) -> BlockPartition:
    """One block per speaker (speaker-level blockwise bootstrap)."""
    stats = tuple(SpeakerBlockStats(s, len(idx), 1) for s, idx in partition.groups.items())
    return BlockPartition(tuple(partition.groups.values()), provenance="speaker", stats=stats)


def _infer_group(
    dataset: EvalDataset,
    embeddings: EmbeddingMatrix,
    indices: Sequence[int],
    glasso_cfg: GlassoConfig,
    nonpara: NonparanormalConfig,
    workers: int | None,
) -> tuple[list[tuple[int, ...]], PrecisionEstimate | None]:
    if len(indices) == 1:
        return [(indices[0],)], None
    emb = align_embeddings(dataset, embeddings, indices)
    est = estimate_precision(emb, glasso_cfg, nonpara, workers=workers)
    local = connected_components(graph_from_precision(est))
    return [tuple(indices[i] for i in block) for block in local.blocks], est


def infer_blocks(
    dataset: EvalDataset,
    embeddings: EmbeddingMatrix,
    partition: SpeakerPartition,
    glasso_cfg: GlassoConfig,
    nonpara: NonparanormalConfig | None = None,
    workers: int | None = 1,
    global_graph: bool = False,
    estimates: dict[str, PrecisionEstimate] | None = None,
) -> BlockPartition:
    """Estimate a graph per speaker and collect its connected components.

    Graphs never span speakers unless ``global_graph`` is set, in which case
    one graph is estimated over every utterance (group key ``"*"``). When
    ``estimates`` is given it receives each group's precision estimate, whose
    row order is the group's dataset order.
    """
    nonpara = nonpara or NonparanormalConfig()
    # fail on a missing row before spending time on any solve
    align_embeddings(dataset, embeddings)

    if global_graph:
        groups = {"*": tuple(range(len(dataset)))}
    else:
        groups = dict(partition.groups)

    # a pool is used across speakers or inside CV, never both
    inner_workers = 1 if len(groups) > 1 else workers

    def run(
        item: tuple[str, tuple[int, ...]]
    ) -> tuple[list[tuple[int, ...]], PrecisionEstimate | None]:
        return _infer_group(dataset, embeddings, item[1], glasso_cfg, nonpara, inner_workers)

    results = ordered_map(run, list(groups.items()), workers if len(groups) > 1 else 1)

    blocks: list[tuple[int, ...]] = []
    stats = []
    for (speaker, indices), (speaker_blocks_, est) in zip(groups.items(), results):
        blocks.extend(speaker_blocks_)
        lam = None if est is None else est.lambda_used
        stats.append(SpeakerBlockStats(speaker, len(indices), len(speaker_blocks_), lam))
        if est is None:
            continue
        if estimates is not None:
            estimates[speaker] = est
        log.info(
            f"Speaker {speaker}: {len(indices)} utterances -> {len(speaker_blocks_)} blocks "
            f"(lambda={est.lambda_used:.4g})"
        )

    result = BlockPartition(tuple(blocks), provenance="inferred", stats=tuple(stats))
    assert_partition_covers(result, len(dataset))
    log.info(
        f"Inferred {len(result)} blocks over {len(dataset)} utterances "
        f"(median block/utterance ratio {result.median_ratio():.3f})"
    )
    return result


def write_blocks_file(partition: BlockPartition, dataset: EvalDataset, path: str | Path) -> None:
    """Write ``block_id<TAB>utt_id`` lines in canonical block order."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("# block_id\tutt_id\n")
        for block_id, block in enumerate(partition.blocks):
            for i in block:
                f.write(f"{block_id}\t{dataset.records[i].utt_id}\n")


def load_blocks_file(path: str | Path, dataset: EvalDataset) -> BlockPartition:
    """Read externally supplied blocks; they must cover the dataset exactly."""
    path = Path(path)
    index = {utt_id: i for i, utt_id in enumerate(dataset.utt_ids)}
    blocks: dict[str, list[int]] = {}
    seen: set[str] = set()
    with open(path, encoding="utf-8") as f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(path, line_no, f"expected 2 fields, got {len(parts)}")
            block_id, utt_id = parts
            if utt_id not in index:
                raise ParseError(path, line_no, f"utt_id '{utt_id}' is not in the eval dataset")
            if utt_id in seen:
                raise ParseError(path, line_no, f"utt_id '{utt_id}' assigned to two blocks")
            seen.add(utt_id)
            blocks.setdefault(block_id, []).append(index[utt_id])
    missing = [u for u in dataset.utt_ids if u not in seen]
    if missing:
        raise ValidationError(f"blocks file {path} does not assign every utterance", missing[:10])
    partition = BlockPartition(tuple(tuple(b) for b in blocks.values()), provenance="file")
    log.info(f"Loaded {len(partition)} blocks from {path}")
    return partition


def speaker_block_ratios(partition: BlockPartition) -> list[tuple[str, int, int, float]]:
    """Rows of (speaker_id, n_utts, n_blocks, ratio) for bar-chart output."""
    return [(s.speaker_id, s.n_utts, s.n_blocks, s.ratio) for s in partition.stats]
