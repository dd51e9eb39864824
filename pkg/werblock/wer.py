"""Word alignment and WER statistics."""

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IdMismatchError, ParseError, UndefinedStatisticError, ValidationError
from .eval_data import EvalDataset, EvalRecord

log = logging.getLogger(__name__)

SYSTEMS = ("A", "B")


@dataclass(frozen=True)
class AlignmentCounts:
    """Edit operations of one minimum-cost alignment."""

    substitutions: int = 0
    insertions: int = 0
    deletions: int = 0
    reference_len: int = 0

    @property
    def total_errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions


@dataclass(frozen=True)
class WerSummary:
    """Corpus-level WERs and the B-versus-A differences."""

    wer_a: float
    wer_b: float
    delta_abs: float
    delta_rel: float | None
    total_ref_words: int
    total_err_a: int
    total_err_b: int


def tokenize(text: str) -> list[str]:
    """Split already-normalized text on whitespace."""
    return text.split()


def align_and_count(reference: Sequence[str], hypothesis: Sequence[str]) -> AlignmentCounts:
    """Levenshtein alignment with unit costs.

    The backtrace prefers the diagonal (match or substitution), then
    insertion, then deletion, so the sub/ins/del split is deterministic.
    """
    n, m = len(reference), len(hypothesis)
    dp = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        dp[i][0] = i
    for j in range(m + 1):
        dp[0][j] = j
    for i in range(1, n + 1):
        ref_word = reference[i - 1]
        row, prev = dp[i], dp[i - 1]
        for j in range(1, m + 1):
            cost = 0 if ref_word == hypothesis[j - 1] else 1
            row[j] = min(prev[j] + 1, row[j - 1] + 1, prev[j - 1] + cost)

    subs = ins = dels = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            cost = 0 if reference[i - 1] == hypothesis[j - 1] else 1
            if dp[i][j] == dp[i - 1][j - 1] + cost:
                subs += cost
                i -= 1
                j -= 1
                continue
        if j > 0 and dp[i][j] == dp[i][j - 1] + 1:
            ins += 1
            j -= 1
        else:
            dels += 1
            i -= 1

    return AlignmentCounts(substitutions=subs, insertions=ins, deletions=dels, reference_len=n)


def _totals(dataset: EvalDataset) -> tuple[int, int, int]:
    m, e_a, e_b = (int(x) for x in dataset.counts.sum(axis=0))
    return m, e_a, e_b


def compute_wer(dataset: EvalDataset, system: str = "A") -> float:
    """Corpus WER: total errors over total reference words."""
    if system not in SYSTEMS:
        raise ValidationError(f"system must be one of {SYSTEMS}, got '{system}'")
    total_m, e_a, e_b = _totals(dataset)
    if total_m == 0:
        raise UndefinedStatisticError("WER undefined: dataset has zero reference words")
    return (e_a if system == "A" else e_b) / total_m


def compute_wer_summary(dataset: EvalDataset, require_relative: bool = False) -> WerSummary:
    """WERs of both systems plus absolute and relative differences.

    ``delta_rel`` is None when system A makes no errors, unless
    ``require_relative`` asks for an error instead.
    """
    total_m, e_a, e_b = _totals(dataset)
    if total_m == 0:
        raise UndefinedStatisticError("WER undefined: dataset has zero reference words")
    delta_rel = None
    if e_a > 0:
        delta_rel = (e_b - e_a) / e_a
    elif require_relative:
        raise UndefinedStatisticError("relative WER difference undefined: system A has no errors")
    return WerSummary(
        wer_a=e_a / total_m,
        wer_b=e_b / total_m,
        delta_abs=(e_b - e_a) / total_m,
        delta_rel=delta_rel,
        total_ref_words=total_m,
        total_err_a=e_a,
        total_err_b=e_b,
    )


def load_transcripts(path: str | Path) -> dict[str, str]:
    """Read ``utt_id<TAB>text`` lines, keeping file order."""
    path = Path(path)
    transcripts: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            utt_id, sep, text = line.partition("\t")
            if not sep:
                raise ParseError(path, line_no, "expected utt_id<TAB>text")
            if utt_id in transcripts:
                raise ParseError(path, line_no, f"duplicate utt_id '{utt_id}'")
            transcripts[utt_id] = text
    return transcripts


def speaker_from_utt_id(utt_id: str) -> str:
    """LibriSpeech-style ids carry the speaker before the first '-'."""
    return utt_id.split("-", 1)[0]


def score_transcripts(
    refs: Mapping[str, str],
    hyp_a: Mapping[str, str],
    hyp_b: Mapping[str, str],
    speakers: Mapping[str, str] | None = None,
    name: str = "scored",
) -> EvalDataset:
    """Align both systems' hypotheses against the references."""
    ref_ids = set(refs)
    offenders = sorted((ref_ids ^ set(hyp_a)) | (ref_ids ^ set(hyp_b)))
    if speakers is not None:
        offenders = sorted(set(offenders) | (ref_ids - set(speakers)))
    if offenders:
        raise IdMismatchError(offenders)

    records = []
    for utt_id, ref_text in refs.items():
        ref = tokenize(ref_text)
        counts_a = align_and_count(ref, tokenize(hyp_a[utt_id]))
        counts_b = align_and_count(ref, tokenize(hyp_b[utt_id]))
        speaker = speakers[utt_id] if speakers is not None else speaker_from_utt_id(utt_id)
        records.append(
            EvalRecord(
                utt_id=utt_id,
                speaker_id=speaker,
                m=len(ref),
                e_a=counts_a.total_errors,
                e_b=counts_b.total_errors,
            )
        )
    dataset = EvalDataset(tuple(records), name)
    log.info(f"Scored {len(dataset)} utterances")
    return dataset


def replicate_statistics(sums: np.ndarray) -> np.ndarray:
    """WER statistics from (..., 3) sums of m, e_a, e_b.

    Returns (..., 4) columns wer_a, wer_b, delta_abs, delta_rel with NaN where
    a denominator is zero.
    """
    sums = np.asarray(sums, dtype=np.float64)
    m, e_a, e_b = sums[..., 0], sums[..., 1], sums[..., 2]
    out = np.full(sums.shape[:-1] + (4,), np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        has_m = m > 0
        out[..., 0] = np.where(has_m, e_a / m, np.nan)
        out[..., 1] = np.where(has_m, e_b / m, np.nan)
        out[..., 2] = np.where(has_m, (e_b - e_a) / m, np.nan)
        out[..., 3] = np.where(e_a > 0, (e_b - e_a) / e_a, np.nan)
    return out
