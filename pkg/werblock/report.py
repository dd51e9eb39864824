"""Report rendering: rich text tables for people, TSV for machines.

Both renderers are pure functions of their inputs, so the same run
produces the same bytes no matter how many workers computed it.
"""

import io
import sys
from dataclasses import dataclass
from pathlib import Path

from rich.console import Console
from rich.markup import escape
from rich.table import Table

from .blocks import BlockPartition, speaker_block_ratios
from .resampling import ConfidenceInterval
from .simulation import ConsistencyRow

# WER-valued statistics are reported in percent
PERCENT_SCALE = 100.0

TSV_COLUMNS = (
    "statistic",
    "point",
    "lower",
    "upper",
    "level",
    "method",
    "estimator",
    "k_blocks",
    "bboot",
    "seed",
)

TEXT_WIDTH = 120


@dataclass(frozen=True)
class MethodResult:
    """Intervals produced by one resampling method."""

    method: str
    estimator: str
    k_blocks: int
    bboot: int
    seed: int
    intervals: tuple[ConfidenceInterval, ...]


def _num(value: float) -> str:
    return f"{value * PERCENT_SCALE:.4f}"


def _header(effective: list[tuple[str, str]]) -> list[str]:
    return [f"# {key}={value}" for key, value in effective]


def render_tsv(
    results: list[MethodResult],
    effective: list[tuple[str, str]],
    with_width: bool = False,
) -> str:
    """One row per (method, statistic); ``#`` lines carry the effective config."""
    lines = _header(effective)
    columns = TSV_COLUMNS + (("width",) if with_width else ())
    lines.append("\t".join(columns))
    for result in results:
        for ci in result.intervals:
            row = [
                ci.statistic,
                _num(ci.point),
                _num(ci.lower),
                _num(ci.upper),
                f"{ci.level:g}",
                result.method,
                result.estimator,
                str(result.k_blocks),
                str(result.bboot),
                str(result.seed),
            ]
            if with_width:
                row.append(_num(ci.width))
            lines.append("\t".join(row))
    return "\n".join(lines) + "\n"


def _console(buffer: io.StringIO) -> Console:
    return Console(
        file=buffer,
        width=TEXT_WIDTH,
        color_system=None,
        force_terminal=False,
        highlight=False,
        emoji=False,
    )


def render_text(
    results: list[MethodResult],
    effective: list[tuple[str, str]],
    with_width: bool = False,
) -> str:
    """Human-readable table; WER values in percent, ``*`` marks a CI excluding 0."""
    buffer = io.StringIO()
    console = _console(buffer)
    for line in _header(effective):
        console.print(line, markup=False)

    table = Table(title="WER confidence intervals (values in %)")
    for name in ("method", "estimator", "K", "statistic", "point", "CI"):
        table.add_column(name, justify="right" if name in ("K", "point") else "left")
    if with_width:
        table.add_column("width", justify="right")
    table.add_column("sig")

    for result in results:
        for ci in result.intervals:
            significant = ci.statistic.startswith("delta") and ci.excludes_zero
            row = [
                result.method,
                result.estimator,
                str(result.k_blocks),
                ci.statistic,
                _num(ci.point),
                escape(f"[{_num(ci.lower)}, {_num(ci.upper)}]"),
            ]
            if with_width:
                row.append(_num(ci.width))
            row.append("*" if significant else "")
            table.add_row(*row)
    console.print(table)

    for result in results:
        for ci in result.intervals:
            if ci.warning:
                message = f"warning: {result.method} {ci.statistic}: {ci.warning}"
                console.print(message, markup=False)
    return buffer.getvalue()


def render_report(
    results: list[MethodResult],
    effective: list[tuple[str, str]],
    report_format: str = "text",
    with_width: bool = False,
) -> str:
    if report_format == "tsv":
        return render_tsv(results, effective, with_width)
    return render_text(results, effective, with_width)


def render_ratio_tsv(partition: BlockPartition) -> str:
    """Per-speaker block/utterance ratios (bar-chart data) plus their median."""
    lines = ["speaker_id\tn_utts\tn_blocks\tratio"]
    for speaker, n_utts, n_blocks, ratio in speaker_block_ratios(partition):
        lines.append(f"{speaker}\t{n_utts}\t{n_blocks}\t{ratio:.4f}")
    median = partition.median_ratio()
    if median is not None:
        lines.append(f"# median_ratio={median:.4f}")
    return "\n".join(lines) + "\n"


def render_consistency_tsv(rows: list[ConsistencyRow], effective: list[tuple[str, str]]) -> str:
    lines = _header(effective)
    lines.append("n\treps\tsigma_sq\tmean_sigma_hat_sq\tmse\trelative_rmse")
    for row in rows:
        lines.append(
            f"{row.n}\t{row.reps}\t{row.sigma_sq:.6e}\t{row.mean_sigma_hat_sq:.6e}"
            f"\t{row.mse:.6e}\t{row.relative_rmse:.4f}"
        )
    return "\n".join(lines) + "\n"


def write_output(text: str, out: str | Path | None) -> None:
    """Write to ``out`` or stdout; logs never reach this stream."""
    if out is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(out, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
