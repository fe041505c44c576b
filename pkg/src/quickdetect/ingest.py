"""Turn connection-attempt timestamps or count files into a binned series."""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import ConfigError, DomainError, OrderingError, ParseError

DEFAULT_BIN_WIDTH_US = 20_000
HEADER = ("bin_index", "count")


@dataclass(frozen=True, slots=True)
class BinnedCount:
    bin_index: int
    count: int


def bin_events(events: Iterable[int], bin_width: int = DEFAULT_BIN_WIDTH_US) -> list[BinnedCount]:
    """Count events per half-open bin ``[k*w, (k+1)*w)``.

    Timestamps are integer microseconds and need not be sorted. The output
    covers bins ``0 .. max_ts // bin_width`` with empty bins present as zero.
    """
    if isinstance(bin_width, bool) or not isinstance(bin_width, (int, np.integer)) or bin_width <= 0:
        raise ConfigError(f"bin_width must be a positive integer, got {bin_width!r}")
    tally: Counter[int] = Counter()
    for ts in events:
        ts = int(ts)
        if ts < 0:
            raise DomainError(f"negative timestamp {ts}")
        tally[ts // bin_width] += 1
    if not tally:
        return []
    return [BinnedCount(k, tally.get(k, 0)) for k in range(max(tally) + 1)]


def parse_events(stream: TextIO) -> list[int]:
    """Read newline-delimited integer timestamps; blank and ``#`` lines are skipped."""
    out = []
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            ts = int(line)
        except ValueError:
            raise ParseError(f"not an integer timestamp: {line!r}", lineno) from None
        if ts < 0:
            raise DomainError(f"line {lineno}: negative timestamp {ts}")
        out.append(ts)
    return out


def _to_int(field: str, lineno: int) -> int:
    field = field.strip()
    try:
        return int(field)
    except ValueError:
        pass
    # accept "3.0" style integers written by other tools
    try:
        value = float(field)
    except ValueError:
        raise ParseError(f"non-numeric field {field!r}", lineno) from None
    if not value.is_integer():
        raise ParseError(f"non-integer field {field!r}", lineno)
    return int(value)


def parse_counts(stream: TextIO | str, fmt: str = "auto") -> list[BinnedCount]:
    """Parse a ``bin_index,count`` CSV.

    ``fmt`` is ``"auto"`` (header optional), ``"header"`` (header required) or
    ``"headerless"``. Lines starting with ``#`` are comments.

    Raises:
        ParseError: malformed row (message carries the line number).
        OrderingError: duplicate, decreasing or non-contiguous ``bin_index``.
        DomainError: negative count.
    """
    if fmt not in ("auto", "header", "headerless"):
        raise ConfigError(f"unknown counts format {fmt!r}")
    if isinstance(stream, str):
        stream = io.StringIO(stream)

    out: list[BinnedCount] = []
    seen_data = False
    for lineno, row in enumerate(csv.reader(stream), start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if row[0].lstrip().startswith("#"):
            continue
        fields = [f.strip() for f in row]
        if not seen_data:
            seen_data = True
            is_header = tuple(f.lower() for f in fields) == HEADER
            if fmt == "header" and not is_header:
                raise ParseError("expected header 'bin_index,count'", lineno)
            if is_header:
                if fmt == "headerless":
                    raise ParseError("unexpected header in headerless input", lineno)
                continue
        if len(fields) != 2:
            raise ParseError(f"expected 2 columns, got {len(fields)}", lineno)
        idx, count = _to_int(fields[0], lineno), _to_int(fields[1], lineno)
        if idx < 0:
            raise DomainError(f"line {lineno}: negative bin_index {idx}")
        if count < 0:
            raise DomainError(f"line {lineno}: negative count {count}")
        if out:
            prev = out[-1].bin_index
            if idx <= prev:
                raise OrderingError(f"line {lineno}: bin_index {idx} after {prev}")
            if idx != prev + 1:
                raise OrderingError(f"line {lineno}: gap between bin {prev} and {idx}")
        out.append(BinnedCount(idx, count))
    if fmt == "header" and not seen_data:
        raise ParseError("missing header", 1)
    return out


def serialize_counts(bins: Sequence[BinnedCount], comment: str | None = None) -> str:
    lines = []
    if comment:
        lines.extend(f"# {c}" for c in comment.splitlines())
    lines.append(",".join(HEADER))
    lines.extend(f"{b.bin_index},{b.count}" for b in bins)
    return "\n".join(lines) + "\n"


def counts_array(bins: Sequence[BinnedCount]) -> np.ndarray:
    return np.fromiter((b.count for b in bins), dtype=float, count=len(bins))
