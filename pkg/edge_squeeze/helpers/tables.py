"""Helpers to render tables as aligned text and CSV."""
from __future__ import annotations

import csv
import io
from typing import Any, Optional, Sequence

MISSING = "-"


def format_cell(value: Any, precision: int = 4) -> str:
    """Format a single table value, absent values render as a dash."""
    if value is None:
        return MISSING
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.{precision}f}"
    if isinstance(value, int):
        return f"{value:,}"
    return str(value)


def aligned_table(
    header: Sequence[str],
    rows: Sequence[Sequence[Any]],
    precision: int = 4,
    footer: Optional[Sequence[Any]] = None,
) -> str:
    """Render rows as a text table with right aligned numeric columns."""
    body = [[format_cell(x, precision) for x in row] for row in rows]
    extra = [[format_cell(x, precision) for x in footer]] if footer else []
    widths = [
        max(len(str(col)), *(len(row[idx]) for row in body + extra))
        if body or extra
        else len(str(col))
        for idx, col in enumerate(header)
    ]

    def render(cells: Sequence[str]) -> str:
        return "  ".join(
            cell.ljust(widths[idx]) if idx == 0 else cell.rjust(widths[idx])
            for idx, cell in enumerate(cells)
        ).rstrip()

    rule = "  ".join("-" * width for width in widths)
    lines = [render([str(x) for x in header]), rule]
    lines += [render(row) for row in body]
    if extra:
        lines += [rule, render(extra[0])]
    return "\n".join(lines) + "\n"


def csv_text(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    """Render rows as CSV text, None values become empty cells."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if x is None else x for x in row])
    return buffer.getvalue()
