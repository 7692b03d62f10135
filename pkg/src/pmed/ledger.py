"""CSV export of diagnostics ledgers."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

from .errors import SnapshotError, ValidationError


def fmt(x) -> str:
    """17 significant digits, enough to round-trip a float64."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _columns(rows):
    first = rows[0]
    cols = list(type(first).COLUMNS)
    extra = sorted(getattr(first, "lq_integrals", {}) or {})
    return cols, extra


def render_diagnostics(rows, echo: str | dict | None = None) -> str:
    if not rows:
        raise ValidationError("cannot write an empty ledger")
    cols, extra = _columns(rows)
    buf = io.StringIO()
    if echo:
        lines = echo.splitlines() if isinstance(echo, str) else [f"{k} = {v}" for k, v in echo.items()]
        for line in lines:
            buf.write(f"# {line}\n" if line else "#\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols + [f"int_rho^{fmt(q)}" for q in extra])
    for row in rows:
        vals = [fmt(getattr(row, c)) for c in cols]
        vals += [fmt(row.lq_integrals[q]) for q in extra]
        writer.writerow(vals)
    return buf.getvalue()


def write_diagnostics(rows, path, echo: str | dict | None = None) -> Path:
    """CSV with ``#``-prefixed config echo, a fixed header and one line per row."""
    text = render_diagnostics(rows, echo)
    path = Path(path)
    try:
        path.write_text(text, encoding="utf-8", newline="")
    except OSError as exc:
        raise SnapshotError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def read_diagnostics(path):
    """Returns ``(comments, header, rows as float lists)``."""
    comments, body = [], []
    with open(path, encoding="utf-8", newline="") as fh:
        for line in fh:
            (comments if line.startswith("#") else body).append(line)
    reader = csv.reader(body)
    header = next(reader)
    rows = [[float(v) for v in r] for r in reader]
    return [c[1:].strip() for c in comments], header, rows
