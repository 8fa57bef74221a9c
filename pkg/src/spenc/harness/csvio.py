"""Portable CSV output with comment headers.

Layout: `# key = value` metadata lines first, matrices additionally carry
`# rows=M` and `# cols=N`, then dense comma-separated data rows. Floats are
serialized with 9 significant digits in scientific notation, which re-parses
within one unit in the last serialized digit and is idempotent after the
first round trip. UTF-8, LF line endings, no trailing whitespace.
"""

from __future__ import annotations

import numpy as np


class CsvFormatError(ValueError):
    """A CSV file does not follow the expected layout."""


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.8e}"
    return str(value)


def _meta_lines(meta: dict) -> list[str]:
    return [f"# {key} = {format_value(value)}" for key, value in meta.items()]


def write_table(path, meta: dict, columns: list[str], rows) -> None:
    """Write metadata, one column-name line, then one CSV line per row."""
    lines = _meta_lines(meta)
    lines.append(",".join(columns))
    for row in rows:
        if len(row) != len(columns):
            raise CsvFormatError(f"row has {len(row)} cells for {len(columns)} columns")
        lines.append(",".join(format_value(cell) for cell in row))
    _write_lines(path, lines)


def write_matrix(path, matrix: np.ndarray, meta: dict) -> None:
    """Write metadata plus `# rows=`/`# cols=` and the dense matrix body."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise CsvFormatError(f"matrices must be 2-D, got shape {matrix.shape}")
    lines = _meta_lines(meta)
    lines.append(f"# rows={matrix.shape[0]}")
    lines.append(f"# cols={matrix.shape[1]}")
    for row in matrix:
        lines.append(",".join(format_value(cell) for cell in row))
    _write_lines(path, lines)


def _write_lines(path, lines: list[str]) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def _split_lines(path):
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = handle.read()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    meta: dict[str, str] = {}
    body: list[str] = []
    for line in raw.splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            text = line[1:].strip()
            if "=" in text:
                key, _, value = text.partition("=")
                meta[key.strip()] = value.strip()
            continue
        body.append(line)
    return meta, body


def read_table(path):
    """Read a table written by :func:`write_table`.

    Returns ``(meta, columns, rows)`` with every cell parsed as float.
    """
    meta, body = _split_lines(path)
    if not body:
        raise CsvFormatError(f"{path}: no column header found")
    columns = body[0].split(",")
    rows = []
    for line in body[1:]:
        cells = line.split(",")
        if len(cells) != len(columns):
            raise CsvFormatError(f"{path}: row width {len(cells)} != {len(columns)} columns")
        rows.append([float(cell) for cell in cells])
    return meta, columns, rows


def read_matrix(path):
    """Read a matrix written by :func:`write_matrix`; returns ``(meta, array)``."""
    meta, body = _split_lines(path)
    try:
        n_rows = int(meta["rows"])
        n_cols = int(meta["cols"])
    except (KeyError, ValueError) as exc:
        raise CsvFormatError(f"{path}: missing or invalid rows=/cols= header") from exc
    if len(body) != n_rows:
        raise CsvFormatError(f"{path}: found {len(body)} data rows, header says {n_rows}")
    data = np.empty((n_rows, n_cols))
    for i, line in enumerate(body):
        cells = line.split(",")
        if len(cells) != n_cols:
            raise CsvFormatError(f"{path}: row {i} has {len(cells)} cells, header says {n_cols}")
        data[i] = [float(cell) for cell in cells]
    return meta, data
