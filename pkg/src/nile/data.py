"""Observational datasets ``(X, Y, A)`` and their CSV form."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

COLUMNS = ("x", "y", "a")


class DataFormatError(ValueError):
    """Malformed dataset file; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line


@dataclass(frozen=True, eq=False)
class Dataset:
    x: np.ndarray
    y: np.ndarray
    a: np.ndarray
    # Latent confounder, only filled in when a simulator is asked to expose it.
    h: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("x", "y", "a"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim != 1:
                raise ValueError(f"column {name} must be one-dimensional")
            object.__setattr__(self, name, arr)
        if not (len(self.x) == len(self.y) == len(self.a)):
            raise ValueError("columns x, y, a must have equal length")

    def __len__(self) -> int:
        return len(self.x)

    def equals(self, other: "Dataset") -> bool:
        return all(np.array_equal(getattr(self, c), getattr(other, c)) for c in COLUMNS)


def format_float(value: float) -> str:
    return format(float(value), ".17g")


def write_csv(data: Dataset, path) -> None:
    Path(path).write_text(dataset_to_csv(data))


def dataset_to_csv(data: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in zip(data.x, data.y, data.a):
        writer.writerow([format_float(v) for v in row])
    return buf.getvalue()


def read_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        return parse_csv(fh.read())


def parse_csv(text: str) -> Dataset:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataFormatError("file is empty", 1) from None
    header = [h.strip().lower() for h in header]
    missing = [c for c in COLUMNS if c not in header]
    if missing:
        raise DataFormatError(f"missing column(s): {', '.join(missing)}", 1)
    idx = [header.index(c) for c in COLUMNS]

    cols = ([], [], [])
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise DataFormatError(f"expected {len(header)} fields, found {len(row)}", line_no)
        for dest, j in zip(cols, idx):
            try:
                value = float(row[j])
            except ValueError:
                raise DataFormatError(f"non-numeric value {row[j]!r} in column {header[j]}", line_no) from None
            if not np.isfinite(value):
                raise DataFormatError(f"non-finite value in column {header[j]}", line_no)
            dest.append(value)
    return Dataset(*(np.array(c) for c in cols))
