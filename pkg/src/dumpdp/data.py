"""Datasets: synthetic generators, CSV ingestion and ground-truth frequencies."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .core import Domain, as_domain, values_array
from .errors import DimensionMismatch, EmptyFile, EmptyHistogram, MalformedRow, MissingColumn
from .protocols import RNGLike, as_generator


@dataclass(frozen=True)
class Dataset:
    """User values in ``1..k`` plus the raw label behind each index.

    ``labels[i]`` is the raw label encoded as ``i + 1``.
    """

    values: np.ndarray
    domain: Domain
    labels: tuple
    source: Optional[str] = None

    def __post_init__(self):
        domain = as_domain(self.domain)
        arr = values_array(self.values, domain)
        arr.setflags(write=False)
        object.__setattr__(self, "domain", domain)
        object.__setattr__(self, "values", arr)
        if len(self.labels) != domain.k:
            raise DimensionMismatch(f"{len(self.labels)} labels for k={domain.k}")

    @property
    def n(self) -> int:
        return int(self.values.size)

    @property
    def k(self) -> int:
        return self.domain.k

    def encode(self, label) -> int:
        return self.labels.index(label) + 1

    def decode(self, value: int) -> object:
        return self.labels[self.domain.check(value) - 1]

    def metadata(self) -> dict:
        digest = hashlib.sha256(json.dumps([str(x) for x in self.labels]).encode()).hexdigest()
        return {
            "n": self.n,
            "k": self.k,
            "label_order": "first-appearance",
            "label_map_sha256": digest,
            "source": self.source,
        }


@dataclass(frozen=True)
class FrequencyVector:
    f: np.ndarray

    def __post_init__(self):
        f = np.array(self.f, dtype=np.float64)
        f.setflags(write=False)
        object.__setattr__(self, "f", f)

    @property
    def k(self) -> int:
        return int(self.f.size)


def _identity(domain: Domain) -> tuple:
    return tuple(range(1, domain.k + 1))


def synth_uniform(n: int, domain, rng: RNGLike) -> Dataset:
    """``n`` i.i.d. uniform values."""
    domain = as_domain(domain)
    if n < 1:
        raise EmptyHistogram(f"n must be >= 1, got {n}")
    values = as_generator(rng).integers(1, domain.k + 1, size=n)
    return Dataset(values, domain, _identity(domain), source=f"uniform:{n},{domain.k}")


def synth_from_histogram(counts: Sequence[int], rng: RNGLike) -> Dataset:
    """A shuffled dataset whose value counts are exactly ``counts``."""
    counts = np.asarray(counts, dtype=np.int64)
    if counts.ndim != 1 or (counts < 0).any() or counts.sum() < 1:
        raise EmptyHistogram("counts must be non-negative with a positive total")
    domain = Domain(counts.size)
    values = np.repeat(np.arange(1, domain.k + 1), counts)
    return Dataset(as_generator(rng).permutation(values), domain, _identity(domain), source="histogram")


def load_csv(
    path: Union[str, Path],
    column: Union[str, int] = 0,
    max_rows: Optional[int] = None,
    has_header: Optional[bool] = None,
) -> Dataset:
    """Read one categorical column from a comma-separated UTF-8 file.

    Distinct labels are numbered ``1..k`` in order of first appearance.

    Args:
        path: CSV file.
        column: header name or zero-based column index.
        max_rows: stop after this many data rows.
        has_header: whether the first row is a header; defaults to ``True``
            when ``column`` is a name and ``False`` otherwise.

    Raises:
        MissingColumn: ``column`` is not in the header.
        EmptyFile: no data rows.
        MalformedRow: a row lacks the column or has an empty value.
    """
    if has_header is None:
        has_header = isinstance(column, str)
    codes: dict = {}
    values = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        index = column
        if has_header:
            header = next(reader, None)
            if header is None:
                raise EmptyFile(f"{path} is empty")
            if isinstance(column, str):
                names = [h.strip() for h in header]
                if column not in names:
                    raise MissingColumn(f"column {column!r} not in header {names}")
                index = names.index(column)
            elif not 0 <= column < len(header):
                raise MissingColumn(f"column index {column} out of range for {len(header)} columns")
        elif isinstance(column, str):
            raise MissingColumn("a named column needs a header row")
        for row in reader:
            if max_rows is not None and len(values) >= max_rows:
                break
            if not row:
                continue
            if index >= len(row):
                raise MalformedRow(reader.line_num, f"has {len(row)} fields, column {index} missing")
            label = row[index].strip()
            if not label:
                raise MalformedRow(reader.line_num, "empty value")
            values.append(codes.setdefault(label, len(codes) + 1))
    if not values:
        raise EmptyFile(f"{path} has no data rows")
    return Dataset(np.asarray(values, dtype=np.int64), Domain(len(codes)), tuple(codes), source=str(path))


def true_frequencies(data: Dataset) -> FrequencyVector:
    counts = np.bincount(data.values, minlength=data.k + 1)[1:]
    return FrequencyVector(counts / data.n)
