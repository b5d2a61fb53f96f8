"""Observation data: CSV ingestion, validation, interaction columns, summaries."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import DataError
from .model_spec import ModelSpec

INTERACTION_SEP = "*"


@dataclass(frozen=True)
class Derivation:
    """``name`` is the elementwise product of columns ``a`` and ``b``."""

    name: str
    a: str
    b: str


@dataclass(frozen=True)
class Observation:
    chosen: int | None
    values: np.ndarray


@dataclass(frozen=True, eq=False)
class Dataset:
    columns: tuple[str, ...]
    binary: tuple[bool, ...]
    values: np.ndarray  # (N, K) float64
    chosen: np.ndarray | None = None  # (N,) int64 alternative indices
    alternatives: tuple[str, ...] = ()
    label_column: str | None = None
    source: str | None = None
    derivations: tuple[Derivation, ...] = field(default=())

    def __post_init__(self):
        if len(set(self.columns)) != len(self.columns):
            raise DataError("column names must be unique")
        if self.values.ndim != 2 or self.values.shape[1] != len(self.columns):
            raise DataError("values must be an (N, #columns) array")
        if len(self.binary) != len(self.columns):
            raise DataError("one binary flag per column required")
        if self.chosen is not None and len(self.chosen) != len(self.values):
            raise DataError("chosen must have one entry per observation")
        self.values.setflags(write=False)
        if self.chosen is not None:
            self.chosen.setflags(write=False)

    def __len__(self):
        return self.values.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        same_chosen = (self.chosen is None and other.chosen is None) or (
            self.chosen is not None
            and other.chosen is not None
            and np.array_equal(self.chosen, other.chosen)
        )
        return (
            self.columns == other.columns
            and self.binary == other.binary
            and self.alternatives == other.alternatives
            and self.label_column == other.label_column
            and self.derivations == other.derivations
            and self.values.shape == other.values.shape
            and np.array_equal(self.values, other.values)
            and same_chosen
        )

    __hash__ = None

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self.columns.index(name)]
        except ValueError:
            raise DataError(f"unknown column '{name}'") from None

    def is_binary(self, name: str) -> bool:
        if name not in self.columns:
            raise DataError(f"unknown column '{name}'")
        return self.binary[self.columns.index(name)]

    def observation(self, n: int) -> Observation:
        chosen = None if self.chosen is None else int(self.chosen[n])
        return Observation(chosen, self.values[n])

    @property
    def observations(self) -> list[Observation]:
        return [self.observation(n) for n in range(len(self))]

    def row(self, n: int) -> dict[str, float]:
        return dict(zip(self.columns, self.values[n].tolist()))

    def concat(self, other: "Dataset") -> "Dataset":
        if self.columns != other.columns or self.alternatives != other.alternatives:
            raise DataError("datasets have different schemas")
        chosen = None
        if self.chosen is not None and other.chosen is not None:
            chosen = np.concatenate([self.chosen, other.chosen])
        return replace(self, values=np.vstack([self.values, other.values]), chosen=chosen)

    def with_forced(self, name: str, value: float) -> "Dataset":
        """Counterfactual copy with ``name`` set to ``value`` everywhere and
        every derived column that depends on it recomputed."""
        values = np.array(self.values)
        values[:, self.columns.index(name)] = value
        for d in self.derivations:
            if d.name == name:
                continue
            k = self.columns.index(d.name)
            values[:, k] = values[:, self.columns.index(d.a)] * values[:, self.columns.index(d.b)]
        return replace(self, values=values)


def _interaction_factors(name: str) -> tuple[str, str] | None:
    parts = name.split(INTERACTION_SEP)
    if len(parts) == 2 and all(parts):
        return parts[0], parts[1]
    return None


def derive_interaction(ds: Dataset, a: str, b: str, name: str | None = None) -> Dataset:
    """Append ``name`` (default ``"a*b"``) as the elementwise product of two columns."""
    name = name or f"{a}{INTERACTION_SEP}{b}"
    for col in (a, b):
        if col not in ds.columns:
            raise DataError(f"unknown column '{col}'", column=col)
    if name in ds.columns:
        raise DataError(f"column '{name}' already exists", column=name)
    product = ds.column(a) * ds.column(b)
    return replace(
        ds,
        columns=ds.columns + (name,),
        binary=ds.binary + (ds.is_binary(a) and ds.is_binary(b),),
        values=np.column_stack([ds.values, product]),
        derivations=ds.derivations + (Derivation(name, a, b),),
    )


def _parse_cell(text: str, row: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"cannot parse '{text}' as a number", row=row, column=column) from None
    if not math.isfinite(value):
        raise DataError(f"non-finite value '{text}'", row=row, column=column)
    return value


def load_dataset(
    path,
    spec: ModelSpec | None = None,
    *,
    label_column: str | None = None,
    continuous: Iterable[str] = (),
    label_map: Mapping[str, str] | None = None,
) -> Dataset:
    """Read a comma-separated file with a header row.

    With a ``spec``, the label column is mapped onto alternative indices by
    exact match (after the optional ``label_map``), every referenced column
    must exist and is declared binary unless listed in ``continuous``.
    Referenced names of the form ``a*b`` that are absent from the file are
    derived as interactions. Without a spec the file is read for summaries
    only, skipping ``label_column`` if given.
    """
    path = Path(path)
    continuous = set(continuous)
    label_map = dict(label_map or {})
    if spec is not None:
        label_column = spec.label_column

    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("file is empty; a header row is required") from None
        rows = [r for r in reader if r]

    if len(set(header)) != len(header):
        raise DataError("duplicate column names in header")
    if label_column is not None and label_column not in header:
        raise DataError(f"missing label column '{label_column}'", column=label_column)

    referenced = spec.columns() if spec is not None else ()
    to_derive = []
    for name in referenced:
        if name in header:
            continue
        factors = _interaction_factors(name)
        if factors is None:
            raise DataError(f"missing column '{name}'", column=name)
        to_derive.append((name, *factors))
    for name, a, b in to_derive:
        for col in (a, b):
            if col not in header:
                raise DataError(f"missing column '{col}' (needed for '{name}')", column=col)

    numeric = [c for c in header if c != label_column]
    idx = [header.index(c) for c in numeric]
    values = np.empty((len(rows), len(numeric)))
    chosen = np.empty(len(rows), dtype=np.int64) if spec is not None else None
    labels = spec.alternatives.labels if spec is not None else ()
    for r, cells in enumerate(rows, start=1):
        if len(cells) != len(header):
            raise DataError(f"expected {len(header)} cells, found {len(cells)}", row=r)
        for k, (c, j) in enumerate(zip(numeric, idx)):
            values[r - 1, k] = _parse_cell(cells[j], r, c)
        if chosen is not None:
            raw = cells[header.index(label_column)]
            label = label_map.get(raw, raw)
            if label not in labels:
                raise DataError(f"label '{raw}' is not one of {list(labels)}", row=r, column=label_column)
            chosen[r - 1] = labels.index(label)

    binary = []
    for k, c in enumerate(numeric):
        col = values[:, k]
        is01 = bool(np.all((col == 0) | (col == 1)))
        if c in referenced and c not in continuous:
            if not is01:
                bad = int(np.flatnonzero((col != 0) & (col != 1))[0])
                raise DataError(
                    f"value {col[bad]:g} in binary column (must be 0 or 1)", row=bad + 1, column=c
                )
            binary.append(True)
        elif c in continuous:
            binary.append(False)
        else:
            binary.append(is01)

    ds = Dataset(
        columns=tuple(numeric),
        binary=tuple(binary),
        values=values,
        chosen=chosen,
        alternatives=tuple(labels),
        label_column=label_column if spec is not None else None,
        source=str(path),
    )
    # Columns already present in the file but named like interactions are
    # tracked as derived so counterfactual flips of their factors propagate.
    for name in header:
        factors = _interaction_factors(name)
        if factors and name in ds.columns and all(f in ds.columns for f in factors):
            expect = ds.column(factors[0]) * ds.column(factors[1])
            if not np.array_equal(expect, ds.column(name)):
                bad = int(np.flatnonzero(expect != ds.column(name))[0])
                raise DataError(f"'{name}' is not the product of its factors", row=bad + 1, column=name)
            ds = replace(ds, derivations=ds.derivations + (Derivation(name, *factors),))
    for name, a, b in to_derive:
        ds = derive_interaction(ds, a, b, name)
    return ds


def _format_number(x: float) -> str:
    return str(int(x)) if float(x).is_integer() and abs(x) < 2**53 else repr(float(x))


def write_dataset(ds: Dataset, path) -> None:
    """Write ``ds`` as CSV; ``load_dataset`` with the same spec reads it back equal."""
    header = list(ds.columns)
    if ds.chosen is not None:
        header.append(ds.label_column or "outcome")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for n in range(len(ds)):
            row = [_format_number(v) for v in ds.values[n]]
            if ds.chosen is not None:
                row.append(ds.alternatives[ds.chosen[n]])
            w.writerow(row)


@dataclass(frozen=True)
class SummaryRow:
    column: str
    mean: float
    sd: float
    max: float
    min: float


@dataclass(frozen=True)
class SummaryTable:
    rows: tuple[SummaryRow, ...]

    def to_records(self) -> list[dict]:
        return [
            {"column": r.column, "mean": r.mean, "sd": r.sd, "max": r.max, "min": r.min}
            for r in self.rows
        ]

    def to_text(self) -> str:
        width = max([len("Variable")] + [len(r.column) for r in self.rows])
        lines = [f"{'Variable':<{width}}  {'Mean':>8}  {'Std. Dev.':>9}  {'Max.':>8}  {'Min.':>8}"]
        for r in self.rows:
            lines.append(
                f"{r.column:<{width}}  {r.mean:>8.3f}  {r.sd:>9.3f}  {r.max:>8.4g}  {r.min:>8.4g}"
            )
        return "\n".join(lines) + "\n"


def summarize(ds: Dataset) -> SummaryTable:
    """Per-column mean, population standard deviation (divisor N), max, min."""
    if len(ds) == 0:
        raise DataError("cannot summarize an empty dataset")
    rows = []
    for k, c in enumerate(ds.columns):
        col = ds.values[:, k]
        rows.append(SummaryRow(c, float(col.mean()), float(col.std(ddof=0)), float(col.max()), float(col.min())))
    return SummaryTable(tuple(rows))
