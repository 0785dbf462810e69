"""Schema declaration, delimited-text ingestion and stratified splitting."""
from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Literal, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

ColumnKind = Literal["numeric", "categorical"]


class SchemaError(ValueError):
    pass


class DataFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Column:
    name: str
    kind: ColumnKind


@dataclass(frozen=True)
class DatasetSchema:
    """Declarative description of a delimited dataset file.

    ``value_map`` maps a column name to a {raw value: replacement} table and is
    applied before any typing or binarity check. Values absent from a column's
    table pass through unchanged.
    """

    columns: tuple[Column, ...]
    protected_attribute: str
    privileged_value: str
    label_column: str
    favorable_value: str
    delimiter: str = ","
    missing_token: str | None = None
    value_map: Mapping[str, Mapping[str, str]] = field(default_factory=dict)
    header_rows: int = 0
    name: str = "dataset"

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            dupes = sorted(n for n, c in Counter(names).items() if c > 1)
            raise SchemaError(f"duplicate column names: {dupes}")
        for c in self.columns:
            if c.kind not in ("numeric", "categorical"):
                raise SchemaError(f"column {c.name!r} has unknown kind {c.kind!r}")
        for role, col in (("protected_attribute", self.protected_attribute),
                          ("label_column", self.label_column)):
            if col not in names:
                raise SchemaError(f"{role} {col!r} is not a declared column")
        if self.protected_attribute == self.label_column:
            raise SchemaError("protected attribute and label must be different columns")
        unknown = set(self.value_map) - set(names)
        if unknown:
            raise SchemaError(f"value_map refers to unknown columns {sorted(unknown)}")
        if len(self.delimiter) != 1:
            raise SchemaError(f"delimiter must be a single character, got {self.delimiter!r}")

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def index(self, name: str) -> int:
        return self.column_names.index(name)

    def kind(self, name: str) -> ColumnKind:
        return self.columns[self.index(name)].kind

    @property
    def feature_columns(self) -> list[Column]:
        """Columns other than the protected attribute and the label."""
        skip = {self.protected_attribute, self.label_column}
        return [c for c in self.columns if c.name not in skip]

    def without(self, names: Iterable[str]) -> DatasetSchema:
        drop = set(names)
        if drop & {self.protected_attribute, self.label_column}:
            raise SchemaError("cannot drop the protected attribute or the label")
        return DatasetSchema(
            columns=tuple(c for c in self.columns if c.name not in drop),
            protected_attribute=self.protected_attribute,
            privileged_value=self.privileged_value,
            label_column=self.label_column,
            favorable_value=self.favorable_value,
            delimiter=self.delimiter,
            missing_token=self.missing_token,
            value_map={k: v for k, v in self.value_map.items() if k not in drop},
            header_rows=self.header_rows,
            name=self.name,
        )

    def with_roles(self, protected_attribute=None, privileged_value=None,
                   label_column=None, favorable_value=None) -> DatasetSchema:
        return DatasetSchema(
            columns=self.columns,
            protected_attribute=protected_attribute or self.protected_attribute,
            privileged_value=privileged_value or self.privileged_value,
            label_column=label_column or self.label_column,
            favorable_value=favorable_value or self.favorable_value,
            delimiter=self.delimiter,
            missing_token=self.missing_token,
            value_map=self.value_map,
            header_rows=self.header_rows,
            name=self.name,
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "columns": [{"name": c.name, "kind": c.kind} for c in self.columns],
            "protected_attribute": self.protected_attribute,
            "privileged_value": self.privileged_value,
            "label_column": self.label_column,
            "favorable_value": self.favorable_value,
            "delimiter": self.delimiter,
            "missing_token": self.missing_token,
            "value_map": {k: dict(v) for k, v in self.value_map.items()},
            "header_rows": self.header_rows,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> DatasetSchema:
        try:
            columns = tuple(Column(c["name"], c["kind"]) for c in doc["columns"])
            return cls(
                columns=columns,
                protected_attribute=doc["protected_attribute"],
                privileged_value=str(doc["privileged_value"]),
                label_column=doc["label_column"],
                favorable_value=str(doc["favorable_value"]),
                delimiter=doc.get("delimiter", ","),
                missing_token=doc.get("missing_token"),
                value_map={k: {str(a): str(b) for a, b in v.items()}
                           for k, v in doc.get("value_map", {}).items()},
                header_rows=int(doc.get("header_rows", 0)),
                name=doc.get("name", "dataset"),
            )
        except KeyError as e:
            raise SchemaError(f"schema is missing required field {e.args[0]!r}") from None


def load_schema(path: str | Path) -> DatasetSchema:
    with open(path) as fh:
        return DatasetSchema.from_dict(json.load(fh))


def builtin_schema(name: str) -> DatasetSchema:
    """Load one of the shipped schemas (``adult`` or ``german``)."""
    ref = resources.files("fairfilter") / "schemas" / f"{name}.schema.json"
    return DatasetSchema.from_dict(json.loads(ref.read_text()))


@dataclass(frozen=True)
class RawDataset:
    """Typed-as-text rows plus the bookkeeping needed to audit the load.

    ``row_ids`` are positional indices of data lines in the source file (dropped
    lines keep their index, so ids are unique and increasing but may have gaps).
    ``raw_protected_counts`` counts protected values over every data line,
    including those later dropped for a missing token.
    """

    schema: DatasetSchema
    rows: tuple[tuple[str, ...], ...]
    row_ids: tuple[int, ...]
    dropped: int = 0
    raw_line_count: int = 0
    raw_protected_counts: Mapping[str, int] = field(default_factory=dict)
    source: str | None = None

    def __post_init__(self):
        width = len(self.schema.columns)
        if len(self.rows) != len(self.row_ids):
            raise ValueError("rows and row_ids differ in length")
        for rid, row in zip(self.row_ids, self.rows):
            if len(row) != width:
                raise DataFormatError(f"row {rid} has {len(row)} fields, expected {width}")
        if len(set(self.row_ids)) != len(self.row_ids):
            raise ValueError("row_ids are not unique")

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list[str]:
        i = self.schema.index(name)
        return [r[i] for r in self.rows]

    def protected_counts(self) -> dict[str, int]:
        return dict(sorted(Counter(self.column(self.schema.protected_attribute)).items()))

    def label_counts(self) -> dict[str, int]:
        return dict(sorted(Counter(self.column(self.schema.label_column)).items()))

    def strata(self) -> list[tuple[str, str]]:
        """(protected value, label) per row."""
        a = self.schema.index(self.schema.protected_attribute)
        y = self.schema.index(self.schema.label_column)
        return [(r[a], r[y]) for r in self.rows]

    def take(self, positions: Sequence[int]) -> RawDataset:
        """Sub-dataset of the given row positions, kept in the given order."""
        return RawDataset(
            schema=self.schema,
            rows=tuple(self.rows[i] for i in positions),
            row_ids=tuple(self.row_ids[i] for i in positions),
            source=self.source,
        )

    def with_schema(self, schema: DatasetSchema) -> RawDataset:
        """Project rows onto the columns of ``schema`` (a subset of ours)."""
        idx = [self.schema.index(n) for n in schema.column_names]
        return RawDataset(
            schema=schema,
            rows=tuple(tuple(r[i] for i in idx) for r in self.rows),
            row_ids=self.row_ids,
            dropped=self.dropped,
            raw_line_count=self.raw_line_count,
            raw_protected_counts=self.raw_protected_counts,
            source=self.source,
        )


def _split_line(line: str, delimiter: str) -> list[str]:
    if delimiter.isspace():
        return line.split()
    return [f.strip() for f in line.split(delimiter)]


def _check_binary(values: Counter, column: str, required: str, role: str) -> None:
    if not values:
        return
    if len(values) != 2:
        raise DataFormatError(
            f"{role} column {column!r} must take exactly two values after value_map, "
            f"observed {sorted(values)}"
        )
    if required not in values:
        raise DataFormatError(
            f"{role} value {required!r} never occurs in column {column!r}; "
            f"observed {sorted(values)}"
        )


def load_csv(path: str | Path, schema: DatasetSchema) -> RawDataset:
    """Read a delimited text file according to ``schema``.

    Blank lines are ignored. Any row with a field equal to ``missing_token`` is
    dropped and counted. Raises :class:`DataFormatError` on a row of the wrong
    width (naming its line number) or on a non-binary protected/label column.
    """
    width = len(schema.columns)
    maps = [schema.value_map.get(c.name) for c in schema.columns]
    a_idx = schema.index(schema.protected_attribute)
    y_idx = schema.index(schema.label_column)

    rows, ids = [], []
    raw_protected = Counter()
    dropped = 0
    n_data = 0
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            if lineno <= schema.header_rows:
                continue
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            fields = _split_line(line, schema.delimiter)
            if len(fields) != width:
                raise DataFormatError(
                    f"{path}: line {lineno} has {len(fields)} fields, expected {width}"
                )
            fields = [m.get(f, f) if m else f for f, m in zip(fields, maps)]
            rid = n_data
            n_data += 1
            raw_protected[fields[a_idx]] += 1
            if schema.missing_token is not None and schema.missing_token in fields:
                dropped += 1
                continue
            rows.append(tuple(fields))
            ids.append(rid)

    kept_a = Counter(r[a_idx] for r in rows)
    kept_y = Counter(r[y_idx] for r in rows)
    _check_binary(kept_a, schema.protected_attribute, schema.privileged_value, "protected")
    _check_binary(kept_y, schema.label_column, schema.favorable_value, "label")
    if dropped:
        log.info("%s: dropped %d of %d rows containing %r", path, dropped, n_data,
                 schema.missing_token)
    return RawDataset(
        schema=schema,
        rows=tuple(rows),
        row_ids=tuple(ids),
        dropped=dropped,
        raw_line_count=n_data,
        raw_protected_counts=dict(sorted(raw_protected.items())),
        source=str(path),
    )


def split_train_test(data: RawDataset, test_fraction: float, seed: int) -> tuple[RawDataset, RawDataset]:
    """Stratified split on (protected value, label) cells.

    The overall test size is ``round(n * test_fraction)``; it is distributed over
    cells by largest remainder so that every cell contributes
    ``floor(n_cell * test_fraction)`` or one more row. Both halves keep file order.
    """
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    cells: dict[tuple[str, str], list[int]] = {}
    for pos, key in enumerate(data.strata()):
        cells.setdefault(key, []).append(pos)
    small = {k: len(v) for k, v in cells.items() if len(v) < 2}
    if small:
        raise ValueError(f"strata with fewer than 2 rows cannot be split: {small}")

    keys = sorted(cells)
    exact = [len(cells[k]) * test_fraction for k in keys]
    alloc = [int(np.floor(e)) for e in exact]
    target = int(round(len(data) * test_fraction))
    order = sorted(range(len(keys)), key=lambda i: (-(exact[i] - alloc[i]), i))
    for i in order[: max(0, target - sum(alloc))]:
        alloc[i] += 1

    rng = np.random.default_rng(seed)
    test_pos: list[int] = []
    for k, n_test in zip(keys, alloc):
        members = np.asarray(cells[k])
        test_pos.extend(rng.permutation(members)[:n_test].tolist())
    test_set = set(test_pos)
    train_pos = [i for i in range(len(data)) if i not in test_set]
    return data.take(train_pos), data.take(sorted(test_set))
