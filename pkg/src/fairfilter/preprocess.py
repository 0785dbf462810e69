"""Protected-attribute association pruning and feature encoding."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .data import DataFormatError, DatasetSchema, RawDataset

DEFAULT_CORR_THRESHOLD = 0.8


class DegenerateColumnWarning(UserWarning):
    pass


class UnseenCategoryWarning(UserWarning):
    pass


def _binary_indicator(protected: Sequence[str]) -> np.ndarray:
    values = sorted(set(protected))
    if len(values) != 2:
        raise ValueError(f"protected column must be binary, observed {values}")
    return np.array([p == values[1] for p in protected], dtype=float)


def point_biserial(x: np.ndarray, indicator: np.ndarray) -> float:
    """Pearson correlation of ``x`` with a 0/1 indicator."""
    x = np.asarray(x, dtype=float)
    xc = x - x.mean()
    ic = indicator - indicator.mean()
    denom = np.sqrt((xc @ xc) * (ic @ ic))
    if denom == 0:
        return 0.0
    return float(xc @ ic / denom)


def contingency(values: Sequence[str], protected: Sequence[str]) -> np.ndarray:
    rows = {v: i for i, v in enumerate(sorted(set(values)))}
    cols = {v: i for i, v in enumerate(sorted(set(protected)))}
    table = np.zeros((len(rows), len(cols)))
    for v, p in zip(values, protected):
        table[rows[v], cols[p]] += 1
    return table


def cramers_v(table: np.ndarray) -> float:
    """Cramér's V of a contingency table, without continuity correction."""
    table = np.asarray(table, dtype=float)
    table = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
    r, c = table.shape
    if min(r, c) < 2:
        return 0.0
    n = table.sum()
    expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / n
    chi2 = float(((table - expected) ** 2 / expected).sum())
    return float(min(1.0, np.sqrt(chi2 / (n * (min(r, c) - 1)))))


def association(values: Sequence, protected: Sequence[str], kind: str, name: str = "feature") -> float:
    """Strength of association between a feature column and a binary protected column.

    Numeric features use the absolute point-biserial correlation, categorical
    ones Cramér's V. A constant feature scores 0 and emits a
    :class:`DegenerateColumnWarning`.
    """
    if len(values) != len(protected):
        raise ValueError("feature and protected columns differ in length")
    if len(set(values)) < 2:
        warnings.warn(f"column {name!r} is constant; association set to 0",
                      DegenerateColumnWarning, stacklevel=2)
        return 0.0
    if kind == "numeric":
        x = np.asarray(values, dtype=float)
        return float(min(1.0, abs(point_biserial(x, _binary_indicator(protected)))))
    if kind == "categorical":
        return cramers_v(contingency([str(v) for v in values], protected))
    raise ValueError(f"unknown column kind {kind!r}")


@dataclass(frozen=True)
class ColumnAssociation:
    name: str
    kind: str
    score: float
    dropped: bool


@dataclass(frozen=True)
class AssociationReport:
    threshold: float
    columns: tuple[ColumnAssociation, ...]

    @property
    def dropped(self) -> list[str]:
        return [c.name for c in self.columns if c.dropped]

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "columns": [
                {"name": c.name, "kind": c.kind, "score": c.score, "dropped": c.dropped}
                for c in self.columns
            ],
        }


def _numeric_column(data: RawDataset, name: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in data.column(name)], dtype=float)
    except ValueError as e:
        raise DataFormatError(f"numeric column {name!r}: {e}") from None


def prune_correlated(data: RawDataset, threshold: float = DEFAULT_CORR_THRESHOLD) -> tuple[RawDataset, AssociationReport]:
    """Drop every feature whose association with the protected attribute exceeds ``threshold``.

    The protected attribute and label are never scored or dropped here.
    """
    if not 0 < threshold <= 1:
        raise ValueError(f"threshold must lie in (0, 1], got {threshold}")
    schema = data.schema
    protected = data.column(schema.protected_attribute)
    scored = []
    for col in schema.feature_columns:
        if len(data) == 0:
            score = 0.0
        else:
            values = _numeric_column(data, col.name) if col.kind == "numeric" else data.column(col.name)
            score = association(values, protected, col.kind, col.name)
        scored.append(ColumnAssociation(col.name, col.kind, score, score > threshold))
    report = AssociationReport(threshold, tuple(scored))
    if not report.dropped:
        return data, report
    return data.with_schema(schema.without(report.dropped)), report


@dataclass(frozen=True)
class EncodedMatrix:
    """Encoded feature rows plus per-row metadata.

    ``features`` never contains the protected attribute or the label; those live
    in ``protected``/``labels`` (raw values) and the boolean views
    ``privileged``/``favorable``.
    """

    features: np.ndarray
    columns: tuple[tuple[str, str], ...]
    row_ids: np.ndarray
    protected: np.ndarray
    labels: np.ndarray
    schema: DatasetSchema
    normalization_stats: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    unseen_categories: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        n = self.features.shape[0]
        if self.features.ndim != 2 or self.features.shape[1] != len(self.columns):
            raise ValueError("features shape does not match column provenance")
        if not (len(self.row_ids) == len(self.protected) == len(self.labels) == n):
            raise ValueError("row metadata length does not match feature rows")
        hidden = {self.schema.protected_attribute, self.schema.label_column}
        leaked = sorted({src for src, _ in self.columns} & hidden)
        if leaked:
            raise ValueError(f"feature columns must not include {leaked}")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def privileged(self) -> np.ndarray:
        return self.protected == self.schema.privileged_value

    @property
    def favorable(self) -> np.ndarray:
        return self.labels == self.schema.favorable_value

    def take(self, index) -> EncodedMatrix:
        """Row subset by integer positions or boolean mask."""
        return EncodedMatrix(
            features=self.features[index],
            columns=self.columns,
            row_ids=self.row_ids[index],
            protected=self.protected[index],
            labels=self.labels[index],
            schema=self.schema,
            normalization_stats=self.normalization_stats,
            unseen_categories=self.unseen_categories,
        )

    def positions(self, row_ids) -> np.ndarray:
        lookup = {int(r): i for i, r in enumerate(self.row_ids)}
        return np.array([lookup[int(r)] for r in row_ids], dtype=int)


def encode(train: RawDataset, test: RawDataset) -> tuple[EncodedMatrix, EncodedMatrix]:
    """Min-max scale numeric features and one-hot encode categorical ones.

    Scaling ranges and category vocabularies are learned from ``train`` only.
    Test values are clipped to [0, 1]; unseen test categories encode as an
    all-zero block and are counted in ``unseen_categories``.
    """
    if train.schema != test.schema:
        raise ValueError("train and test schemas differ")
    schema = train.schema
    blocks_train, blocks_test = [], []
    columns: list[tuple[str, str]] = []
    stats: dict[str, tuple[float, float]] = {}
    unseen: dict[str, int] = {}

    for col in schema.feature_columns:
        if col.kind == "numeric":
            xtr = _numeric_column(train, col.name)
            xte = _numeric_column(test, col.name)
            lo = float(xtr.min()) if len(xtr) else 0.0
            hi = float(xtr.max()) if len(xtr) else 0.0
            stats[col.name] = (lo, hi)
            if hi == lo:
                warnings.warn(f"numeric column {col.name!r} is constant on train; encoded as 0",
                              DegenerateColumnWarning, stacklevel=2)
                ztr, zte = np.zeros_like(xtr), np.zeros_like(xte)
            else:
                ztr = (xtr - lo) / (hi - lo)
                zte = np.clip((xte - lo) / (hi - lo), 0.0, 1.0)
            blocks_train.append(ztr[:, None])
            blocks_test.append(zte[:, None])
            columns.append((col.name, "numeric"))
        else:
            vtr = train.column(col.name)
            vte = test.column(col.name)
            vocab = sorted(set(vtr))
            pos = {v: i for i, v in enumerate(vocab)}
            btr = np.zeros((len(vtr), len(vocab)))
            btr[np.arange(len(vtr)), [pos[v] for v in vtr]] = 1.0
            bte = np.zeros((len(vte), len(vocab)))
            missed = 0
            for i, v in enumerate(vte):
                j = pos.get(v)
                if j is None:
                    missed += 1
                else:
                    bte[i, j] = 1.0
            if missed:
                unseen[col.name] = missed
                warnings.warn(f"{missed} test rows have categories of {col.name!r} unseen in train",
                              UnseenCategoryWarning, stacklevel=2)
            blocks_train.append(btr)
            blocks_test.append(bte)
            columns.extend((col.name, v) for v in vocab)

    def build(data: RawDataset, blocks, unseen_counts) -> EncodedMatrix:
        feats = np.hstack(blocks) if blocks else np.zeros((len(data), 0))
        return EncodedMatrix(
            features=feats,
            columns=tuple(columns),
            row_ids=np.asarray(data.row_ids, dtype=int),
            protected=np.asarray(data.column(schema.protected_attribute), dtype=object),
            labels=np.asarray(data.column(schema.label_column), dtype=object),
            schema=schema,
            normalization_stats=stats,
            unseen_categories=unseen_counts,
        )

    return build(train, blocks_train, {}), build(test, blocks_test, unseen)
