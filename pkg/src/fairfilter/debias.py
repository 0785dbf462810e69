"""Detection and removal of cross-group pseudo label noise.

Two groups are compared: rows that are privileged *and* carry the favorable
label, and rows that are unprivileged *and* carry the unfavorable label. A row
in either group is flagged when at least one row of the opposite group has
cosine similarity at or above the threshold. Flagged rows are ranked by how many
such neighbours they have, and the top of each ranking is removed.
"""
from __future__ import annotations

import csv
import io
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .preprocess import EncodedMatrix

DEFAULT_SIMILARITY_THRESHOLD = 0.99
DEFAULT_REMOVAL_PERCENT = 1.0
# Absorbs rounding in normalized dot products so identical rows still match at 1.0.
SIMILARITY_EPS = 1e-12
BLOCK_ROWS = 1024

PF = "privileged_favorable"
UU = "unprivileged_unfavorable"


class EmptyGroupError(ValueError):
    pass


class ZeroVectorWarning(UserWarning):
    pass


@dataclass(frozen=True)
class GroupPartition:
    group_pf: np.ndarray
    group_uu: np.ndarray
    remainder: np.ndarray

    def sizes(self) -> dict[str, int]:
        return {PF: len(self.group_pf), UU: len(self.group_uu), "remainder": len(self.remainder)}


def partition_groups(train: EncodedMatrix) -> GroupPartition:
    """Split training row ids into the two comparison groups and the rest."""
    priv, fav = train.privileged, train.favorable
    pf = priv & fav
    uu = ~priv & ~fav
    if not pf.any():
        raise EmptyGroupError("no privileged rows with the favorable label; nothing to compare")
    if not uu.any():
        raise EmptyGroupError("no unprivileged rows with the unfavorable label; nothing to compare")
    return GroupPartition(
        group_pf=train.row_ids[pf],
        group_uu=train.row_ids[uu],
        remainder=train.row_ids[~(pf | uu)],
    )


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        warnings.warn("cosine similarity with a zero vector is taken as 0", ZeroVectorWarning, stacklevel=2)
        return 0.0
    return float(u @ v / (nu * nv))


def _unit_rows(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    norms = np.linalg.norm(x, axis=1)
    zero = norms == 0
    if zero.any():
        warnings.warn(f"{int(zero.sum())} zero feature vectors never match anything",
                      ZeroVectorWarning, stacklevel=3)
    safe = np.where(zero, 1.0, norms)
    return x / safe[:, None]


def cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """All-pairs cosine similarity between the rows of ``a`` and of ``b``."""
    return _unit_rows(a) @ _unit_rows(b).T


@dataclass(frozen=True)
class FlaggedRow:
    row_id: int
    group: str
    match_count: int
    max_similarity: float


def _rank(rows: list[FlaggedRow]) -> tuple[FlaggedRow, ...]:
    return tuple(sorted(rows, key=lambda r: (-r.match_count, -r.max_similarity, r.row_id)))


@dataclass(frozen=True)
class FlagRanking:
    threshold: float
    pf: tuple[FlaggedRow, ...]
    uu: tuple[FlaggedRow, ...]

    def __iter__(self):
        yield from self.pf
        yield from self.uu

    def group(self, name: str) -> tuple[FlaggedRow, ...]:
        return {PF: self.pf, UU: self.uu}[name]


def flag_and_rank(pf_rows: np.ndarray, uu_rows: np.ndarray, threshold: float = DEFAULT_SIMILARITY_THRESHOLD,
                  pf_ids: Sequence[int] | None = None, uu_ids: Sequence[int] | None = None,
                  n_jobs: int = 1) -> FlagRanking:
    """Exact cross-group similarity scan.

    The scan is split into fixed blocks of ``pf_rows``; ``n_jobs`` only changes
    how many blocks run at once, never the result.
    """
    if not 0 < threshold <= 1:
        raise ValueError(f"similarity threshold must lie in (0, 1], got {threshold}")
    pf_rows = np.atleast_2d(np.asarray(pf_rows, dtype=float))
    uu_rows = np.atleast_2d(np.asarray(uu_rows, dtype=float))
    n_pf, n_uu = len(pf_rows), len(uu_rows)
    pf_ids = np.arange(n_pf) if pf_ids is None else np.asarray(pf_ids)
    uu_ids = np.arange(n_uu) if uu_ids is None else np.asarray(uu_ids)
    if len(pf_ids) != n_pf or len(uu_ids) != n_uu:
        raise ValueError("id arrays do not match row counts")
    if n_pf == 0 or n_uu == 0:
        return FlagRanking(threshold, (), ())
    if pf_rows.shape[1] != uu_rows.shape[1]:
        raise ValueError("groups have different feature dimensions")

    a = _unit_rows(pf_rows)
    b_t = _unit_rows(uu_rows).T.copy()
    cut = threshold - SIMILARITY_EPS

    def scan(start: int):
        sims = np.minimum(a[start:start + BLOCK_ROWS] @ b_t, 1.0)
        hit = sims >= cut
        masked = np.where(hit, sims, -np.inf)
        return start, hit.sum(axis=1), masked.max(axis=1), hit.sum(axis=0), masked.max(axis=0)

    starts = range(0, n_pf, BLOCK_ROWS)
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(scan, starts))
    else:
        parts = [scan(s) for s in starts]

    pf_count = np.zeros(n_pf, dtype=int)
    pf_max = np.full(n_pf, -np.inf)
    uu_count = np.zeros(n_uu, dtype=int)
    uu_max = np.full(n_uu, -np.inf)
    for start, pc, pm, uc, um in parts:
        stop = start + len(pc)
        pf_count[start:stop] = pc
        pf_max[start:stop] = pm
        uu_count += uc
        uu_max = np.maximum(uu_max, um)

    pf_flags = [FlaggedRow(int(pf_ids[i]), PF, int(pf_count[i]), float(pf_max[i]))
                for i in np.flatnonzero(pf_count)]
    uu_flags = [FlaggedRow(int(uu_ids[j]), UU, int(uu_count[j]), float(uu_max[j]))
                for j in np.flatnonzero(uu_count)]
    return FlagRanking(threshold, _rank(pf_flags), _rank(uu_flags))


def flag_groups(train: EncodedMatrix, partition: GroupPartition,
                threshold: float = DEFAULT_SIMILARITY_THRESHOLD, n_jobs: int = 1) -> FlagRanking:
    pf_pos = train.positions(partition.group_pf)
    uu_pos = train.positions(partition.group_uu)
    return flag_and_rank(train.features[pf_pos], train.features[uu_pos], threshold,
                         pf_ids=partition.group_pf, uu_ids=partition.group_uu, n_jobs=n_jobs)


def removal_budget(group_total: int, k_percent: float) -> int:
    """floor(group_total * k_percent / 100), computed exactly.

    ``group_total`` is the number of rows sharing the group's protected value,
    not the size of the flagged set or of the (protected, label) group.
    """
    if k_percent < 0:
        raise ValueError(f"k_percent must be non-negative, got {k_percent}")
    if group_total < 0:
        raise ValueError(f"group_total must be non-negative, got {group_total}")
    return int(Fraction(int(group_total)) * Fraction(str(k_percent)) // 100)


@dataclass(frozen=True)
class RemovalPlan:
    k_percent: float
    threshold: float
    budget_pf: int
    budget_uu: int
    removed_pf: tuple[FlaggedRow, ...] = ()
    removed_uu: tuple[FlaggedRow, ...] = ()
    flagged_pf: int = 0
    flagged_uu: int = 0

    @property
    def shortfall_pf(self) -> int:
        return self.budget_pf - len(self.removed_pf)

    @property
    def shortfall_uu(self) -> int:
        return self.budget_uu - len(self.removed_uu)

    @property
    def removed_ids(self) -> list[int]:
        return [r.row_id for r in self.removed_pf] + [r.row_id for r in self.removed_uu]

    def summary(self) -> dict:
        return {
            "k_percent": self.k_percent,
            "similarity_threshold": self.threshold,
            "budget": {PF: self.budget_pf, UU: self.budget_uu},
            "flagged": {PF: self.flagged_pf, UU: self.flagged_uu},
            "removed": {PF: len(self.removed_pf), UU: len(self.removed_uu)},
            "shortfall": {PF: self.shortfall_pf, UU: self.shortfall_uu},
        }

    def to_dict(self) -> dict:
        doc = self.summary()
        doc["rows"] = [
            {"row_id": r.row_id, "group": r.group, "match_count": r.match_count,
             "max_similarity": r.max_similarity}
            for r in (*self.removed_pf, *self.removed_uu)
        ]
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row_id", "group", "match_count", "max_similarity"])
        for r in (*self.removed_pf, *self.removed_uu):
            w.writerow([r.row_id, r.group, r.match_count, repr(r.max_similarity)])
        return buf.getvalue()


def remove_top_k(train: EncodedMatrix, ranking: FlagRanking, budget_pf: int, budget_uu: int,
                 k_percent: float = float("nan")) -> tuple[EncodedMatrix, RemovalPlan]:
    """Drop the first ``budget`` rows of each group's ranking from ``train``.

    A budget larger than the flagged count removes every flagged row of that
    group; the difference is reported as the plan's shortfall.
    """
    removed_pf = ranking.pf[:max(0, budget_pf)]
    removed_uu = ranking.uu[:max(0, budget_uu)]
    plan = RemovalPlan(
        k_percent=k_percent,
        threshold=ranking.threshold,
        budget_pf=budget_pf,
        budget_uu=budget_uu,
        removed_pf=removed_pf,
        removed_uu=removed_uu,
        flagged_pf=len(ranking.pf),
        flagged_uu=len(ranking.uu),
    )
    if not plan.removed_ids:
        return train, plan
    keep = ~np.isin(train.row_ids, plan.removed_ids)
    return train.take(keep), plan
