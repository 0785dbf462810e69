"""Cell-constant instance weights that make protected value and label independent."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .preprocess import EncodedMatrix


class EmptyCellError(ValueError):
    pass


@dataclass(frozen=True)
class SampleWeights:
    row_ids: np.ndarray
    weights: np.ndarray
    # (privileged, favorable) -> (row count, weight)
    cells: dict[tuple[bool, bool], tuple[int, float]]

    def __len__(self) -> int:
        return len(self.weights)

    def as_dict(self) -> dict[int, float]:
        return {int(r): float(w) for r, w in zip(self.row_ids, self.weights)}


def cell_weights(privileged: np.ndarray, favorable: np.ndarray) -> tuple[np.ndarray, dict]:
    """w(a, y) = N_a * N_y / (N * N_ay) for every row."""
    privileged = np.asarray(privileged, dtype=bool)
    favorable = np.asarray(favorable, dtype=bool)
    n = len(privileged)
    weights = np.empty(n)
    cells = {}
    for a in (True, False):
        for y in (True, False):
            mask = (privileged == a) & (favorable == y)
            n_ay = int(mask.sum())
            if n_ay == 0:
                who = "privileged" if a else "unprivileged"
                label = "favorable" if y else "unfavorable"
                raise EmptyCellError(f"no {who} rows with the {label} label; weights undefined")
            n_a = int((privileged == a).sum())
            n_y = int((favorable == y).sum())
            w = (n_a * n_y) / (n * n_ay)
            weights[mask] = w
            cells[(a, y)] = (n_ay, w)
    return weights, cells


def compute_weights(train: EncodedMatrix) -> SampleWeights:
    weights, cells = cell_weights(train.privileged, train.favorable)
    return SampleWeights(row_ids=train.row_ids.copy(), weights=weights, cells=cells)


def weighted_base_rate(favorable: np.ndarray, weights: np.ndarray, mask: np.ndarray | None = None) -> float:
    favorable = np.asarray(favorable, dtype=bool)
    if mask is not None:
        favorable, weights = favorable[mask], weights[mask]
    return float(weights[favorable].sum() / weights.sum())
