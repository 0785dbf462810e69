"""Accuracy and group fairness metrics.

Signs follow privileged minus unprivileged: a positive value means the
privileged group is favored.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MetricError(ValueError):
    pass


def _as_bool(x) -> np.ndarray:
    return np.asarray(x, dtype=bool)


def accuracy(preds, truths) -> float:
    preds, truths = np.asarray(preds), np.asarray(truths)
    if preds.shape != truths.shape:
        raise MetricError(f"length mismatch: {preds.shape} vs {truths.shape}")
    if preds.size == 0:
        raise MetricError("accuracy of an empty prediction set is undefined")
    return float(np.mean(preds == truths))


@dataclass(frozen=True)
class GroupConfusion:
    """Confusion counts for one protected group, favorable label as positive."""

    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def selection_rate(self) -> float:
        return (self.tp + self.fp) / self.total

    @property
    def tpr(self) -> float:
        return self.tp / (self.tp + self.fn)

    @property
    def fpr(self) -> float:
        return self.fp / (self.fp + self.tn)

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


def group_confusion(preds, truths, mask) -> GroupConfusion:
    p, t, m = _as_bool(preds), _as_bool(truths), _as_bool(mask)
    return GroupConfusion(
        tp=int(np.sum(p & t & m)),
        fp=int(np.sum(p & ~t & m)),
        tn=int(np.sum(~p & ~t & m)),
        fn=int(np.sum(~p & t & m)),
    )


def group_confusions(preds, truths, privileged) -> dict[str, GroupConfusion]:
    priv = _as_bool(privileged)
    return {
        "privileged": group_confusion(preds, truths, priv),
        "unprivileged": group_confusion(preds, truths, ~priv),
    }


def spd(preds, privileged) -> float:
    """Statistical parity difference, P(fav | priv) - P(fav | unpriv)."""
    p, priv = _as_bool(preds), _as_bool(privileged)
    if p.shape != priv.shape:
        raise MetricError("preds and protected differ in length")
    if not priv.any() or priv.all():
        raise MetricError("both protected groups must be present")
    return float(p[priv].mean() - p[~priv].mean())


def spd_from_confusion(confusions: dict[str, GroupConfusion]) -> float:
    return confusions["privileged"].selection_rate - confusions["unprivileged"].selection_rate


def aod(preds, truths, privileged) -> float:
    """Average odds difference, mean of the TPR gap and the FPR gap."""
    p, t, priv = _as_bool(preds), _as_bool(truths), _as_bool(privileged)
    if not (p.shape == t.shape == priv.shape):
        raise MetricError("preds, truths and protected differ in length")
    rates = {}
    for name, mask in (("privileged", priv), ("unprivileged", ~priv)):
        pos, neg = t & mask, ~t & mask
        if not pos.any():
            raise MetricError(f"{name} group has no favorable-label rows; TPR undefined")
        if not neg.any():
            raise MetricError(f"{name} group has no unfavorable-label rows; FPR undefined")
        rates[name] = (p[pos].mean(), p[neg].mean())
    (tpr_p, fpr_p), (tpr_u, fpr_u) = rates["privileged"], rates["unprivileged"]
    return float(0.5 * ((tpr_p - tpr_u) + (fpr_p - fpr_u)))


@dataclass(frozen=True)
class FairnessReport:
    accuracy: float
    spd: float
    aod: float
    confusions: dict[str, GroupConfusion]
    removal: dict
    config: dict

    @classmethod
    def evaluate(cls, preds, truths, privileged, removal: dict | None = None,
                 config: dict | None = None) -> FairnessReport:
        return cls(
            accuracy=accuracy(preds, truths),
            spd=spd(preds, privileged),
            aod=aod(preds, truths, privileged),
            confusions=group_confusions(preds, truths, privileged),
            removal=removal or {},
            config=config or {},
        )

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "spd": self.spd,
            "aod": self.aod,
            "sign_convention": "privileged minus unprivileged",
            "group_confusion": {k: v.to_dict() for k, v in self.confusions.items()},
            "removal": self.removal,
            "config": self.config,
        }
