"""Sample-weighted logistic regression trained by full-batch gradient descent."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Protocol, Sequence

import numpy as np


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainerConfig:
    learning_rate: float = 0.1
    l2_penalty: float = 1e-4
    max_epochs: int = 2000
    tolerance: float = 1e-6
    seed: int = 0


class Classifier(Protocol):
    def predict_proba(self, features: np.ndarray) -> np.ndarray: ...


class Trainer(Protocol):
    """Anything that can fit a weighted binary classifier.

    ``labels`` are 1 for the favorable class. Implementations must be
    deterministic for a given seed and treat a weight of 2 exactly like a
    duplicated row.
    """

    def fit(self, features: np.ndarray, labels: np.ndarray, weights: np.ndarray, seed: int = 0) -> Classifier: ...


def sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def objective(coef: np.ndarray, intercept: float, x: np.ndarray, y: np.ndarray,
              w: np.ndarray, l2_penalty: float) -> float:
    """Weight-normalized negative log-likelihood plus (l2/2)*||coef||^2.

    The intercept is not penalized.
    """
    z = x @ coef + intercept
    nll = np.logaddexp(0.0, z) - y * z
    return float(w @ nll / w.sum() + 0.5 * l2_penalty * coef @ coef)


def gradient(coef: np.ndarray, intercept: float, x: np.ndarray, y: np.ndarray,
             w: np.ndarray, l2_penalty: float) -> tuple[np.ndarray, float]:
    r = w * (sigmoid(x @ coef + intercept) - y) / w.sum()
    return x.T @ r + l2_penalty * coef, float(r.sum())


@dataclass(frozen=True)
class LogisticModel:
    coefficients: np.ndarray
    intercept: float
    config: TrainerConfig = field(default_factory=TrainerConfig)
    columns: tuple[tuple[str, str], ...] = ()
    epochs: int = 0
    converged: bool = False
    loss_history: tuple[float, ...] = ()

    @property
    def final_loss(self) -> float:
        return self.loss_history[-1] if self.loss_history else float("nan")

    def decision_function(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        if features.ndim != 2 or features.shape[1] != len(self.coefficients):
            raise ValueError(
                f"expected {len(self.coefficients)} feature columns, got shape {features.shape}"
            )
        return features @ self.coefficients + self.intercept

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        return sigmoid(self.decision_function(features))

    def to_dict(self) -> dict:
        return {
            "coefficients": [float(c) for c in self.coefficients],
            "intercept": float(self.intercept),
            "config": asdict(self.config),
            "columns": [list(c) for c in self.columns],
            "epochs": self.epochs,
            "converged": self.converged,
            "final_loss": self.final_loss,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> LogisticModel:
        return cls(
            coefficients=np.asarray(doc["coefficients"], dtype=float),
            intercept=float(doc["intercept"]),
            config=TrainerConfig(**doc.get("config", {})),
            columns=tuple(tuple(c) for c in doc.get("columns", [])),
            epochs=int(doc.get("epochs", 0)),
            converged=bool(doc.get("converged", False)),
            loss_history=(doc["final_loss"],) if "final_loss" in doc else (),
        )


def train_logistic(features: np.ndarray, labels: np.ndarray, weights: np.ndarray | None = None,
                   config: TrainerConfig = TrainerConfig(),
                   columns: Sequence[tuple[str, str]] = ()) -> LogisticModel:
    """Minimize the weighted, L2-regularized logistic loss from a zero start.

    Stops when the gradient norm drops below ``config.tolerance`` or after
    ``config.max_epochs`` updates.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=float)
    if x.ndim != 2 or len(x) != len(y) or len(y) != len(w):
        raise ValueError("features, labels and weights must agree in length")
    if len(y) == 0:
        raise ValueError("cannot train on an empty dataset")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be 0/1")
    if (w < 0).any() or w.sum() <= 0:
        raise ValueError("weights must be non-negative with a positive sum")

    coef = np.zeros(x.shape[1])
    b = 0.0
    lr, lam = config.learning_rate, config.l2_penalty
    history = [objective(coef, b, x, y, w, lam)]
    converged = False
    epochs = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for epochs in range(1, config.max_epochs + 1):
            g_coef, g_b = gradient(coef, b, x, y, w, lam)
            if np.sqrt(g_coef @ g_coef + g_b * g_b) < config.tolerance:
                converged = True
                epochs -= 1
                break
            coef = coef - lr * g_coef
            b = b - lr * g_b
            loss = objective(coef, b, x, y, w, lam)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"loss became {loss} at epoch {epochs}; try a smaller learning rate than {lr}"
                )
            history.append(loss)
    return LogisticModel(coef, b, config, tuple(tuple(c) for c in columns), epochs, converged, tuple(history))


@dataclass(frozen=True)
class LogisticTrainer:
    config: TrainerConfig = TrainerConfig()

    def fit(self, features, labels, weights, seed=0, columns=()) -> LogisticModel:
        # Zero initialization: the seed is recorded but has nothing to randomize.
        cfg = TrainerConfig(**{**asdict(self.config), "seed": seed})
        return train_logistic(features, labels, weights, cfg, columns)


def predict(model: Classifier, features: np.ndarray, threshold: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Favorable (True) iff the predicted probability is >= ``threshold``."""
    proba = np.asarray(model.predict_proba(features), dtype=float)
    return proba >= threshold, proba
