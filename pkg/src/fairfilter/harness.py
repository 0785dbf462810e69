"""End-to-end pipeline runs and multi-k experiment reports."""
from __future__ import annotations

import json
import logging
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import DatasetSchema, RawDataset, builtin_schema, load_csv, load_schema, split_train_test
from .debias import (
    DEFAULT_SIMILARITY_THRESHOLD, FlagRanking, GroupPartition, RemovalPlan,
    flag_groups, partition_groups, remove_top_k, removal_budget,
)
from .metrics import FairnessReport
from .model import LogisticModel, LogisticTrainer, TrainerConfig, predict
from .preprocess import DEFAULT_CORR_THRESHOLD, AssociationReport, EncodedMatrix, encode, prune_correlated
from .reweigh import SampleWeights, compute_weights

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@contextmanager
def stage(name: str):
    try:
        yield
    except PipelineError:
        raise
    except Exception as e:
        raise PipelineError(name, e) from e


@dataclass(frozen=True)
class ExperimentConfig:
    data_path: str
    schema: DatasetSchema
    test_fraction: float = 0.3
    seed: int = 42
    corr_threshold: float = DEFAULT_CORR_THRESHOLD
    similarity_threshold: float = DEFAULT_SIMILARITY_THRESHOLD
    removal_percents: tuple[float, ...] = (0.0, 1.0, 2.0)
    reweigh: bool = True
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    n_jobs: int = 1

    def __post_init__(self):
        if not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must lie in (0, 1)")
        if not 0 < self.similarity_threshold <= 1:
            raise ValueError("similarity_threshold must lie in (0, 1]")
        if any(k < 0 for k in self.removal_percents):
            raise ValueError("removal percents must be non-negative")

    @classmethod
    def for_dataset(cls, data_path, schema: str | Path | DatasetSchema, **kwargs) -> ExperimentConfig:
        """``schema`` may be a schema object, a JSON path, or a shipped name ("adult", "german")."""
        if isinstance(schema, DatasetSchema):
            resolved = schema
        elif str(schema) in ("adult", "german"):
            resolved = builtin_schema(str(schema))
        else:
            resolved = load_schema(schema)
        return cls(data_path=str(data_path), schema=resolved, **kwargs)

    def echo(self) -> dict:
        return {
            "data_path": self.data_path,
            "dataset": self.schema.name,
            "protected_attribute": self.schema.protected_attribute,
            "privileged_value": self.schema.privileged_value,
            "label_column": self.schema.label_column,
            "favorable_value": self.schema.favorable_value,
            "test_fraction": self.test_fraction,
            "seed": self.seed,
            "corr_threshold": self.corr_threshold,
            "similarity_threshold": self.similarity_threshold,
            "removal_percents": list(self.removal_percents),
            "reweigh": self.reweigh,
            "trainer": asdict(self.trainer),
        }


@dataclass
class PreparedData:
    """Everything upstream of removal; shared by all k of one experiment."""

    raw: RawDataset
    train_raw: RawDataset
    test_raw: RawDataset
    association: AssociationReport
    train: EncodedMatrix
    test: EncodedMatrix
    partition: GroupPartition
    similarity_threshold: float
    n_jobs: int = 1
    _ranking: FlagRanking | None = None

    @property
    def ranking(self) -> FlagRanking:
        if self._ranking is None:
            with stage("flag_and_rank"):
                self._ranking = flag_groups(self.train, self.partition,
                                            self.similarity_threshold, self.n_jobs)
        return self._ranking

    def train_protected_totals(self) -> tuple[int, int]:
        priv = int(self.train.privileged.sum())
        return priv, len(self.train) - priv

    def summary(self) -> dict:
        schema = self.raw.schema
        return {
            "raw_line_count": self.raw.raw_line_count,
            "dropped_missing": self.raw.dropped,
            "raw_protected_counts": dict(self.raw.raw_protected_counts),
            "kept_protected_counts": self.raw.protected_counts(),
            "train_rows": len(self.train),
            "test_rows": len(self.test),
            "train_protected_counts": self.train_raw.protected_counts(),
            "test_protected_counts": self.test_raw.protected_counts(),
            "feature_dimension": int(self.train.features.shape[1]),
            "pruned_columns": self.association.dropped,
            "association": self.association.to_dict(),
            "unseen_test_categories": dict(self.test.unseen_categories),
            "groups": self.partition.sizes(),
            "privileged_value": schema.privileged_value,
        }


def prepare(config: ExperimentConfig) -> PreparedData:
    with stage("load_csv"):
        raw = load_csv(config.data_path, config.schema)
    with stage("split_train_test"):
        train_raw, test_raw = split_train_test(raw, config.test_fraction, config.seed)
    with stage("prune_correlated"):
        train_raw, assoc = prune_correlated(train_raw, config.corr_threshold)
        test_raw = test_raw.with_schema(train_raw.schema)
    with stage("encode"):
        train, test = encode(train_raw, test_raw)
    with stage("partition_groups"):
        partition = partition_groups(train)
    return PreparedData(raw, train_raw, test_raw, assoc, train, test, partition,
                        config.similarity_threshold, config.n_jobs)


@dataclass(frozen=True)
class PipelineRun:
    k_percent: float
    report: FairnessReport
    plan: RemovalPlan
    model: LogisticModel
    weights: SampleWeights
    filtered_train: EncodedMatrix


def _assert_no_protected(matrix: EncodedMatrix) -> None:
    schema = matrix.schema
    sources = {src for src, _ in matrix.columns}
    if schema.protected_attribute in sources or schema.label_column in sources:
        raise AssertionError("protected attribute or label leaked into training features")


def debias(prepared: PreparedData, k_percent: float) -> tuple[EncodedMatrix, RemovalPlan]:
    """Remove the top ``k_percent`` flagged rows of each group from the training split.

    Budgets are taken against the training split's per-protected-value totals.
    """
    n_priv, n_unpriv = prepared.train_protected_totals()
    budget_pf = removal_budget(n_priv, k_percent)
    budget_uu = removal_budget(n_unpriv, k_percent)
    if budget_pf == 0 and budget_uu == 0:
        return prepared.train, RemovalPlan(k_percent, prepared.similarity_threshold, 0, 0)
    with stage("remove_top_k"):
        return remove_top_k(prepared.train, prepared.ranking, budget_pf, budget_uu, k_percent)


def execute(config: ExperimentConfig, k_percent: float, prepared: PreparedData | None = None) -> PipelineRun:
    prepared = prepared or prepare(config)
    filtered, plan = debias(prepared, k_percent)

    with stage("compute_weights"):
        if config.reweigh:
            weights = compute_weights(filtered)
        else:
            weights = SampleWeights(filtered.row_ids.copy(), np.ones(len(filtered)), {})

    with stage("train_logistic"):
        _assert_no_protected(filtered)
        trainer = LogisticTrainer(config.trainer)
        model = trainer.fit(filtered.features, filtered.favorable.astype(float), weights.weights,
                            seed=config.seed, columns=filtered.columns)

    with stage("evaluate"):
        preds, _ = predict(model, prepared.test.features)
        removal = plan.summary()
        removal["train_rows_after_removal"] = len(filtered)
        removal["training"] = {"epochs": model.epochs, "converged": model.converged,
                               "final_loss": model.final_loss}
        report = FairnessReport.evaluate(preds, prepared.test.favorable, prepared.test.privileged,
                                         removal=removal, config=config.echo())
    return PipelineRun(k_percent, report, plan, model, weights, filtered)


def run_pipeline(config: ExperimentConfig, k_percent: float, prepared: PreparedData | None = None) -> FairnessReport:
    return execute(config, k_percent, prepared).report


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    dataset: dict
    runs: list[PipelineRun]
    errors: dict[float, str] = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return not self.errors

    def run(self, k_percent: float) -> PipelineRun:
        for r in self.runs:
            if r.k_percent == k_percent:
                return r
        raise KeyError(k_percent)

    def removal_count_table(self) -> list[dict]:
        """Per-k removal budgets on whole-dataset totals and actual train removals."""
        totals = self.dataset["raw_protected_counts"]
        priv = self.config.schema.privileged_value
        unpriv = next((v for v in totals if v != priv), None)
        rows = []
        for k in self.config.removal_percents:
            row = {"k_percent": k,
                   "dataset_budget": {priv: removal_budget(totals.get(priv, 0), k)}}
            if unpriv is not None:
                row["dataset_budget"][unpriv] = removal_budget(totals[unpriv], k)
            try:
                plan = self.run(k).plan
                row["removed_from_train"] = {priv: len(plan.removed_pf)}
                if unpriv is not None:
                    row["removed_from_train"][unpriv] = len(plan.removed_uu)
            except KeyError:
                pass
            rows.append(row)
        return rows

    def to_dict(self) -> dict:
        return {
            "complete": self.complete,
            "config": self.config.echo(),
            "dataset": self.dataset,
            "runs": [
                {"k_percent": r.k_percent, "report": r.report.to_dict(), "removal_plan": r.plan.summary()}
                for r in self.runs
            ],
            "errors": {str(k): v for k, v in self.errors.items()},
            "removal_counts": self.removal_count_table(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def render(self) -> str:
        name = self.config.schema.name
        lines = [f"{name}: accuracy / fairness (test split, signed, privileged minus unprivileged)",
                 f"{'Data':<14}{'Accuracy':>10}{'AOD':>10}{'SPD':>10}"]
        for r in self.runs:
            label = "Raw" if r.k_percent == 0 else f"{r.k_percent:g} % removal"
            rep = r.report
            lines.append(f"{label:<14}{rep.accuracy:>10.4f}{rep.aod:>10.4f}{rep.spd:>10.4f}")
        for k, err in self.errors.items():
            lines.append(f"{k:g} % removal  FAILED: {err}")
        lines.append("")
        totals = self.dataset["raw_protected_counts"]
        groups = list(totals)
        lines.append(f"{name}: samples removed (dataset-wide budget | removed from train split)")
        lines.append(f"{'Instance':<14}" + "".join(f"{g:>18}" for g in groups))
        lines.append(f"{'Total':<14}" + "".join(f"{totals[g]:>18}" for g in groups))
        for row in self.removal_count_table():
            if row["k_percent"] == 0:
                continue
            cells = []
            for g in groups:
                removed = row.get("removed_from_train", {}).get(g, "-")
                cells.append(f"{row['dataset_budget'].get(g, '-')} | {removed}".rjust(18))
            lines.append(f"{row['k_percent']:g} % removal".ljust(14) + "".join(cells))
        return "\n".join(lines) + "\n"


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    prepared = prepare(config)
    report = ExperimentReport(config, prepared.summary(), [])
    for k in config.removal_percents:
        try:
            report.runs.append(execute(config, k, prepared))
        except PipelineError as e:
            log.error("k=%s failed: %s", k, e)
            report.errors[k] = str(e)
    return report
