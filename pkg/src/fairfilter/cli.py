"""Command-line entry point: ``fairfilter {debias,train,evaluate,experiment}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .debias import DEFAULT_REMOVAL_PERCENT, DEFAULT_SIMILARITY_THRESHOLD
from .harness import ExperimentConfig, PipelineError, debias, execute, prepare, run_experiment
from .metrics import FairnessReport
from .model import LogisticModel, TrainerConfig, predict
from .preprocess import DEFAULT_CORR_THRESHOLD
from .reweigh import compute_weights

log = logging.getLogger("fairfilter")


def _common(p: argparse.ArgumentParser, multi_k: bool = False) -> None:
    p.add_argument("--data", required=True, help="dataset file")
    p.add_argument("--schema", required=True,
                   help="schema JSON path, or a shipped schema name: adult, german")
    p.add_argument("--protected-attr")
    p.add_argument("--privileged-value")
    p.add_argument("--label")
    p.add_argument("--favorable-value")
    p.add_argument("--similarity-threshold", type=float, default=DEFAULT_SIMILARITY_THRESHOLD)
    if multi_k:
        p.add_argument("--removal-percent", type=float, nargs="+", default=[0.0, 1.0, 2.0],
                       help="one or more k values; 0 is the no-removal baseline")
    else:
        p.add_argument("--removal-percent", type=float, default=DEFAULT_REMOVAL_PERCENT)
    p.add_argument("--corr-threshold", type=float, default=DEFAULT_CORR_THRESHOLD)
    p.add_argument("--test-fraction", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--no-reweigh", action="store_true", help="train without reweighing")
    p.add_argument("--learning-rate", type=float, default=TrainerConfig.learning_rate)
    p.add_argument("--l2", type=float, default=TrainerConfig.l2_penalty)
    p.add_argument("--max-epochs", type=int, default=TrainerConfig.max_epochs)
    p.add_argument("--tolerance", type=float, default=TrainerConfig.tolerance)
    p.add_argument("--jobs", type=int, default=1, help="threads for the similarity scan")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairfilter",
        description="Remove cross-group near-duplicates with opposite labels, reweigh, train, evaluate.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("debias", help="write the filtered training split and removal plan"))
    _common(sub.add_parser("train", help="debias, reweigh and fit; writes model.json"))
    ev = sub.add_parser("evaluate", help="fairness/accuracy report on the test split")
    _common(ev)
    ev.add_argument("--model", help="evaluate this model.json instead of training a new one")
    _common(sub.add_parser("experiment", help="sweep removal percents and compare"), multi_k=True)
    return parser


def config_from_args(args) -> ExperimentConfig:
    ks = args.removal_percent if isinstance(args.removal_percent, list) else [args.removal_percent]
    cfg = ExperimentConfig.for_dataset(
        args.data, args.schema,
        test_fraction=args.test_fraction,
        seed=args.seed,
        corr_threshold=args.corr_threshold,
        similarity_threshold=args.similarity_threshold,
        removal_percents=tuple(ks),
        reweigh=not args.no_reweigh,
        trainer=TrainerConfig(args.learning_rate, args.l2, args.max_epochs, args.tolerance, args.seed),
        n_jobs=args.jobs,
    )
    schema = cfg.schema.with_roles(args.protected_attr, args.privileged_value, args.label,
                                   args.favorable_value)
    if schema != cfg.schema:
        cfg = ExperimentConfig(**{**cfg.__dict__, "schema": schema})
    return cfg


def _write(path: Path, text: str) -> None:
    path.write_text(text)
    log.info("wrote %s", path)


def _write_filtered(path: Path, prepared, filtered, weights) -> None:
    by_id = dict(zip(prepared.train_raw.row_ids, prepared.train_raw.rows))
    w = weights.as_dict()
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["row_id", "weight", *prepared.train_raw.schema.column_names])
        for rid in filtered.row_ids:
            out.writerow([int(rid), repr(w[int(rid)]), *by_id[int(rid)]])
    log.info("wrote %s", path)


def cmd_debias(args, cfg: ExperimentConfig, out: Path) -> int:
    prepared = prepare(cfg)
    k = cfg.removal_percents[0]
    filtered, plan = debias(prepared, k)
    weights = compute_weights(filtered)
    _write(out / "removal_plan.csv", plan.to_csv())
    _write(out / "removal_plan.json", plan.to_json() + "\n")
    _write(out / "association.json", json.dumps(prepared.association.to_dict(), indent=2) + "\n")
    _write_filtered(out / "filtered_train.csv", prepared, filtered, weights)
    s = plan.summary()
    print(f"flagged {s['flagged']}, removed {s['removed']}, shortfall {s['shortfall']}; "
          f"{len(filtered)} training rows kept")
    return 0


def cmd_train(args, cfg: ExperimentConfig, out: Path) -> int:
    run = execute(cfg, cfg.removal_percents[0])
    _write(out / "model.json", run.model.to_json() + "\n")
    _write(out / "removal_plan.csv", run.plan.to_csv())
    print(f"trained on {len(run.filtered_train)} rows: {run.model.epochs} epochs, "
          f"loss {run.model.final_loss:.6f}, converged={run.model.converged}")
    return 0


def _print_report(rep: FairnessReport) -> None:
    print(f"accuracy {rep.accuracy:.4f}  AOD {rep.aod:+.4f}  SPD {rep.spd:+.4f}")


def cmd_evaluate(args, cfg: ExperimentConfig, out: Path) -> int:
    k = cfg.removal_percents[0]
    if args.model:
        model = LogisticModel.from_dict(json.loads(Path(args.model).read_text()))
        prepared = prepare(cfg)
        if model.columns and tuple(model.columns) != tuple(prepared.test.columns):
            raise SystemExit("model columns do not match the encoded test split")
        preds, _ = predict(model, prepared.test.features)
        report = FairnessReport.evaluate(preds, prepared.test.favorable, prepared.test.privileged,
                                         removal={"k_percent": k}, config=cfg.echo())
    else:
        run = execute(cfg, k)
        report = run.report
        _write(out / "model.json", run.model.to_json() + "\n")
        _write(out / "removal_plan.csv", run.plan.to_csv())
    _write(out / "report.json", json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    _print_report(report)
    return 0


def cmd_experiment(args, cfg: ExperimentConfig, out: Path) -> int:
    report = run_experiment(cfg)
    _write(out / "report.json", report.to_json())
    for run in report.runs:
        if run.k_percent:
            _write(out / f"removal_plan_k{run.k_percent:g}.csv", run.plan.to_csv())
    text = report.render()
    _write(out / "tables.txt", text)
    print(text, end="")
    return 0 if report.complete else 1


COMMANDS = {"debias": cmd_debias, "train": cmd_train, "evaluate": cmd_evaluate,
            "experiment": cmd_experiment}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, cfg, out)
    except (PipelineError, ValueError, OSError) as e:
        print(f"fairfilter: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
