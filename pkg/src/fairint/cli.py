"""Command-line surface: train, eval, sweep, explain, probe, and synth.

Every subcommand reads plain files and writes plain files, so runs are
reproducible and diffable. Artifact names inside an output directory are
fixed: model.bin, history.jsonl, report.json (written by train),
attention.json (explain), tradeoff.csv (sweep). Exit codes: 0 success,
2 configuration or usage problem, 3 data or file problem, 4 training or
metric failure.
"""

import argparse
import csv
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from .data import (
    apply_standardization,
    full_batch,
    load_csv,
    load_schema,
    save_csv,
    save_schema,
    split,
    synth_generate,
)
from .errors import ConfigError, DataError, FairIntError, UsageError
from .model import FairIntModel, ModelConfig, load_model, save_model
from .probe import sensitive_probe
from .training import TrainConfig, evaluate_model, sweep, train

SPLIT_RATIOS = (0.7, 0.15, 0.15)

_CONFIG_KEYS = {"dataset", "synth", "model", "train", "output_dir"}
_DATASET_KEYS = {"csv_path", "schema_path"}
_SYNTH_KEYS = {"n", "beta", "rho"}


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a data source, architecture, and training recipe."""

    source_kind: str  # "dataset" or "synth"
    source: dict
    model: ModelConfig
    train: TrainConfig
    output_dir: str


def load_experiment_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: config is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    for key in ("dataset", "synth"):
        if key in doc and doc[key] is None:  # explicit null means "not this source"
            del doc[key]
    if ("dataset" in doc) == ("synth" in doc):
        raise ConfigError(f"{path}: exactly one of 'dataset' or 'synth' must be given")
    if "output_dir" not in doc:
        raise ConfigError(f"{path}: 'output_dir' is required")

    if "dataset" in doc:
        source_kind, source = "dataset", doc["dataset"]
        if not isinstance(source, dict) or set(source) != _DATASET_KEYS:
            raise ConfigError(
                f"{path}: 'dataset' must be an object with keys {sorted(_DATASET_KEYS)}"
            )
        for key in ("csv_path", "schema_path"):
            if not Path(source[key]).exists():
                raise ConfigError(f"{path}: {key} does not exist: {source[key]}")
    else:
        source_kind, source = "synth", doc["synth"]
        if not isinstance(source, dict) or set(source) != _SYNTH_KEYS:
            raise ConfigError(
                f"{path}: 'synth' must be an object with keys {sorted(_SYNTH_KEYS)}"
            )

    return ExperimentConfig(
        source_kind=source_kind,
        source=dict(source),
        model=ModelConfig.from_dict(doc.get("model", {})),
        train=TrainConfig.from_dict(doc.get("train", {})),
        output_dir=str(doc["output_dir"]),
    )


def _materialize(config: ExperimentConfig, seed: int):
    """Build and split the experiment's dataset; one seed drives it all."""
    if config.source_kind == "synth":
        src = config.source
        dataset = synth_generate(
            n=int(src["n"]),
            bias_strength=float(src["beta"]),
            proxy_corr=float(src["rho"]),
            seed=seed,
        )
    else:
        schema = load_schema(config.source["schema_path"])
        dataset = load_csv(config.source["csv_path"], schema)
    return split(dataset, SPLIT_RATIOS, seed)


def _dataset_for_model(meta: dict, schema, csv_path):
    """Encode a CSV exactly the way the saved model's training data was."""
    dataset = load_csv(csv_path, schema, vocabularies=meta["vocabularies"])
    if meta["standardize_stats"]:
        dataset = apply_standardization(dataset, meta["standardize_stats"])
    return dataset


def _metric_groups(flag: str) -> str:
    return "reconstructed" if flag == "pseudo" else "true"


def _dump(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _emit(doc: dict, out_path) -> None:
    text = _dump(doc)
    if out_path is not None:
        Path(out_path).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


# -- subcommands ---------------------------------------------------------------


def cmd_train(args) -> int:
    config = load_experiment_config(args.config)
    seed = config.train.seed if args.seed is None else args.seed
    train_config = replace(config.train, seed=seed)
    dataset = _materialize(config, seed)

    model, history = train(dataset, config.model, train_config)

    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_model(model, dataset, out / "model.bin", extra_metadata={"train": train_config.to_dict()})

    # first history line is run metadata, the rest are per-epoch records
    head = {
        "lambda_ifc": train_config.lambda_ifc,
        "lambda_fc": train_config.lambda_fc,
        "enable_ifc": train_config.enable_ifc,
        "enable_fc": train_config.enable_fc,
        "enable_bid": train_config.enable_bid,
        "seed": seed,
        "best_epoch": history.best_epoch,
        "stopping_reason": history.stopping_reason,
    }
    lines = [head, *history.history_lines()]
    (out / "history.jsonl").write_text(
        "".join(json.dumps(line, sort_keys=True) + "\n" for line in lines), encoding="utf-8"
    )

    report = evaluate_model(
        model, dataset, "test", threshold=args.threshold, groups_from=_metric_groups(args.groups_from)
    )
    _emit(report.to_dict(), out / "report.json")
    return 0


def cmd_eval(args) -> int:
    model, schema, meta = load_model(args.model)
    if args.schema is not None:
        schema = load_schema(args.schema)
    dataset = _dataset_for_model(meta, schema, args.csv)
    report = evaluate_model(
        model,
        dataset,
        args.split,
        threshold=args.threshold,
        groups_from=_metric_groups(args.groups_from),
    )
    _emit(report.to_dict(), args.out)
    return 0


def _parse_grid(text: str):
    pairs = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        pieces = part.split(",")
        if len(pieces) != 2:
            raise UsageError(f"bad grid point {part!r}: expected lambda_ifc,lambda_fc")
        try:
            pairs.append((float(pieces[0]), float(pieces[1])))
        except ValueError:
            raise UsageError(f"bad grid point {part!r}: expected two numbers") from None
    return pairs


def cmd_sweep(args) -> int:
    config = load_experiment_config(args.config)
    grid = _parse_grid(args.grid)
    seed = config.train.seed if args.seed is None else args.seed
    dataset = _materialize(config, seed)

    points = sweep(dataset, config.model, replace(config.train, seed=seed), grid)

    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    columns = ("lambda_ifc", "lambda_fc", "auc", "ddp", "deo")
    with open(out / "tradeoff.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for point in points:
            row = point.tradeoff_row()
            # repr round-trips floats exactly; failed points leave blanks
            writer.writerow(["" if row[c] is None else repr(float(row[c])) for c in columns])

    for point in points:
        if point.report is None:
            print(f"lambda_ifc={point.lambda_ifc:g} lambda_fc={point.lambda_fc:g} failed: {point.error}")
        else:
            r = point.report
            print(
                f"lambda_ifc={point.lambda_ifc:g} lambda_fc={point.lambda_fc:g} "
                f"auc={r.auc:.4f} ddp={r.ddp:.4f} deo={r.deo:.4f}"
            )
    return 0


def cmd_explain(args) -> int:
    model, schema, meta = load_model(args.model)
    if not isinstance(model, FairIntModel):
        raise UsageError(
            "saved model has no interaction attention (trained with the"
            " interaction module disabled); nothing to explain"
        )
    if args.schema is not None:
        schema = load_schema(args.schema)
    dataset = _dataset_for_model(meta, schema, args.csv)
    batch = full_batch(dataset, args.split)
    if batch.size == 0:
        raise UsageError(f"split {args.split!r} has no rows")
    trace = model.forward(batch.features, training=False)

    heads = []
    for h, tensor in enumerate(trace.attention):
        weights = tensor.values  # (rows, features), each row sums to 1
        features = []
        for c, name in enumerate(trace.feature_order):
            column = weights[:, c]
            features.append(
                {
                    "feature": name,
                    "mean": float(column.mean()),
                    "variance": float(column.var()),
                    "min": float(column.min()),
                    "max": float(column.max()),
                }
            )
        heads.append({"head": h, "features": features})

    out_path = Path(args.out) if args.out else Path(args.model).parent / "attention.json"
    _emit({"split": args.split, "heads": heads}, out_path)
    return 0


def cmd_probe(args) -> int:
    schema = load_schema(args.schema)
    dataset = load_csv(args.csv, schema)
    result = sensitive_probe(dataset)
    _emit({"intercept": result.intercept, "coefficients": result.as_rows()}, args.out)
    return 0


def cmd_synth(args) -> int:
    dataset = synth_generate(n=args.n, bias_strength=args.beta, proxy_corr=args.rho, seed=args.seed)
    out_path = Path(args.out)
    schema_path = out_path.with_suffix(".schema.json")
    save_csv(dataset, out_path)
    save_schema(dataset.schema, schema_path)
    print(f"wrote {out_path} and {schema_path}")
    return 0


# -- parser --------------------------------------------------------------------


def _metric_flags(parser) -> None:
    parser.add_argument("--threshold", type=float, default=0.5, help="decision threshold")
    parser.add_argument(
        "--groups-from",
        choices=("true", "pseudo"),
        default="true",
        help="measure fairness gaps against the true sensitive column or the reconstructed one",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairint",
        description="Fair tabular classification by repairing biased feature interactions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from an experiment config")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--seed", type=int, default=None, help="override the config's seed")
    _metric_flags(p)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="score a saved model on a CSV file")
    p.add_argument("--model", required=True, help="model file written by train")
    p.add_argument("--csv", required=True)
    p.add_argument("--schema", default=None, help="schema JSON; defaults to the one saved in the model")
    p.add_argument("--split", choices=("train", "val", "test", "all"), default="all")
    _metric_flags(p)
    p.add_argument("--out", default=None, help="also write the report JSON here")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("sweep", help="train one model per fairness-weight pair")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--grid", required=True, help="semicolon-separated lambda_ifc,lambda_fc pairs")
    p.add_argument("--seed", type=int, default=None, help="override the config's seed")
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("explain", help="summarize a saved model's attention per feature")
    p.add_argument("--model", required=True, help="model file written by train")
    p.add_argument("--csv", required=True)
    p.add_argument("--schema", default=None, help="schema JSON; defaults to the one saved in the model")
    p.add_argument("--split", choices=("train", "val", "test", "all"), default="all")
    p.add_argument("--out", default=None, help="where to write attention.json (default: next to the model)")
    p.set_defaults(handler=cmd_explain)

    p = sub.add_parser("probe", help="fit a linear probe predicting the sensitive column")
    p.add_argument("--csv", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", default=None, help="also write the coefficient JSON here")
    p.set_defaults(handler=cmd_probe)

    p = sub.add_parser("synth", help="generate the synthetic benchmark dataset")
    p.add_argument("--n", type=int, required=True, help="number of rows (at least 100)")
    p.add_argument("--beta", type=float, required=True, help="direct group effect on the label")
    p.add_argument("--rho", type=float, required=True, help="proxy correlation in [0, 1]")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="CSV path; the schema lands next to it")
    p.set_defaults(handler=cmd_synth)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except FairIntError as exc:  # training, metric, numeric: the run itself failed
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
