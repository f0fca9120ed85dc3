"""Experiment runner: `mcad synth|train|bench --config <json>`.

The config document mirrors ExperimentConfig: dataset source and its
parameters, the experiment's normal categories (explicit ids or an m-sweep),
the algorithm subset, hyperparameters, evaluation seeds, and output options.
`--out` and `--seed` override the file. MCAD_THREADS caps benchmark workers
(0 = sequential).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
import time
from dataclasses import dataclass, field, replace

from .data import SplitSpec, SyntheticSpec, gen_gaussian_classes, load_csv, load_idx, save_csv, select_normal
from .detectors import Hyperparams, TrainingLog
from .errors import ConfigurationError, McadError
from .evaluate import ALGORITHMS, BenchmarkPlan, plan_combinations, run_benchmark
from .multiclass import multi_to_dict
from .evaluate import _TRAINERS as TRAINERS

_SOURCES = ("idx", "csv", "synthetic")
_FORMATS = ("csv", "json", "both")


@dataclass(frozen=True)
class DatasetConfig:
    source: str
    path: str | None = None
    images: str | None = None
    labels: str | None = None
    synthetic: SyntheticSpec | None = None

    def __post_init__(self):
        if self.source not in _SOURCES:
            raise ConfigurationError(
                f"dataset.source {self.source!r} must be one of {_SOURCES}"
            )
        if self.source == "csv" and not self.path:
            raise ConfigurationError("dataset.path required for csv source")
        if self.source == "idx" and not (self.images and self.labels):
            raise ConfigurationError("dataset.images and dataset.labels required")
        if self.source == "synthetic" and self.synthetic is None:
            raise ConfigurationError("dataset.synthetic spec required")


@dataclass(frozen=True)
class ExperimentSection:
    normal_ids: tuple[int, ...] | None = None
    m: int | None = None
    sweep: bool = False
    combination_limit: int | None = 20

    def __post_init__(self):
        if self.normal_ids is not None:
            object.__setattr__(
                self, "normal_ids", tuple(int(i) for i in self.normal_ids)
            )


@dataclass(frozen=True)
class EvalSection:
    seeds: int = 1
    base_seed: int = 0

    def __post_init__(self):
        if self.seeds < 1:
            raise ConfigurationError(f"eval.seeds must be >= 1, got {self.seeds}")


@dataclass(frozen=True)
class OutputSection:
    directory: str = "out"
    formats: str = "both"

    def __post_init__(self):
        if self.formats not in _FORMATS:
            raise ConfigurationError(
                f"output.formats {self.formats!r} must be one of {_FORMATS}"
            )


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    algorithms: tuple[str, ...] = ALGORITHMS
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    eval: EvalSection = field(default_factory=EvalSection)
    output: OutputSection = field(default_factory=OutputSection)

    def __post_init__(self):
        algos = tuple(self.algorithms)
        if not algos:
            raise ConfigurationError("algorithms must name at least one algorithm")
        for name in algos:
            if name not in ALGORITHMS:
                raise ConfigurationError(
                    f"unknown algorithm {name!r}, expected subset of {ALGORITHMS}"
                )
        object.__setattr__(self, "algorithms", algos)


def _build(cls, payload, context):
    if not isinstance(payload, dict):
        raise ConfigurationError(f"{context}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(payload) - names
    if unknown:
        raise ConfigurationError(f"{context}: unknown keys {sorted(unknown)}")
    try:
        return cls(**payload)
    except TypeError as exc:
        raise ConfigurationError(f"{context}: {exc}") from None


def config_from_dict(doc):
    if not isinstance(doc, dict):
        raise ConfigurationError("config must be a JSON object")
    known = {"dataset", "experiment", "algorithms", "hyperparams", "eval", "output"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigurationError(f"config: unknown keys {sorted(unknown)}")
    if "dataset" not in doc:
        raise ConfigurationError("config: dataset section required")
    ds_payload = dict(doc["dataset"])
    synth = ds_payload.get("synthetic")
    if synth is not None:
        ds_payload["synthetic"] = _build(SyntheticSpec, synth, "dataset.synthetic")
    dataset = _build(DatasetConfig, ds_payload, "dataset")
    experiment = _build(ExperimentSection, doc.get("experiment", {}), "experiment")
    hp_payload = dict(doc.get("hyperparams", {}))
    if "hidden_dims" in hp_payload:
        hp_payload["hidden_dims"] = tuple(hp_payload["hidden_dims"])
    hyperparams = _build(Hyperparams, hp_payload, "hyperparams")
    evaluation = _build(EvalSection, doc.get("eval", {}), "eval")
    output = _build(OutputSection, doc.get("output", {}), "output")
    algorithms = tuple(doc.get("algorithms", ALGORITHMS))
    return ExperimentConfig(
        dataset=dataset,
        experiment=experiment,
        algorithms=algorithms,
        hyperparams=hyperparams,
        eval=evaluation,
        output=output,
    )


def config_to_dict(config):
    doc = {
        "dataset": {"source": config.dataset.source},
        "experiment": {
            "normal_ids": None
            if config.experiment.normal_ids is None
            else list(config.experiment.normal_ids),
            "m": config.experiment.m,
            "sweep": config.experiment.sweep,
            "combination_limit": config.experiment.combination_limit,
        },
        "algorithms": list(config.algorithms),
        "hyperparams": {
            **dataclasses.asdict(config.hyperparams),
            "hidden_dims": list(config.hyperparams.hidden_dims),
        },
        "eval": dataclasses.asdict(config.eval),
        "output": dataclasses.asdict(config.output),
    }
    ds = config.dataset
    if ds.path is not None:
        doc["dataset"]["path"] = ds.path
    if ds.images is not None:
        doc["dataset"]["images"] = ds.images
    if ds.labels is not None:
        doc["dataset"]["labels"] = ds.labels
    if ds.synthetic is not None:
        doc["dataset"]["synthetic"] = dataclasses.asdict(ds.synthetic)
    return doc


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(doc)


def resolve_dataset(config):
    ds = config.dataset
    if ds.source == "synthetic":
        return gen_gaussian_classes(ds.synthetic)
    if ds.source == "csv":
        return load_csv(ds.path)
    return load_idx(ds.images, ds.labels)


def _ensure_outdir(config):
    outdir = config.output.directory
    os.makedirs(outdir, exist_ok=True)
    return outdir


def cmd_synth(config):
    """Generate the configured synthetic dataset and write it as CSV."""
    if config.dataset.source != "synthetic":
        raise ConfigurationError("synth requires dataset.source == 'synthetic'")
    dataset = gen_gaussian_classes(config.dataset.synthetic)
    outdir = _ensure_outdir(config)
    path = os.path.join(outdir, "dataset.csv")
    save_csv(dataset, path)
    print(f"wrote {path}: N={dataset.n_samples} k={dataset.k} d={dataset.dim}")
    return 0


def cmd_train(config):
    """Train the requested algorithms on explicit normal categories and
    write one detector bundle per algorithm plus a per-epoch loss log."""
    if config.experiment.normal_ids is None:
        raise ConfigurationError("train requires experiment.normal_ids")
    dataset = resolve_dataset(config)
    outdir = _ensure_outdir(config)
    base_seed = config.eval.base_seed
    split = select_normal(
        dataset, SplitSpec(normal_ids=config.experiment.normal_ids, seed=base_seed)
    )
    hp = replace(config.hyperparams, seed=base_seed)
    if hp.epochs_pretrain == 0 or hp.epochs_finetune == 0:
        print("warning: a training phase has 0 epochs; bundles hold "
              "initialization-level parameters", file=sys.stderr)
    log_rows = []
    for name in config.algorithms:
        record = TrainingLog()
        md = TRAINERS[name](split.train_by_category, hp, record=record)
        bundle_path = os.path.join(outdir, f"detectors_{name}.json")
        with open(bundle_path, "w", encoding="utf-8") as fh:
            json.dump(multi_to_dict(md), fh, sort_keys=True)
        log_rows.extend((name, *row) for row in record.rows)
        print(f"wrote {bundle_path} ({len(md.detectors)} encoder(s))")
    log_path = os.path.join(outdir, "training_log.csv")
    with open(log_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["algorithm", "phase", "category", "epoch", "loss"])
        for name, phase, category, epoch, loss in log_rows:
            writer.writerow([name, phase, category, epoch, repr(loss)])
    print(f"wrote {log_path}")
    return 0


def _combo_label(combination):
    return "-".join(str(c) for c in combination)


def _summary_payload(summary):
    return {
        "normal_ids": list(summary.combination),
        "mean": summary.mean,
        "ci95": summary.ci95,
        "per_run": list(summary.per_run),
    }


def cmd_bench(config):
    """Sweep combinations x algorithms x seeds; stream per-run rows to
    results.csv, then write aggregate results.json and scatter.dat."""
    dataset = resolve_dataset(config)
    outdir = _ensure_outdir(config)
    exp = config.experiment
    plan = BenchmarkPlan(
        dataset=dataset,
        algorithms=config.algorithms,
        m=exp.m,
        normal_ids=exp.normal_ids,
        sweep=exp.sweep,
        combination_limit=exp.combination_limit,
        seeds=config.eval.seeds,
        base_seed=config.eval.base_seed,
        hyperparams=config.hyperparams,
    )
    combos = plan_combinations(plan)
    combo_index = {tuple(c): i for i, c in enumerate(combos)}

    write_csv = config.output.formats in ("csv", "both")
    write_json = config.output.formats in ("json", "both")
    csv_path = os.path.join(outdir, "results.csv")
    csv_file = None
    writer = None
    if write_csv:
        csv_file = open(csv_path, "w", encoding="utf-8", newline="")
        writer = csv.writer(csv_file)
        writer.writerow(["algorithm", "normal_classes", "seed", "auc", "runtime_s"])
        csv_file.flush()

    def on_row(row):
        if writer is not None:
            writer.writerow(
                [
                    row.algorithm,
                    _combo_label(row.combination),
                    row.seed,
                    repr(row.auc),
                    f"{row.runtime_s:.3f}",
                ]
            )
            csv_file.flush()

    started = time.perf_counter()
    try:
        result = run_benchmark(plan, on_row=on_row)
    except Exception as exc:
        if csv_file is not None:
            csv_file.close()
            print(f"partial rows flushed to {csv_path}", file=sys.stderr)
        print(f"benchmark failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if csv_file is not None:
        csv_file.close()
        print(f"wrote {csv_path}")

    if write_json:
        payload = {"algorithms": {}}
        for name in plan.algorithms:
            summaries = result.summaries[name]
            by_mean = sorted(summaries, key=lambda s: s.mean)
            payload["algorithms"][name] = {
                "combinations": [_summary_payload(s) for s in summaries],
                "range": {
                    "min": _summary_payload(by_mean[0]),
                    "max": _summary_payload(by_mean[-1]),
                },
            }
        json_path = os.path.join(outdir, "results.json")
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True, indent=1)
        print(f"wrote {json_path}")

    scatter_path = os.path.join(outdir, "scatter.dat")
    with open(scatter_path, "w", encoding="utf-8") as fh:
        for name in plan.algorithms:
            for summary in result.summaries[name]:
                idx = combo_index[summary.combination]
                fh.write(f"{idx} {repr(summary.mean)} {name}\n")
    print(f"wrote {scatter_path}")

    for name in plan.algorithms:
        means = [s.mean for s in result.summaries[name]]
        print(
            f"{name}: combinations={len(means)} "
            f"auc range {min(means):.4f} .. {max(means):.4f} "
            f"({time.perf_counter() - started:.1f}s total)"
        )
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="mcad", description="multi-class anomaly detection experiments"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("synth", "generate a synthetic dataset CSV"),
        ("train", "train detector bundles on explicit normal categories"),
        ("bench", "run the seeded benchmark sweep"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="path to a JSON config")
        p.add_argument("--out", help="override output.directory")
        p.add_argument("--seed", type=int, help="override eval.base_seed")
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        if args.out is not None:
            config = replace(config, output=replace(config.output, directory=args.out))
        if args.seed is not None:
            config = replace(config, eval=replace(config.eval, base_seed=args.seed))
        handler = {"synth": cmd_synth, "train": cmd_train, "bench": cmd_bench}
        return handler[args.command](config)
    except McadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
