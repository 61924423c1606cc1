"""Operator entry point: train, xval, importance, simulate, calibrate.

Every subcommand is deterministic under --seed, writes its reports (text,
CSV, and rendered figures) under --out-dir, and exits 0 only when no error
path was taken.  Errors print one machine-parsable line to stderr:
``error: <Kind>: <message>``.

An optional config file mirrors the long flags as key=value lines
(underscores or dashes both accepted); explicit flags win over the file.
"""

from __future__ import annotations

import argparse
import sys

from . import datasets, evaluate, nfssim, report
from .errors import ConfigError, IoTunerError
from .cachesim import CacheSim
from .model_io import load_model, save_model
from .pipeline import read_trace_csv
from .tuner import (
    DEFAULT_READAHEAD,
    DEFAULT_RSIZE,
    READAHEAD_CANDIDATES,
    RSIZE_VALUES,
    TunerPolicy,
    calibrate_readahead,
    simulate,
)
from .workloads import (
    TRAINING_CLASSES,
    WORKLOAD_KINDS,
    WorkloadSpec,
    back_to_back,
    generate_trace,
    mixed_pair,
)

ARCHES = {"readahead": (5, 15), "nfs": (25, 10, 5)}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="run seed (default 0)")
    p.add_argument("--out-dir", default=None, help="report directory (default ./out)")
    p.add_argument("--config", default=None,
                   help="key=value file mirroring the long flags; flags win")


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--schema", choices=("readahead", "nfs"), default=None)
    p.add_argument("--data", default=None, help="labeled feature CSV")
    p.add_argument("--trace", action="append", default=None,
                   metavar="PATH=LABEL", help="trace CSV with its class label")
    p.add_argument("--model-kind", choices=("nn", "dtree"), default=None)
    p.add_argument("--epochs", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="iotuner")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a classifier and write a model file")
    _add_common(p)
    _add_data_flags(p)
    p.add_argument("--model", default=None, help="output model path")

    p = sub.add_parser("xval", help="k-fold cross validation")
    _add_common(p)
    _add_data_flags(p)
    p.add_argument("--k", type=int, default=None, help="fold count (default 10)")

    p = sub.add_parser("importance", help="permutation feature importance")
    _add_common(p)
    _add_data_flags(p)
    p.add_argument("--k", type=int, default=None)

    p = sub.add_parser("simulate", help="replay a workload under a tuning policy")
    _add_common(p)
    p.add_argument("--target", choices=("readahead", "rsize"), default=None)
    p.add_argument("--trace", default=None, help="trace CSV to replay")
    p.add_argument("--workload", default=None,
                   help="workload kind, or comma list for back-to-back runs")
    p.add_argument("--mix", default=None, metavar="A+B",
                   help="two workloads running concurrently on separate files")
    p.add_argument("--duration", type=int, default=None, help="seconds per workload")
    p.add_argument("--device", choices=("nvme", "sata"), default=None)
    p.add_argument("--mode", choices=("vanilla", "per-disk", "per-file"), default=None)
    p.add_argument("--model", default=None, help="deployment file for tuned modes")
    p.add_argument("--mapping", default=None,
                   help="class=value map file from calibrate (tuned modes)")
    p.add_argument("--readahead", type=int, default=None,
                   help="fixed sectors for vanilla mode")
    p.add_argument("--rsize", type=int, default=None,
                   help="fixed bytes for vanilla rsize runs")
    p.add_argument("--capacity-pages", type=int, default=None)
    p.add_argument("--iterations", type=int, default=None, help="rsize runs only")

    p = sub.add_parser("calibrate", help="sweep fixed values, write the class map")
    _add_common(p)
    p.add_argument("--target", choices=("readahead", "rsize"), default=None)
    p.add_argument("--device", choices=("nvme", "sata"), default=None)
    p.add_argument("--duration", type=int, default=None)
    p.add_argument("--capacity-pages", type=int, default=None)
    p.add_argument("--workloads", default=None, help="comma list (default: training classes)")
    p.add_argument("--candidates", default=None,
                   help="comma list of readahead sectors to sweep")
    return ap


def _load_config(path: str | None) -> dict[str, str]:
    if not path:
        return {}
    try:
        raw = report.read_keyvalues(path)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return {k.replace("-", "_"): v for k, v in raw.items()}


def _opt(args, config: dict, name: str, default, cast=None):
    """Flag if given, else config-file value, else the built-in default."""
    value = getattr(args, name, None)
    if value is not None:
        return value
    if name in config:
        raw = config[name]
        return cast(raw) if cast else raw
    return default


def _load_dataset(args, config, schema: str, seed: int) -> datasets.Dataset:
    data_path = _opt(args, config, "data", None)
    traces = _opt(args, config, "trace", None)
    if data_path:
        return datasets.read_feature_csv(data_path, schema=schema)
    if traces:
        if isinstance(traces, str):
            traces = [traces]
        if schema != "readahead":
            raise ConfigError("trace-file datasets are readahead-schema only")
        xs, ys = [], []
        index = {name: i for i, name in enumerate(TRAINING_CLASSES)}
        for item in traces:
            path, sep, label = item.partition("=")
            if not sep or label not in index:
                raise ConfigError(
                    f"--trace wants PATH=LABEL with label in {TRAINING_CLASSES}, got {item!r}"
                )
            trace = read_trace_csv(path)
            for row in datasets.harvest_readahead_windows(trace, DEFAULT_READAHEAD):
                xs.append(row)
                ys.append(index[label])
        import numpy as np
        return datasets.Dataset(np.asarray(xs, dtype=np.float32),
                                np.asarray(ys, dtype=np.int64),
                                schema, TRAINING_CLASSES)
    # self-contained synthetic corpus
    if schema == "nfs":
        return datasets.build_nfs_dataset(seed=seed)
    return datasets.build_readahead_dataset(seed=seed)


def _template(args, config, schema: str) -> evaluate.ModelTemplate:
    kind = _opt(args, config, "model_kind", "nn")
    epochs = _opt(args, config, "epochs", 30, int)
    return evaluate.ModelTemplate(kind=kind, hidden=ARCHES[schema], epochs=epochs)


def cmd_train(args, config) -> int:
    seed = _opt(args, config, "seed", 0, int)
    out_dir = _opt(args, config, "out_dir", "out")
    schema = _opt(args, config, "schema", "readahead")
    ds = _load_dataset(args, config, schema, seed)
    template = _template(args, config, schema)
    result = evaluate.train_model(ds, template, seed=seed)
    model_path = _opt(args, config, "model", None) or f"{out_dir}/model_{schema}_{template.kind}.bin"
    report._ensure_dir(out_dir)
    save_model(result.model, result.normalizer.snapshot(), model_path, schema=schema)
    extra = {"model_path": model_path, "model_kind": template.kind,
             "schema": schema, "samples": len(ds)}
    if template.kind == "dtree":
        extra["tree_nodes"], extra["tree_depth"] = result.model.stats()
    paths = report.write_training_report(result.losses, result.train_accuracy,
                                         out_dir, extra=extra)
    print(f"trained {template.kind} on {len(ds)} samples: "
          f"training accuracy {result.train_accuracy:.4f}")
    if result.losses:
        print(f"loss: first epoch {result.losses[0]:.4f}, "
              f"final epoch {result.losses[-1]:.4f}")
    print(f"model written to {model_path}")
    print(f"report written to {paths['report']}")
    return 0


def cmd_xval(args, config) -> int:
    seed = _opt(args, config, "seed", 0, int)
    out_dir = _opt(args, config, "out_dir", "out")
    schema = _opt(args, config, "schema", "readahead")
    k = _opt(args, config, "k", 10, int)
    ds = _load_dataset(args, config, schema, seed)
    template = _template(args, config, schema)
    result = evaluate.kfold_evaluate(ds, template, seed=seed, k=k)
    paths = report.write_xval_report(result, out_dir)
    for i, acc in enumerate(result.fold_accuracies):
        print(f"fold {i}: accuracy {acc:.4f}")
    print(f"mean accuracy over {k} folds: {result.mean_accuracy:.4f}")
    print("class frequencies: "
          + ", ".join(f"{c}={f:.3f}" for c, f in result.class_frequencies.items()))
    print(f"report written to {paths['report']}")
    return 0


def cmd_importance(args, config) -> int:
    seed = _opt(args, config, "seed", 0, int)
    out_dir = _opt(args, config, "out_dir", "out")
    schema = _opt(args, config, "schema", "readahead")
    k = _opt(args, config, "k", 10, int)
    ds = _load_dataset(args, config, schema, seed)
    template = _template(args, config, schema)
    baseline = evaluate.kfold_evaluate(ds, template, seed=seed, k=k).mean_accuracy
    names = datasets.SCHEMA_FEATURE_NAMES[schema]
    rows = []
    for idx, name in enumerate(names):
        acc = evaluate.permutation_importance(ds, template, idx, seed=seed, k=k)
        rows.append((name, acc))
    rows.sort(key=lambda r: r[1])
    paths = report.write_importance_report(rows, baseline, out_dir)
    print(f"unpermuted accuracy: {baseline:.4f}")
    for name, acc in rows:
        print(f"permuted {name}: accuracy {acc:.4f} (drop {baseline - acc:+.4f})")
    print(f"report written to {paths['report']}")
    return 0


def _read_mapping(path: str, rsize: bool = False) -> dict[int, int]:
    raw = report.read_keyvalues(path)
    out = {}
    for i, kind in enumerate(TRAINING_CLASSES):
        if kind in raw:
            out[i] = int(raw[kind])
    if not out:
        raise ConfigError(f"{path}: no class=value lines for {TRAINING_CLASSES}")
    return out


def _build_trace(args, config, seed: int):
    trace_path = _opt(args, config, "trace", None)
    workload = _opt(args, config, "workload", None)
    mix = _opt(args, config, "mix", None)
    duration = _opt(args, config, "duration", 30, int)
    given = sum(x is not None for x in (trace_path, workload, mix))
    if given != 1:
        raise ConfigError("exactly one of --trace, --workload, --mix is required")
    if trace_path:
        return read_trace_csv(trace_path)
    if mix:
        a, sep, b = mix.partition("+")
        if not sep or a not in WORKLOAD_KINDS or b not in WORKLOAD_KINDS:
            raise ConfigError(f"--mix wants A+B with kinds from {WORKLOAD_KINDS}")
        return mixed_pair(WorkloadSpec(kind=a, duration_seconds=duration, seed=seed),
                          WorkloadSpec(kind=b, duration_seconds=duration, seed=seed + 1))
    kinds = [w.strip() for w in workload.split(",")]
    for w in kinds:
        if w not in WORKLOAD_KINDS:
            raise ConfigError(f"unknown workload {w!r}; choices {WORKLOAD_KINDS}")
    if len(kinds) == 1:
        return generate_trace(WorkloadSpec(kind=kinds[0], duration_seconds=duration,
                                           seed=seed))
    specs = [WorkloadSpec(kind=w, duration_seconds=duration, seed=seed + i)
             for i, w in enumerate(kinds)]
    trace, _ = back_to_back(specs)
    return trace


def cmd_simulate(args, config) -> int:
    seed = _opt(args, config, "seed", 0, int)
    out_dir = _opt(args, config, "out_dir", "out")
    target = _opt(args, config, "target", "readahead")
    device = _opt(args, config, "device", "nvme")
    if target == "rsize":
        return _simulate_rsize(args, config, seed, out_dir, device)

    mode_flag = _opt(args, config, "mode", "vanilla")
    mode = {"vanilla": "vanilla_fixed", "per-disk": "per_disk",
            "per-file": "per_file"}[mode_flag]
    capacity = _opt(args, config, "capacity_pages", 1024, int)
    fixed = _opt(args, config, "readahead", DEFAULT_READAHEAD, int)
    trace = _build_trace(args, config, seed)
    cache = CacheSim(capacity, device)

    if mode == "vanilla_fixed":
        policy = TunerPolicy(mode=mode, fixed_readahead=fixed)
        run = simulate(trace, cache, policy)
    else:
        model_path = _opt(args, config, "model", None)
        mapping_path = _opt(args, config, "mapping", None)
        if not model_path or not mapping_path:
            raise ConfigError("tuned modes need --model and --mapping")
        model, normalizer, schema = load_model(model_path)
        if schema != "readahead":
            raise ConfigError(f"model {model_path} carries schema {schema!r}, "
                              "simulate needs a readahead model")
        policy = TunerPolicy(mode=mode, readahead_map=_read_mapping(mapping_path))
        run = simulate(trace, cache, policy, model=model, normalizer=normalizer,
                       initial_readahead=fixed)
    paths = report.write_run_report(run, out_dir, class_names=TRAINING_CLASSES)
    print(f"{run.mode} on {device}: {run.total_ops} ops, "
          f"throughput {run.throughput:.1f} ops/s")
    for fid in sorted(run.per_file_ops):
        print(f"file {fid}: throughput {run.file_throughput(fid):.1f} ops/s")
    print(f"report written to {paths['report']}")
    return 0


def _simulate_rsize(args, config, seed: int, out_dir: str, device: str) -> int:
    workload = _opt(args, config, "workload", None)
    if not workload or workload not in WORKLOAD_KINDS:
        raise ConfigError(f"--target rsize needs --workload from {WORKLOAD_KINDS}")
    iterations = _opt(args, config, "iterations", 6, int)
    fixed = _opt(args, config, "rsize", DEFAULT_RSIZE, int)
    capacity = _opt(args, config, "capacity_pages", 2048, int)
    spec = WorkloadSpec(kind=workload, file_size_pages=8192, seed=seed)
    ops = datasets.NFS_OPS_PER_ITERATION.get(workload, 10_000)
    model_path = _opt(args, config, "model", None)
    if model_path:
        mapping_path = _opt(args, config, "mapping", None)
        if not mapping_path:
            raise ConfigError("tuned rsize runs need --mapping")
        model, normalizer, schema = load_model(model_path)
        if schema != "nfs":
            raise ConfigError(f"model {model_path} carries schema {schema!r}, "
                              "rsize runs need an nfs model")
        policy = TunerPolicy(mode="per_disk",
                             rsize_map=_read_mapping(mapping_path, rsize=True))
        run = nfssim.run_nfs(spec, net=device, capacity_pages=capacity,
                             iterations=iterations, ops_per_iteration=ops,
                             policy=policy, model=model, normalizer=normalizer,
                             initial_rsize=fixed)
    else:
        run = nfssim.run_nfs(spec, net=device, capacity_pages=capacity,
                             iterations=iterations, ops_per_iteration=ops,
                             initial_rsize=fixed)
    paths = report.write_nfs_report(run, out_dir, class_names=TRAINING_CLASSES)
    print(f"nfs {workload} on {device}: throughput {run.throughput:.1f} ops/s")
    print("rsize per iteration: "
          + ", ".join(f"{it}:{r}" for it, r in run.rsize_timeline))
    print(f"report written to {paths['report']}")
    return 0


def cmd_calibrate(args, config) -> int:
    seed = _opt(args, config, "seed", 0, int)
    out_dir = _opt(args, config, "out_dir", "out")
    target = _opt(args, config, "target", "readahead")
    device = _opt(args, config, "device", "nvme")
    duration = _opt(args, config, "duration", 12, int)
    capacity = _opt(args, config, "capacity_pages", 1024, int)
    names = _opt(args, config, "workloads", None)
    kinds = ([w.strip() for w in names.split(",")] if names
             else list(TRAINING_CLASSES))
    for w in kinds:
        if w not in WORKLOAD_KINDS:
            raise ConfigError(f"unknown workload {w!r}")

    if target == "rsize":
        specs = {k: WorkloadSpec(kind=k, file_size_pages=8192, seed=seed)
                 for k in kinds}
        result = nfssim.calibrate_rsize(specs, net=device,
                                        capacity_pages=_opt(args, config, "capacity_pages", 2048, int))
        paths = report.write_rsize_calibration(result, out_dir)
        for kind, value in result["best"].items():
            print(f"{kind}={value}")
        print(f"mapping written to {paths['mapping']}")
        return 0

    raw = _opt(args, config, "candidates", None)
    if raw is not None and not str(raw).strip():
        raise ConfigError("--candidates list is empty")
    candidates = (tuple(int(c) for c in str(raw).split(",")) if raw
                  else READAHEAD_CANDIDATES)
    if not candidates:
        raise ConfigError("--candidates list is empty")
    specs = {k: WorkloadSpec(kind=k, duration_seconds=duration, seed=seed)
             for k in kinds}
    cal = calibrate_readahead(specs, device=device, capacity_pages=capacity,
                              candidates=candidates)
    paths = report.write_calibration(cal, out_dir)
    for kind, value in cal.best.items():
        print(f"{kind}={value}")
    print(f"mapping written to {paths['mapping']}")
    return 0


COMMANDS = {
    "train": cmd_train,
    "xval": cmd_xval,
    "importance": cmd_importance,
    "simulate": cmd_simulate,
    "calibrate": cmd_calibrate,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    config = {}
    try:
        config = _load_config(getattr(args, "config", None))
        return COMMANDS[args.command](args, config)
    except IoTunerError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
