"""Run reports: key=value text, CSV timelines, and rendered figures.

Every reporting entry point writes three artifacts side by side: a
machine-parsable ``<name>.txt`` of key=value lines, a ``<name>.csv`` with
the underlying series, and a ``<name>.png`` rendering of the same data.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .pipeline import NFS_FEATURE_NAMES, READAHEAD_FEATURE_NAMES
from .tuner import DISK_SCOPE, CalibrationResult, RunReport

FIGSIZE = (7.0, 3.6)
DPI = 110


def _ensure_dir(out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


def write_keyvalues(path: str, items: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in items.items():
            fh.write(f"{key}={value}\n")


def read_keyvalues(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def _new_axes(title: str, xlabel: str, ylabel: str):
    fig, ax = plt.subplots(figsize=FIGSIZE, dpi=DPI)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    return fig, ax


def _save(fig, path: str) -> None:
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def write_run_report(report: RunReport, out_dir: str, name: str = "run",
                     class_names=None) -> dict[str, str]:
    """RunReport -> report text, per-second timeline CSV, timeline figure."""
    out_dir = _ensure_dir(out_dir)
    paths = {
        "report": os.path.join(out_dir, f"{name}.txt"),
        "timeline": os.path.join(out_dir, f"{name}_timeline.csv"),
        "figure": os.path.join(out_dir, f"{name}_timeline.png"),
    }
    write_keyvalues(paths["report"], report.summary())

    scopes = sorted({key for rec in report.seconds for key in rec.readahead})
    if not scopes:
        scopes = [DISK_SCOPE]
    with open(paths["timeline"], "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["second", "scope", "ops", "throughput_ops_per_sec",
                    "readahead_sectors", "predicted_class"])
        for rec in report.seconds:
            for scope in scopes:
                pred = rec.predicted.get(scope, "")
                if class_names is not None and pred != "":
                    pred = class_names[pred]
                w.writerow([rec.second, "disk" if scope == DISK_SCOPE else scope,
                            rec.ops, round(rec.throughput, 3),
                            rec.readahead.get(scope, ""), pred])

    fig, ax = _new_axes(f"{report.mode} on {report.device}",
                        "simulated second", "throughput (ops/s)")
    seconds = [rec.second for rec in report.seconds]
    ax.plot(seconds, [rec.throughput for rec in report.seconds],
            color="tab:blue", label="throughput")
    ax2 = ax.twinx()
    ax2.set_ylabel("readahead (sectors)")
    for scope in scopes:
        series = [rec.readahead.get(scope) for rec in report.seconds]
        label = "readahead" if scope == DISK_SCOPE else f"readahead file {scope}"
        ax2.step(seconds, series, where="post", linestyle="--", label=label)
    lines, labels = ax.get_legend_handles_labels()
    l2, lab2 = ax2.get_legend_handles_labels()
    ax.legend(lines + l2, labels + lab2, loc="best", fontsize=8)
    _save(fig, paths["figure"])
    return paths


def write_calibration(cal: CalibrationResult, out_dir: str,
                      name: str = "calibration") -> dict[str, str]:
    """Sweep -> mapping text (one class=value line each), CSV, figure."""
    out_dir = _ensure_dir(out_dir)
    paths = {
        "mapping": os.path.join(out_dir, f"{name}_map.txt"),
        "sweep": os.path.join(out_dir, f"{name}_sweep.csv"),
        "figure": os.path.join(out_dir, f"{name}_sweep.png"),
    }
    with open(paths["mapping"], "w", encoding="utf-8") as fh:
        for kind, value in cal.best.items():
            fh.write(f"{kind}={value}\n")
    with open(paths["sweep"], "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["workload", "readahead_sectors", "throughput_ops_per_sec"])
        for kind, rows in cal.sweep.items():
            for sectors, tput in rows:
                w.writerow([kind, sectors, round(tput, 3)])

    fig, ax = _new_axes(f"fixed-readahead sweep ({cal.device})",
                        "readahead (sectors)", "throughput (ops/s)")
    for kind, rows in cal.sweep.items():
        ax.plot([r[0] for r in rows], [r[1] for r in rows], marker="o",
                markersize=3, label=kind)
    ax.set_xscale("log", base=2)
    ax.legend(fontsize=8)
    _save(fig, paths["figure"])
    return paths


def write_rsize_calibration(result: dict, out_dir: str,
                            name: str = "rsize") -> dict[str, str]:
    out_dir = _ensure_dir(out_dir)
    paths = {
        "mapping": os.path.join(out_dir, f"{name}_map.txt"),
        "sweep": os.path.join(out_dir, f"{name}_sweep.csv"),
        "figure": os.path.join(out_dir, f"{name}_sweep.png"),
    }
    with open(paths["mapping"], "w", encoding="utf-8") as fh:
        for kind, value in result["best"].items():
            fh.write(f"{kind}={value}\n")
    with open(paths["sweep"], "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["workload", "rsize_bytes", "throughput_ops_per_sec"])
        for kind, rows in result["sweep"].items():
            for rsize, tput in rows:
                w.writerow([kind, rsize, round(tput, 3)])
    fig, ax = _new_axes("fixed-rsize sweep", "rsize (bytes)", "throughput (ops/s)")
    for kind, rows in result["sweep"].items():
        ax.plot([r[0] for r in rows], [r[1] for r in rows], marker="o",
                markersize=3, label=kind)
    ax.set_xscale("log", base=2)
    ax.legend(fontsize=8)
    _save(fig, paths["figure"])
    return paths


def write_nfs_report(report, out_dir: str, name: str = "nfs_run",
                     class_names=None) -> dict[str, str]:
    out_dir = _ensure_dir(out_dir)
    paths = {
        "report": os.path.join(out_dir, f"{name}.txt"),
        "timeline": os.path.join(out_dir, f"{name}_timeline.csv"),
        "figure": os.path.join(out_dir, f"{name}_timeline.png"),
    }
    summary = {
        "total_ops": report.total_ops,
        "total_cost_ns": report.total_cost_ns,
        "throughput_ops_per_sec": round(report.throughput, 3),
    }
    for it, (ops, cost) in enumerate(zip(report.per_iteration_ops,
                                         report.per_iteration_cost_ns)):
        summary[f"iteration_{it}_ops"] = ops
        summary[f"iteration_{it}_rsize"] = report.rsize_timeline[it][1]
        summary[f"iteration_{it}_throughput"] = (
            round(ops / (cost / 1e9), 3) if cost else 0.0)
    write_keyvalues(paths["report"], summary)

    with open(paths["timeline"], "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "rsize_bytes"])
        for it, rsize in report.rsize_timeline:
            w.writerow([it, rsize])
        w.writerow([])
        w.writerow(["second", "predicted_class"])
        for second, cls in report.predicted_timeline:
            name_ = class_names[cls] if class_names else cls
            w.writerow([second, name_])

    fig, ax = _new_axes("NFS rsize timeline", "iteration", "rsize (bytes)")
    ax.step([it for it, _ in report.rsize_timeline],
            [r for _, r in report.rsize_timeline], where="post")
    ax.set_yscale("log", base=2)
    _save(fig, paths["figure"])
    return paths


def write_xval_report(result, out_dir: str, name: str = "xval") -> dict[str, str]:
    out_dir = _ensure_dir(out_dir)
    paths = {
        "report": os.path.join(out_dir, f"{name}.txt"),
        "folds": os.path.join(out_dir, f"{name}_folds.csv"),
        "figure": os.path.join(out_dir, f"{name}_folds.png"),
    }
    summary = {"mean_accuracy": round(result.mean_accuracy, 6),
               "folds": len(result.fold_accuracies)}
    for i, acc in enumerate(result.fold_accuracies):
        summary[f"fold_{i}_accuracy"] = round(acc, 6)
    for cls, freq in result.class_frequencies.items():
        summary[f"class_frequency_{cls}"] = round(freq, 6)
    write_keyvalues(paths["report"], summary)
    with open(paths["folds"], "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fold", "accuracy"])
        for i, acc in enumerate(result.fold_accuracies):
            w.writerow([i, round(acc, 6)])
    fig, ax = _new_axes("k-fold validation accuracy", "fold", "accuracy")
    ax.bar(range(len(result.fold_accuracies)), result.fold_accuracies,
           color="tab:blue")
    ax.axhline(result.mean_accuracy, color="tab:red", linestyle="--",
               label=f"mean {result.mean_accuracy:.3f}")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8)
    _save(fig, paths["figure"])
    return paths


def write_importance_report(rows: list[tuple[str, float]], baseline: float,
                            out_dir: str, name: str = "importance") -> dict[str, str]:
    """rows: (feature name, permuted accuracy), ranked most important first."""
    out_dir = _ensure_dir(out_dir)
    paths = {
        "report": os.path.join(out_dir, f"{name}.txt"),
        "table": os.path.join(out_dir, f"{name}.csv"),
        "figure": os.path.join(out_dir, f"{name}.png"),
    }
    summary = {"baseline_accuracy": round(baseline, 6)}
    for feat, acc in rows:
        summary[f"permuted_{feat}_accuracy"] = round(acc, 6)
    write_keyvalues(paths["report"], summary)
    with open(paths["table"], "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "permuted_accuracy", "drop"])
        for feat, acc in rows:
            w.writerow([feat, round(acc, 6), round(baseline - acc, 6)])
    fig, ax = _new_axes("permutation importance (lower = more important)",
                        "feature", "10-fold accuracy when permuted")
    ax.bar([r[0] for r in rows], [r[1] for r in rows], color="tab:orange")
    ax.axhline(baseline, color="tab:blue", linestyle="--",
               label=f"unpermuted {baseline:.3f}")
    ax.set_ylim(0, 1.05)
    ax.tick_params(axis="x", labelsize=8)
    ax.legend(fontsize=8)
    _save(fig, paths["figure"])
    return paths


def write_training_report(losses: list[float], accuracy: float, out_dir: str,
                          name: str = "train", extra: dict | None = None) -> dict[str, str]:
    out_dir = _ensure_dir(out_dir)
    paths = {
        "report": os.path.join(out_dir, f"{name}.txt"),
        "losses": os.path.join(out_dir, f"{name}_loss.csv"),
        "figure": os.path.join(out_dir, f"{name}_loss.png"),
    }
    summary = {"training_accuracy": round(accuracy, 6)}
    if losses:
        summary["first_epoch_loss"] = round(losses[0], 6)
        summary["final_epoch_loss"] = round(losses[-1], 6)
        summary["epochs"] = len(losses)
    if extra:
        summary.update(extra)
    write_keyvalues(paths["report"], summary)
    with open(paths["losses"], "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "mean_loss"])
        for i, loss in enumerate(losses):
            w.writerow([i, round(loss, 6)])
    fig, ax = _new_axes("training loss", "epoch", "mean cross-entropy")
    if losses:
        ax.plot(range(len(losses)), losses, color="tab:blue")
    _save(fig, paths["figure"])
    return paths


FEATURE_NAMES = {
    "readahead": READAHEAD_FEATURE_NAMES,
    "nfs": NFS_FEATURE_NAMES,
}
