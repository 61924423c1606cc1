"""Synthetic access-pattern generators for the six benchmark workload kinds.

Traces are columnar (numpy arrays) for replay speed; ``events()`` yields
row objects when object-level access is clearer.  Event pacing differs by
kind the way the real benchmarks differ: sequential scans push far more
operations per second than random point reads, which is itself a signal
the classifiers learn.

The four training classes are readrandom, readseq, readrandomwriterandom
and readreverse (class indices 0-3, in that order); updaterandom and
mixgraph exist only as never-trained-on evaluation workloads.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator

import numpy as np

from .pipeline import PAGE_CACHE_ADD, EVENT_KINDS, TraceEvent

WORKLOAD_KINDS = (
    "readrandom",
    "readseq",
    "readrandomwriterandom",
    "readreverse",
    "updaterandom",
    "mixgraph",
)

# classifier label order; maps match this order throughout the tuner
TRAINING_CLASSES = ("readrandom", "readseq", "readrandomwriterandom", "readreverse")
CLASS_INDEX = {name: i for i, name in enumerate(TRAINING_CLASSES)}

NS_PER_SEC = 1_000_000_000

# baseline event rates (events per second); sequential scans complete far
# more ops than random point reads, mirroring the throughput gap between
# the real benchmarks, and the gap itself is a feature the models learn
DEFAULT_OPS_PER_SECOND = {
    "readrandom": 1000,
    "readseq": 8000,
    "readrandomwriterandom": 2000,
    "readreverse": 3000,
    "updaterandom": 1200,
    "mixgraph": 2500,
}

WRITE_REGION_DIVISOR = 16  # rrwr appends land in the first 1/16th of the file


@dataclass
class WorkloadSpec:
    kind: str
    file_count: int = 1
    file_size_pages: int = 4096
    duration_seconds: int = 30
    ops_per_second: int | None = None   # None -> per-kind default
    seed: int = 0
    first_file_id: int = 0
    start_ns: int = 0
    rate_jitter: float = 0.10           # +-fraction of per-second rate noise
    pareto_shape: float = 1.2           # mixgraph sequential-run lengths
    pareto_scale: float = 48.0          # mixgraph mean run ~ scale/(shape-1)
    powerlaw_exponent: float = 0.3      # mixgraph hot-region popularity

    def __post_init__(self):
        if self.kind not in WORKLOAD_KINDS:
            raise ValueError(f"unknown workload kind {self.kind!r}")
        if min(self.file_count, self.file_size_pages, self.duration_seconds) < 1:
            raise ValueError("file_count, file_size_pages, duration_seconds must be positive")
        if self.ops_per_second is not None and self.ops_per_second < 1:
            raise ValueError("ops_per_second must be positive")

    @property
    def rate(self) -> int:
        return self.ops_per_second or DEFAULT_OPS_PER_SECOND[self.kind]


class Trace:
    """Column-oriented event stream: timestamps, kinds, files, offsets, reclaims."""

    def __init__(self, timestamps_ns, kinds, file_ids, offsets, reclaimed):
        self.timestamps_ns = np.asarray(timestamps_ns, dtype=np.int64)
        self.kinds = np.asarray(kinds, dtype=np.int8)
        self.file_ids = np.asarray(file_ids, dtype=np.int32)
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.reclaimed = np.asarray(reclaimed, dtype=np.int32)

    def __len__(self) -> int:
        return self.timestamps_ns.shape[0]

    @property
    def duration_seconds(self) -> int:
        if len(self) == 0:
            return 0
        return int(self.timestamps_ns[-1] // NS_PER_SEC) + 1

    def iter_rows(self):
        return zip(self.timestamps_ns.tolist(), self.kinds.tolist(),
                   self.file_ids.tolist(), self.offsets.tolist(),
                   self.reclaimed.tolist())

    def events(self) -> Iterator[TraceEvent]:
        for ts, kind, fid, off, rec in self.iter_rows():
            yield TraceEvent(ts, EVENT_KINDS[kind], fid, off, rec)

    @staticmethod
    def concat(traces: list["Trace"]) -> "Trace":
        return Trace(
            np.concatenate([t.timestamps_ns for t in traces]),
            np.concatenate([t.kinds for t in traces]),
            np.concatenate([t.file_ids for t in traces]),
            np.concatenate([t.offsets for t in traces]),
            np.concatenate([t.reclaimed for t in traces]),
        )

    @staticmethod
    def merge(traces: list["Trace"]) -> "Trace":
        """Interleave concurrent traces into one time-ordered stream."""
        merged = Trace.concat(traces)
        order = np.argsort(merged.timestamps_ns, kind="stable")
        return Trace(
            merged.timestamps_ns[order], merged.kinds[order],
            merged.file_ids[order], merged.offsets[order],
            merged.reclaimed[order],
        )


def _per_second_counts(spec: WorkloadSpec, rng: np.random.Generator) -> np.ndarray:
    base = spec.rate
    if spec.rate_jitter <= 0:
        return np.full(spec.duration_seconds, base, dtype=np.int64)
    lo = max(1, int(base * (1 - spec.rate_jitter)))
    hi = int(base * (1 + spec.rate_jitter)) + 1
    return rng.integers(lo, hi, size=spec.duration_seconds, dtype=np.int64)


def _timestamps(counts: np.ndarray, start_ns: int) -> np.ndarray:
    chunks = []
    for sec, n in enumerate(counts):
        base = start_ns + sec * NS_PER_SEC
        step = NS_PER_SEC // max(int(n), 1)
        chunks.append(base + np.arange(n, dtype=np.int64) * step)
    return np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)


def _mixgraph_offsets(total: int, size: int, spec: WorkloadSpec,
                      rng: np.random.Generator) -> np.ndarray:
    """Pareto-length sequential runs over power-law-popular regions."""
    offsets = np.empty(total, dtype=np.int64)
    filled = 0
    n_regions = max(8, size // 256)
    # power-law popularity: region r drawn with weight (r+1)^-alpha
    weights = (np.arange(1, n_regions + 1, dtype=np.float64)
               ** -spec.powerlaw_exponent)
    weights /= weights.sum()
    region_size = size // n_regions
    while filled < total:
        run_len = int(min(1 + rng.pareto(spec.pareto_shape) * spec.pareto_scale, 512))
        run_len = min(run_len, total - filled)
        region = rng.choice(n_regions, p=weights)
        start = region * region_size + rng.integers(0, max(region_size, 1))
        run = start + np.arange(run_len, dtype=np.int64)
        offsets[filled:filled + run_len] = run % size
        filled += run_len
    return offsets


def generate_trace(spec: WorkloadSpec) -> Trace:
    """Deterministic page-cache access trace for one workload."""
    rng = np.random.default_rng(spec.seed)
    counts = _per_second_counts(spec, rng)
    total = int(counts.sum())
    ts = _timestamps(counts, spec.start_ns)
    size = spec.file_size_pages

    if spec.kind == "readseq":
        per_file = np.arange(total, dtype=np.int64) // spec.file_count
        offsets = per_file % size
    elif spec.kind == "readreverse":
        per_file = np.arange(total, dtype=np.int64) // spec.file_count
        offsets = (size - 1) - (per_file % size)
    elif spec.kind == "readrandom":
        offsets = rng.integers(0, size, size=total, dtype=np.int64)
    elif spec.kind == "readrandomwriterandom":
        # alternating uniform random reads and log-style appends; the write
        # half lands sequentially inside a small region at the file head
        offsets = rng.integers(0, size, size=total, dtype=np.int64)
        wal_span = max(size // WRITE_REGION_DIVISOR, 1)
        writes = np.arange((total + 1) // 2, dtype=np.int64) % wal_span
        offsets[1::2] = writes[: total // 2]
    elif spec.kind == "updaterandom":
        # read-modify-write: every spot is touched twice back to back
        half = (total + 1) // 2
        spots = rng.integers(0, size, size=half, dtype=np.int64)
        offsets = np.repeat(spots, 2)[:total]
    elif spec.kind == "mixgraph":
        offsets = _mixgraph_offsets(total, size, spec, rng)
    else:  # pragma: no cover - rejected in WorkloadSpec
        raise ValueError(spec.kind)

    if spec.file_count == 1:
        file_ids = np.full(total, spec.first_file_id, dtype=np.int32)
    else:
        file_ids = (spec.first_file_id
                    + (np.arange(total, dtype=np.int64) % spec.file_count)).astype(np.int32)
    kinds = np.full(total, PAGE_CACHE_ADD, dtype=np.int8)
    reclaimed = np.zeros(total, dtype=np.int32)
    return Trace(ts, kinds, file_ids, offsets, reclaimed)


def back_to_back(specs: list[WorkloadSpec]) -> tuple[Trace, list[tuple[int, str]]]:
    """Run workloads consecutively on the same file; returns the trace plus
    (start_second, kind) transition markers."""
    traces = []
    markers = []
    offset_s = 0
    for spec in specs:
        markers.append((offset_s, spec.kind))
        shifted = replace(spec, start_ns=offset_s * NS_PER_SEC)
        traces.append(generate_trace(shifted))
        offset_s += spec.duration_seconds
    return Trace.concat(traces), markers


def mixed_pair(spec_a: WorkloadSpec, spec_b: WorkloadSpec) -> Trace:
    """Two workloads running concurrently against distinct files."""
    a = replace(spec_a, first_file_id=0)
    b = replace(spec_b, first_file_id=spec_a.file_count)
    return Trace.merge([generate_trace(a), generate_trace(b)])
