"""Closed-loop readahead tuning against the page-cache simulator.

``simulate`` replays a trace second by second.  Each simulated second the
pipeline turns that second's events into one feature row per scope (whole
disk, or each file), the inference thread predicts the workload class over
the ring buffer, and the tuner maps the class to a readahead value that
takes effect for the following second.  The throughput proxy is operations
per second of accumulated device cost, so runs are bit-reproducible for a
fixed (trace, policy, model) triple.

``calibrate_readahead`` is the brute-force oracle: it sweeps fixed
readahead values per workload class and records the argmax, which both
seeds the class map and serves as the bar tuned runs are judged against.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .cachesim import CacheSim
from .errors import IngestError
from .pipeline import (
    FeatureVector,
    NS_PER_SEC,
    PAGE_CACHE_ADD,
    WindowAggregator,
    extract_readahead_features,
)
from .ringbuf import DecisionMailbox, PUSH_ACCEPTED, ReservedPool, RingBuffer, run_consumer_loop
from .workloads import TRAINING_CLASSES, Trace, WorkloadSpec, generate_trace

READAHEAD_MIN = 8
READAHEAD_MAX = 1024
DEFAULT_READAHEAD = 256  # kernel default, the fixed baseline

# the 20-point sweep grid over the studied 8-1024 sector range
READAHEAD_CANDIDATES = (
    8, 16, 24, 32, 48, 64, 96, 128, 160, 192, 224, 256,
    320, 384, 448, 512, 640, 768, 896, 1024,
)

RSIZE_VALUES = (4096, 8192, 16384, 32768, 65536, 131072, 262144)
DEFAULT_RSIZE = 262144

VANILLA_FIXED = "vanilla_fixed"
PER_DISK = "per_disk"
PER_FILE = "per_file"

DISK_SCOPE = -1

INFERENCE_POOL_BYTES = 1 << 20  # 1 MiB reservation comfortably fits any model here


@dataclass
class TunerPolicy:
    mode: str = VANILLA_FIXED
    model_kind: str = "nn"
    fixed_readahead: int = DEFAULT_READAHEAD
    readahead_map: dict[int, int] | None = None   # class index -> sectors
    rsize_map: dict[int, int] | None = None       # class index -> bytes
    warmup_seconds: int = 3   # run-start grace while cumulative stats settle

    def __post_init__(self):
        if self.mode not in (VANILLA_FIXED, PER_DISK, PER_FILE):
            raise ValueError(f"unknown tuner mode {self.mode!r}")
        if self.model_kind not in ("nn", "dtree"):
            raise ValueError(f"unknown model kind {self.model_kind!r}")
        if self.readahead_map is not None:
            for cls, sectors in self.readahead_map.items():
                if not READAHEAD_MIN <= sectors <= READAHEAD_MAX:
                    raise ValueError(
                        f"readahead {sectors} for class {cls} outside "
                        f"[{READAHEAD_MIN}, {READAHEAD_MAX}]"
                    )
        if self.rsize_map is not None:
            for cls, rsize in self.rsize_map.items():
                if rsize not in RSIZE_VALUES:
                    raise ValueError(f"rsize {rsize} not one of the supported values")


def tune_rsize(prediction: int, policy: TunerPolicy) -> int:
    """Map a predicted class to its read-size; caller latches it at the
    next iteration boundary (rsize cannot change mid-iteration)."""
    if policy.rsize_map is None:
        raise ValueError("policy has no rsize map")
    if prediction not in policy.rsize_map:
        raise ValueError(f"prediction {prediction} not in rsize map")
    return policy.rsize_map[prediction]


@dataclass
class SecondRecord:
    second: int
    ops: int
    cost_ns: int
    throughput: float                      # ops per simulated second
    readahead: dict[int, int]              # scope key -> sectors in force
    predicted: dict[int, int] = field(default_factory=dict)


@dataclass
class RunReport:
    mode: str
    device: str
    seconds: list[SecondRecord]
    total_ops: int
    total_cost_ns: int
    hits: int
    misses: int
    per_file_ops: dict[int, int]
    per_file_cost_ns: dict[int, int]
    dropped_items: int = 0

    @property
    def throughput(self) -> float:
        if self.total_cost_ns == 0:
            return 0.0
        return self.total_ops / (self.total_cost_ns / NS_PER_SEC)

    def file_throughput(self, file_id: int) -> float:
        cost = self.per_file_cost_ns.get(file_id, 0)
        if cost == 0:
            return 0.0
        return self.per_file_ops[file_id] / (cost / NS_PER_SEC)

    def readahead_timeline(self, scope_key: int = DISK_SCOPE) -> list[int]:
        return [rec.readahead.get(scope_key, 0) for rec in self.seconds]

    def predicted_timeline(self, scope_key: int = DISK_SCOPE) -> list[int | None]:
        return [rec.predicted.get(scope_key) for rec in self.seconds]

    def summary(self) -> dict:
        out = {
            "mode": self.mode,
            "device": self.device,
            "total_ops": self.total_ops,
            "total_cost_ns": self.total_cost_ns,
            "throughput_ops_per_sec": round(self.throughput, 3),
            "cache_hits": self.hits,
            "cache_misses": self.misses,
            "dropped_items": self.dropped_items,
        }
        for fid in sorted(self.per_file_ops):
            out[f"file_{fid}_throughput"] = round(self.file_throughput(fid), 3)
        return out


class _InferenceEngine:
    """Ring buffer + consumer thread + mailbox, one per tuned run."""

    def __init__(self, model, normalizer, capacity: int = 4096):
        self.buf = RingBuffer(capacity)
        self.mailbox = DecisionMailbox()
        self.shutdown = threading.Event()
        self.pool = ReservedPool(INFERENCE_POOL_BYTES)
        self._accepted = 0
        self.thread = threading.Thread(
            target=run_consumer_loop,
            kwargs=dict(
                buf=self.buf, mode="infer", model=model,
                callback=self._on_prediction, shutdown=self.shutdown,
                normalizer=normalizer, pool=self.pool,
                on_skip=self.mailbox.skip,
            ),
            daemon=True,
        )
        self.thread.start()

    def _on_prediction(self, key, cls, probs):
        self.mailbox.post(key, cls)

    def submit(self, key: int, vec: FeatureVector) -> None:
        if self.buf.push((key, vec)) == PUSH_ACCEPTED:
            self._accepted += 1

    def decisions(self) -> dict[int, int]:
        """Rendezvous: wait until everything submitted so far is processed."""
        if not self.mailbox.wait_processed(self._accepted, timeout=30.0):
            raise RuntimeError("inference thread stalled")
        return self.mailbox.read()

    def stop(self) -> int:
        self.shutdown.set()
        self.thread.join(timeout=30.0)
        return self.buf.dropped_count


def _file_sizes(trace: Trace) -> dict[int, int]:
    sizes: dict[int, int] = {}
    fids = trace.file_ids
    offs = trace.offsets
    for fid in np.unique(fids):
        sizes[int(fid)] = int(offs[fids == fid].max()) + 1
    return sizes


def simulate(trace: Trace, cache: CacheSim, policy: TunerPolicy,
             model=None, normalizer=None,
             initial_readahead: int | None = None) -> RunReport:
    """Replay a trace under a tuning policy; returns the run's timeline.

    vanilla_fixed needs no model; per_disk / per_file require the model and
    the normalizer snapshot it was deployed with.
    """
    bad = ~np.isin(trace.kinds, (0, 1, 2, 3))
    if bad.any():
        raise IngestError(f"unknown event kind code at trace row {int(np.nonzero(bad)[0][0])}")
    tuned = policy.mode != VANILLA_FIXED
    if tuned and (model is None or normalizer is None or policy.readahead_map is None):
        raise ValueError("tuned modes need a model, its normalizer, and a readahead map")

    file_sizes = _file_sizes(trace)
    start_ra = policy.fixed_readahead if initial_readahead is None else initial_readahead
    global_ra = start_ra
    ra_by_file: dict[int, int] = {}

    engine = _InferenceEngine(model, normalizer) if tuned else None
    agg = WindowAggregator(PER_FILE if policy.mode == PER_FILE else "per_disk")
    carry: dict[int, FeatureVector] = {}

    # plain lists are several times faster than per-element ndarray access
    # in the replay loop
    ts_arr = trace.timestamps_ns
    ts = ts_arr.tolist()
    kinds = trace.kinds.tolist()
    fids = trace.file_ids.tolist()
    offs = trace.offsets.tolist()
    recs = trace.reclaimed.tolist()
    duration = trace.duration_seconds

    seconds: list[SecondRecord] = []
    per_file_ops: dict[int, int] = {}
    per_file_cost: dict[int, int] = {}
    total_ops = 0
    total_cost = 0
    access = cache.access
    push = agg.push if tuned else None
    per_file_mode = policy.mode == PER_FILE

    try:
        pos = 0
        for second in range(duration):
            end_ns = (second + 1) * NS_PER_SEC
            hi = int(np.searchsorted(ts_arr, end_ns, side="left"))
            sec_ops = 0
            sec_cost = 0
            for i in range(pos, hi):
                fid = fids[i]
                kind = kinds[i]
                if kind == PAGE_CACHE_ADD:
                    if per_file_mode:
                        ra = ra_by_file.setdefault(fid, start_ra)
                    else:
                        ra = global_ra
                    cost = access(fid, offs[i], ra, file_sizes[fid])
                    sec_ops += 1
                    sec_cost += cost
                    per_file_ops[fid] = per_file_ops.get(fid, 0) + 1
                    per_file_cost[fid] = per_file_cost.get(fid, 0) + cost
                if push is not None:
                    push(ts[i], kind, fid, offs[i], recs[i])
            pos = hi
            total_ops += sec_ops
            total_cost += sec_cost
            record = SecondRecord(
                second=second,
                ops=sec_ops,
                cost_ns=sec_cost,
                throughput=sec_ops / (sec_cost / NS_PER_SEC) if sec_cost else 0.0,
                readahead=dict(ra_by_file) if per_file_mode else {DISK_SCOPE: global_ra},
            )
            if tuned:
                for win in agg.flush():
                    key = win.scope_key
                    current = ra_by_file.get(key, start_ra) if per_file_mode else global_ra
                    vec = extract_readahead_features(win, current, carry.get(key))
                    carry[key] = vec
                    engine.submit(key, vec)
                decisions = engine.decisions()
                record.predicted = dict(decisions)
                # predictions are always recorded, but the knob only moves
                # once the run-start warmup has passed
                if second + 1 >= policy.warmup_seconds:
                    for key, cls in decisions.items():
                        mapped = policy.readahead_map.get(cls)
                        if mapped is None:
                            continue
                        if per_file_mode:
                            ra_by_file[key] = mapped
                        else:
                            global_ra = mapped
            seconds.append(record)
    finally:
        dropped = engine.stop() if engine is not None else 0

    return RunReport(
        mode=policy.mode,
        device=cache.device.name,
        seconds=seconds,
        total_ops=total_ops,
        total_cost_ns=total_cost,
        hits=cache.hits,
        misses=cache.misses,
        per_file_ops=per_file_ops,
        per_file_cost_ns=per_file_cost,
        dropped_items=dropped,
    )


@dataclass
class CalibrationResult:
    device: str
    capacity_pages: int
    best: dict[str, int]                       # workload kind -> sectors
    sweep: dict[str, list[tuple[int, float]]]  # kind -> [(sectors, throughput)]

    def class_map(self) -> dict[int, int]:
        """Readahead map keyed by training-class index."""
        return {i: self.best[kind] for i, kind in enumerate(TRAINING_CLASSES)
                if kind in self.best}


def calibrate_readahead(specs: dict[str, WorkloadSpec], device: str = "nvme",
                        capacity_pages: int = 1024,
                        candidates=READAHEAD_CANDIDATES) -> CalibrationResult:
    """Sweep fixed readahead values per workload; argmax throughput wins.

    This exhaustive sweep is the ground-truth oracle for the tuned runs.
    """
    if not candidates:
        raise ValueError("candidate list is empty")
    best: dict[str, int] = {}
    sweep: dict[str, list[tuple[int, float]]] = {}
    for kind, spec in specs.items():
        trace = generate_trace(spec)
        rows: list[tuple[int, float]] = []
        for sectors in candidates:
            cache = CacheSim(capacity_pages, device)
            policy = TunerPolicy(mode=VANILLA_FIXED, fixed_readahead=sectors)
            report = simulate(trace, cache, policy)
            rows.append((sectors, report.throughput))
        sweep[kind] = rows
        best[kind] = max(rows, key=lambda r: r[1])[0]
    return CalibrationResult(device=device, capacity_pages=capacity_pages,
                             best=best, sweep=sweep)
