"""Trace ingestion: one-second windows, feature extraction, Z-score scaling.

A trace is a time-ordered stream of events (page-cache adds, NFS read /
read-done pairs, LRU shrink scans).  Aggregation buckets events into
one-second windows per scope key (whole disk, or one key per file) and
keeps the run-cumulative offset statistics the classifiers consume.

Feature schemas (order is fixed and serialized with the model):
    readahead (4): tx_per_sec, cum_mean_offset, mean_abs_offset_diff,
                   current_readahead_sectors
    nfs       (8): tx_per_sec, mean_read_to_done_latency_ms,
                   mean_read_interarrival_ms, mean_done_interarrival_ms,
                   mean_abs_requested_offset_diff, mean_abs_page_offset_diff,
                   mean_reclaimed_pages, current_rsize_bytes
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import IngestError, NumericError

EVENT_KINDS = ("page_cache_add", "nfs_read", "nfs_readpage_done", "lru_shrink")
KIND_TO_CODE = {name: i for i, name in enumerate(EVENT_KINDS)}

PAGE_CACHE_ADD, NFS_READ, NFS_READPAGE_DONE, LRU_SHRINK = range(4)

SCHEMAS = {"readahead": 4, "nfs": 8}

READAHEAD_FEATURE_NAMES = (
    "tx_per_sec",
    "cum_mean_offset",
    "mean_abs_offset_diff",
    "current_readahead",
)
NFS_FEATURE_NAMES = (
    "tx_per_sec",
    "mean_read_done_latency_ms",
    "mean_read_interarrival_ms",
    "mean_done_interarrival_ms",
    "mean_abs_req_offset_diff",
    "mean_abs_page_offset_diff",
    "mean_reclaimed_pages",
    "current_rsize",
)

NS_PER_SEC = 1_000_000_000
NS_PER_MS = 1_000_000


@dataclass
class TraceEvent:
    timestamp_ns: int
    event_kind: str
    file_id: int
    offset: int
    reclaimed_pages: int = 0


@dataclass
class FeatureVector:
    schema: str
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32).reshape(-1)
        expected = SCHEMAS.get(self.schema)
        if expected is not None and self.values.shape[0] != expected:
            raise IngestError(
                f"schema {self.schema!r} needs {expected} features, got {self.values.shape[0]}"
            )

    def as_column(self):
        from .matrix import Matrix
        return Matrix(self.values.reshape(-1, 1))


@dataclass
class WindowState:
    """Accumulators for one (window, scope key) cell.

    Offset mean/M2 are cumulative over the whole run for the scope (they
    carry across windows); counts, diffs and the NFS sums reset per window.
    """

    window_index: int
    scope_key: int
    count: int = 0                      # events observed this window
    cum_count: int = 0                  # page-offset samples since run start
    cum_mean_offset: float = 0.0
    cum_m2_offset: float = 0.0
    diff_sum: float = 0.0               # per-window |offset - prev offset| sum
    diff_count: int = 0
    latency_sum_ns: float = 0.0         # matched nfs read -> done pairs
    latency_count: int = 0
    read_gap_sum_ns: float = 0.0        # consecutive nfs_read interarrival
    read_gap_count: int = 0
    done_gap_sum_ns: float = 0.0
    done_gap_count: int = 0
    req_diff_sum: float = 0.0           # consecutive nfs_read offset |diff|
    req_diff_count: int = 0
    reclaimed_sum: float = 0.0
    reclaimed_count: int = 0

    @property
    def cum_std_offset(self) -> float:
        # kept for diagnostics; not part of the deployed feature set
        if self.cum_count < 1:
            return 0.0
        return math.sqrt(self.cum_m2_offset / self.cum_count)

    def mean_abs_offset_diff(self) -> float:
        return self.diff_sum / self.diff_count if self.diff_count else 0.0


class _ScopeAccumulator:
    """Streaming per-scope state shared by consecutive windows."""

    __slots__ = (
        "key", "cum_count", "cum_mean", "cum_m2", "prev_offset",
        "prev_read_ts", "prev_read_offset", "prev_done_ts", "pending_reads",
    )

    def __init__(self, key: int):
        self.key = key
        self.cum_count = 0
        self.cum_mean = 0.0
        self.cum_m2 = 0.0
        self.prev_offset: float | None = None
        self.prev_read_ts: int | None = None
        self.prev_read_offset: float | None = None
        self.prev_done_ts: int | None = None
        # (file_id, offset) -> FIFO of issue timestamps
        self.pending_reads: dict[tuple[int, int], deque] = {}


class WindowAggregator:
    """Buckets a time-ordered event stream into per-second WindowStates.

    scope "per_disk" folds every file into one key (-1); "per_file" keeps
    one independent accumulator per file_id.  Events must arrive in
    non-decreasing timestamp order.
    """

    def __init__(self, scope: str = "per_disk", window_ns: int = NS_PER_SEC):
        if scope not in ("per_disk", "per_file"):
            raise ValueError(f"unknown scope {scope!r}")
        self.scope = scope
        self.window_ns = window_ns
        self._acc: dict[int, _ScopeAccumulator] = {}
        self._open: dict[int, WindowState] = {}
        self._window_index = 0
        self._last_ts = -1
        self._event_index = -1

    def _scope_key(self, file_id: int) -> int:
        return file_id if self.scope == "per_file" else -1

    def push(self, timestamp_ns: int, kind_code: int, file_id: int, offset: int,
             reclaimed_pages: int = 0) -> list[WindowState]:
        """Feed one event; returns the windows closed by its arrival."""
        self._event_index += 1
        if timestamp_ns < self._last_ts:
            raise IngestError(
                f"event {self._event_index} timestamp {timestamp_ns} goes backwards"
            )
        self._last_ts = timestamp_ns
        closed: list[WindowState] = []
        while timestamp_ns >= (self._window_index + 1) * self.window_ns:
            closed.extend(self._close_window())
        key = self._scope_key(file_id)
        acc = self._acc.get(key)
        if acc is None:
            acc = self._acc[key] = _ScopeAccumulator(key)
        win = self._open.get(key)
        if win is None:
            win = self._open[key] = WindowState(self._window_index, key)
        self._ingest(acc, win, timestamp_ns, kind_code, file_id, offset, reclaimed_pages)
        return closed

    def _ingest(self, acc: _ScopeAccumulator, win: WindowState, ts: int,
                kind: int, file_id: int, offset: int, reclaimed: int) -> None:
        win.count += 1
        if kind == PAGE_CACHE_ADD:
            x = float(offset)
            acc.cum_count += 1
            delta = x - acc.cum_mean
            acc.cum_mean += delta / acc.cum_count
            acc.cum_m2 += delta * (x - acc.cum_mean)
            if acc.prev_offset is not None:
                win.diff_sum += abs(x - acc.prev_offset)
                win.diff_count += 1
            acc.prev_offset = x
        elif kind == NFS_READ:
            if acc.prev_read_ts is not None:
                win.read_gap_sum_ns += ts - acc.prev_read_ts
                win.read_gap_count += 1
            if acc.prev_read_offset is not None:
                win.req_diff_sum += abs(float(offset) - acc.prev_read_offset)
                win.req_diff_count += 1
            acc.prev_read_ts = ts
            acc.prev_read_offset = float(offset)
            acc.pending_reads.setdefault((file_id, offset), deque()).append(ts)
        elif kind == NFS_READPAGE_DONE:
            if acc.prev_done_ts is not None:
                win.done_gap_sum_ns += ts - acc.prev_done_ts
                win.done_gap_count += 1
            acc.prev_done_ts = ts
            fifo = acc.pending_reads.get((file_id, offset))
            if fifo:
                issued = fifo.popleft()
                if not fifo:
                    del acc.pending_reads[(file_id, offset)]
                win.latency_sum_ns += ts - issued
                win.latency_count += 1
            # a done without a matching read is dropped from the latency mean
        elif kind == LRU_SHRINK:
            win.reclaimed_sum += reclaimed
            win.reclaimed_count += 1
        else:
            raise IngestError(f"event {self._event_index}: unknown kind code {kind}")

    def _close_window(self) -> list[WindowState]:
        out = []
        for key, acc in self._acc.items():
            win = self._open.pop(key, None)
            if win is None:
                win = WindowState(self._window_index, key)
            win.cum_count = acc.cum_count
            win.cum_mean_offset = acc.cum_mean
            win.cum_m2_offset = acc.cum_m2
            out.append(win)
        self._window_index += 1
        return out

    def flush(self) -> list[WindowState]:
        """Close the window currently in progress."""
        return self._close_window()


def window_aggregate(events, scope: str = "per_disk") -> list[WindowState]:
    """Aggregate an iterable of TraceEvents into one-second WindowStates.

    One WindowState is emitted per elapsed second per scope key seen so
    far, in (second, first-seen key) order.
    """
    agg = WindowAggregator(scope)
    out: list[WindowState] = []
    for ev in events:
        code = KIND_TO_CODE.get(ev.event_kind)
        if code is None:
            raise IngestError(f"unknown event kind {ev.event_kind!r}")
        out.extend(agg.push(ev.timestamp_ns, code, ev.file_id, ev.offset,
                            ev.reclaimed_pages))
    out.extend(agg.flush())
    return out


def extract_readahead_features(state: WindowState, current_readahead: int,
                               carry: FeatureVector | None = None) -> FeatureVector:
    """4-entry readahead schema row for one finalized window.

    Idle windows (count 0) report zero transactions but keep the previous
    window's offset statistics (pass it as ``carry``) so features stay finite.
    """
    if state.count == 0 and carry is not None:
        vals = [0.0, float(carry.values[1]), float(carry.values[2]),
                float(current_readahead)]
    else:
        vals = [
            float(state.count),
            state.cum_mean_offset,
            state.mean_abs_offset_diff(),
            float(current_readahead),
        ]
    return FeatureVector("readahead", np.array(vals, dtype=np.float32))


def extract_nfs_features(state: WindowState, current_rsize: int) -> FeatureVector:
    """8-entry NFS schema row; empty windows yield zeros plus the rsize."""
    def mean(total, count, scale=1.0):
        return (total / count) / scale if count else 0.0

    vals = [
        float(state.count),
        mean(state.latency_sum_ns, state.latency_count, NS_PER_MS),
        mean(state.read_gap_sum_ns, state.read_gap_count, NS_PER_MS),
        mean(state.done_gap_sum_ns, state.done_gap_count, NS_PER_MS),
        mean(state.req_diff_sum, state.req_diff_count),
        state.mean_abs_offset_diff(),
        mean(state.reclaimed_sum, state.reclaimed_count),
        float(current_rsize),
    ]
    return FeatureVector(
        "nfs", np.array(vals, dtype=np.float32))


STD_FLOOR = 1e-6


class NormalizerState:
    """Streaming per-feature Z-score via Welford mean/variance updates.

    ``normalize`` first folds the sample into the running statistics, then
    scales it; the very first sample therefore maps to all zeros, as does
    any constant feature stream.
    """

    def __init__(self, dim: int):
        self.dim = dim
        self.count = 0
        self.mean = np.zeros(dim, dtype=np.float64)
        self.m2 = np.zeros(dim, dtype=np.float64)

    def update(self, x: np.ndarray) -> None:
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    def std(self) -> np.ndarray:
        if self.count == 0:
            return np.zeros(self.dim, dtype=np.float64)
        return np.sqrt(self.m2 / self.count)

    def normalize(self, raw: FeatureVector) -> FeatureVector:
        x = raw.values.astype(np.float64)
        if x.shape[0] != self.dim:
            raise IngestError(f"normalizer dim {self.dim} != feature dim {x.shape[0]}")
        if not np.all(np.isfinite(x)):
            raise NumericError("normalize: non-finite feature value")
        self.update(x)
        z = (x - self.mean) / np.maximum(self.std(), STD_FLOOR)
        return FeatureVector(raw.schema, z.astype(np.float32))

    def snapshot(self) -> "FrozenNormalizer":
        var = self.m2 / self.count if self.count else np.zeros(self.dim)
        return FrozenNormalizer(self.mean.copy(), var.copy())


@dataclass
class FrozenNormalizer:
    """Deployment-time scaler: fixed mean/variance, no further updates.

    Travels inside the model file so inference reproduces training-time
    Z-scores exactly.
    """

    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        self.variance = np.asarray(self.variance, dtype=np.float64).reshape(-1)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def normalize(self, raw: FeatureVector) -> FeatureVector:
        x = raw.values.astype(np.float64)
        if not np.all(np.isfinite(x)):
            raise NumericError("normalize: non-finite feature value")
        z = (x - self.mean) / np.maximum(np.sqrt(self.variance), STD_FLOOR)
        return FeatureVector(raw.schema, z.astype(np.float32))

    def apply(self, rows: np.ndarray) -> np.ndarray:
        z = (rows.astype(np.float64) - self.mean) / np.maximum(
            np.sqrt(self.variance), STD_FLOOR)
        return z.astype(np.float32)


TRACE_HEADER = ["timestamp_ns", "event_kind", "file_id", "offset", "reclaimed_pages"]


def write_trace_csv(path, trace) -> None:
    """Write events as the interchange CSV (LF endings, UTF-8)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for ts, kind, fid, off, rec in trace.iter_rows():
            w.writerow([ts, EVENT_KINDS[kind], fid, off, rec])


def read_trace_csv(path):
    """Parse the interchange CSV back into a columnar trace."""
    from .workloads import Trace

    ts, kinds, fids, offs, recs = [], [], [], [], []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TRACE_HEADER:
            raise IngestError(f"bad trace header {header!r}")
        for i, row in enumerate(reader):
            if len(row) != 5:
                raise IngestError(f"trace row {i}: expected 5 columns, got {len(row)}")
            code = KIND_TO_CODE.get(row[1])
            if code is None:
                raise IngestError(f"trace row {i}: unknown event kind {row[1]!r}")
            ts.append(int(row[0]))
            kinds.append(code)
            fids.append(int(row[2]))
            offs.append(int(row[3]))
            recs.append(int(row[4]))
    return Trace(
        np.array(ts, dtype=np.int64),
        np.array(kinds, dtype=np.int8),
        np.array(fids, dtype=np.int32),
        np.array(offs, dtype=np.int64),
        np.array(recs, dtype=np.int32),
    )
