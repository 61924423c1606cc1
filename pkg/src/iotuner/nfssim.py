"""NFS read-size (rsize) closed loop over a simulated client cache + network.

Unlike the readahead path, the event stream here is produced while the
simulation runs: the latency between an nfs_read and its readpage_done
depends on the rsize in force, which is exactly what the tuner changes.
Operations are issued back to back, the device/network cost model advances
the simulated clock, and the pipeline consumes the emitted tracepoints in
one-second windows of that clock.

rsize is a mount parameter: predictions made during iteration k latch in
at the start of iteration k+1, never mid-iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pipeline import (
    LRU_SHRINK,
    NFS_READ,
    NFS_READPAGE_DONE,
    NS_PER_SEC,
    PAGE_CACHE_ADD,
    FeatureVector,
    WindowAggregator,
    extract_nfs_features,
)
from .tuner import DEFAULT_RSIZE, RSIZE_VALUES, TunerPolicy, tune_rsize
from .workloads import WorkloadSpec, generate_trace

PAGE_BYTES = 4096

# cap tracepoint emission per miss so huge fetches don't flood the pipeline
MAX_ADDS_PER_MISS = 4

# kinds whose odd-numbered operations are writes (dirty the page locally,
# no NFS read on the wire)
WRITE_ALTERNATING = ("readrandomwriterandom", "updaterandom")


@dataclass(frozen=True)
class NfsCostModel:
    name: str
    rtt_ns: int = 200_000               # 0.2 ms network round trip
    per_request_ns: int = 30_000        # client+server request handling
    net_per_byte_ns: float = 0.8        # ~10 GbE
    server_per_byte_ns: float = 0.3     # backing device read-out
    hit_cost_ns: int = 1_000
    client_work_ns: int = 40_000        # app work per operation

    def fetch_cost(self, nbytes: int, server_cached: bool = False) -> int:
        """Wire + service cost of one read request.

        A request continuing a forward-sequential stream lands in the
        server's own readahead cache: the backing-device term drops and
        request handling halves.
        """
        if server_cached:
            return int(self.rtt_ns + self.per_request_ns // 2
                       + nbytes * self.net_per_byte_ns)
        return int(self.rtt_ns + self.per_request_ns
                   + nbytes * (self.net_per_byte_ns + self.server_per_byte_ns))


NFS_PRESETS = {
    "nvme": NfsCostModel("nvme", server_per_byte_ns=0.3),
    "sata": NfsCostModel("sata", server_per_byte_ns=1.2, per_request_ns=60_000),
}


@dataclass
class NfsRunReport:
    rsize_timeline: list[tuple[int, int]]       # (iteration, rsize in force)
    predicted_timeline: list[tuple[int, int]]   # (second, predicted class)
    total_ops: int
    total_cost_ns: int
    per_iteration_ops: list[int]
    per_iteration_cost_ns: list[int]
    feature_rows: list[np.ndarray] = field(default_factory=list)

    @property
    def throughput(self) -> float:
        if self.total_cost_ns == 0:
            return 0.0
        return self.total_ops / (self.total_cost_ns / NS_PER_SEC)


class _NfsClient:
    """LRU page cache in front of the simulated NFS mount."""

    def __init__(self, capacity_pages: int, cost: NfsCostModel):
        self.capacity = capacity_pages
        self.cost = cost
        self._resident: dict[tuple[int, int], None] = {}
        self._next_seq_page: dict[int, int] = {}  # server readahead tracking

    def write_page(self, file_id: int, page: int, emit) -> int:
        """Full-page write: dirties the page locally, nothing on the wire."""
        key = (file_id, page)
        resident = self._resident
        if key in resident:
            del resident[key]
            resident[key] = None
        else:
            resident[key] = None
            emit(PAGE_CACHE_ADD, file_id, page, 0, 0)
            if len(resident) > self.capacity:
                resident.pop(next(iter(resident)))
        return self.cost.hit_cost_ns

    def read_page(self, file_id: int, page: int, rsize: int,
                  file_size_pages: int, emit) -> int:
        key = (file_id, page)
        resident = self._resident
        if key in resident:
            del resident[key]
            resident[key] = None
            return self.cost.hit_cost_ns
        pages_per_req = max(rsize // PAGE_BYTES, 1)
        first = (page // pages_per_req) * pages_per_req
        last = min(first + pages_per_req, file_size_pages)
        server_cached = self._next_seq_page.get(file_id) == first
        self._next_seq_page[file_id] = last
        latency = self.cost.fetch_cost(rsize, server_cached)
        evicted = 0
        added = 0
        for p in range(first, last):
            k = (file_id, p)
            if k in resident:
                del resident[k]
                resident[k] = None
                continue
            resident[k] = None
            if added < MAX_ADDS_PER_MISS:
                emit(PAGE_CACHE_ADD, file_id, p, 0, 0)
                added += 1
            if len(resident) > self.capacity:
                resident.pop(next(iter(resident)))
                evicted += 1
        emit(NFS_READ, file_id, first * PAGE_BYTES, 0, 0)
        emit(NFS_READPAGE_DONE, file_id, first * PAGE_BYTES, latency, 0)
        if evicted:
            emit(LRU_SHRINK, file_id, 0, latency, evicted)
        return latency


def run_nfs(spec: WorkloadSpec, net: NfsCostModel | str = "nvme",
            capacity_pages: int = 2048, iterations: int = 4,
            ops_per_iteration: int = 12_000, policy: TunerPolicy | None = None,
            model=None, normalizer=None, initial_rsize: int = DEFAULT_RSIZE,
            collect_features: bool = False) -> NfsRunReport:
    """Run one workload for several iterations under an rsize policy.

    With no policy the rsize stays at ``initial_rsize`` (the fixed
    baseline / sweep mode).  With a policy plus model, the last prediction
    of each iteration decides the next iteration's rsize.
    """
    if isinstance(net, str):
        net = NFS_PRESETS[net]
    if initial_rsize not in RSIZE_VALUES:
        raise ValueError(f"rsize {initial_rsize} not one of the supported values")
    tuned = policy is not None
    if tuned and (model is None or normalizer is None):
        raise ValueError("tuned NFS runs need a model and its normalizer")

    agg = WindowAggregator("per_disk")
    client = _NfsClient(capacity_pages, net)
    rsize = initial_rsize
    pending_rsize = rsize
    now = 0
    window_edge = NS_PER_SEC
    last_prediction: int | None = None

    report = NfsRunReport(
        rsize_timeline=[], predicted_timeline=[], total_ops=0, total_cost_ns=0,
        per_iteration_ops=[], per_iteration_cost_ns=[],
    )

    events_buf: list[tuple[int, int, int, int, int]] = []

    def emit(kind: int, fid: int, offset: int, delay_ns: int, reclaimed: int) -> None:
        events_buf.append((kind, fid, offset, delay_ns, reclaimed))

    def close_second(second_index: int) -> None:
        nonlocal last_prediction
        for win in agg.flush():
            if tuned or collect_features:
                vec = extract_nfs_features(win, rsize)
                if collect_features:
                    report.feature_rows.append(vec.values.copy())
                if tuned:
                    normed = normalizer.normalize(vec)
                    cls, _ = model.predict(normed.as_column())
                    last_prediction = cls
                    report.predicted_timeline.append((second_index, cls))

    for it in range(iterations):
        rsize = pending_rsize
        report.rsize_timeline.append((it, rsize))
        rng = np.random.default_rng((spec.seed, it))
        pattern = generate_trace(
            WorkloadSpec(kind=spec.kind, file_count=spec.file_count,
                         file_size_pages=spec.file_size_pages,
                         duration_seconds=max(ops_per_iteration // spec.rate, 1) + 1,
                         ops_per_second=spec.rate,
                         seed=int(rng.integers(0, 2**31)))
        )
        offsets = pattern.offsets[:ops_per_iteration].tolist()
        file_ids = pattern.file_ids[:ops_per_iteration].tolist()
        alternating_writes = spec.kind in WRITE_ALTERNATING
        it_ops = 0
        it_cost = 0
        for i in range(len(offsets)):
            fid = file_ids[i]
            if alternating_writes and i % 2:
                cost = client.write_page(fid, offsets[i], emit)
            else:
                cost = client.read_page(fid, offsets[i], rsize,
                                        spec.file_size_pages, emit)
            cost += net.client_work_ns
            start = now
            now += cost
            for kind, efid, eoff, delay, reclaimed in events_buf:
                # reads/adds stamp at issue time, completions after the fetch
                ets = start + delay
                while ets >= window_edge:
                    close_second(window_edge // NS_PER_SEC - 1)
                    window_edge += NS_PER_SEC
                agg.push(ets, kind, efid, eoff, reclaimed)
            events_buf.clear()
            it_ops += 1
            it_cost += cost
        report.per_iteration_ops.append(it_ops)
        report.per_iteration_cost_ns.append(it_cost)
        report.total_ops += it_ops
        report.total_cost_ns += it_cost
        if tuned and last_prediction is not None:
            pending_rsize = tune_rsize(last_prediction, policy)
    close_second(window_edge // NS_PER_SEC - 1)
    return report


def calibrate_rsize(specs: dict[str, WorkloadSpec], net: str = "nvme",
                    capacity_pages: int = 2048,
                    candidates=RSIZE_VALUES) -> dict:
    """Fixed-rsize sweep per workload; argmax throughput is the oracle."""
    if not candidates:
        raise ValueError("candidate list is empty")
    best: dict[str, int] = {}
    sweep: dict[str, list[tuple[int, float]]] = {}
    for kind, spec in specs.items():
        rows = []
        for rsize in candidates:
            rep = run_nfs(spec, net=net, capacity_pages=capacity_pages,
                          initial_rsize=rsize)
            rows.append((rsize, rep.throughput))
        sweep[kind] = rows
        best[kind] = max(rows, key=lambda r: r[1])[0]
    return {"best": best, "sweep": sweep}
