"""Page cache stand-in: LRU residency plus a per-device service-cost model.

The readahead setting caps a per-file prefetch window that ramps with
detected sequentiality, the way the kernel's on-demand readahead does: an
isolated miss pulls in only a token window, while a sustained (near-)
sequential streak earns up to the full configured number of sectors, in
the direction the file is being walked.  Each miss charges the device's
fixed setup cost plus a per-page transfer cost; hits charge a lookup.
Accumulated cost is the simulated clock behind every throughput-proxy
number.

The LRU is one shared dict over (file_id, page) keys, so prefetch spill
from one file evicts another file's pages exactly the way a real page
cache bleeds between workloads.
"""

from __future__ import annotations

from dataclasses import dataclass

SECTORS_PER_PAGE = 8   # 512-byte sectors, 4096-byte pages
NEAR_SEQ_PAGES = 8     # |delta| <= this keeps a sequential streak alive
MIN_WINDOW_PAGES = 4   # prefetch granted before any streak is proven


@dataclass(frozen=True)
class DeviceCostModel:
    name: str
    hit_cost_ns: int
    miss_base_ns: int           # seek/submit setup per miss
    per_page_transfer_ns: int


DEVICE_PRESETS = {
    "nvme": DeviceCostModel("nvme", hit_cost_ns=400, miss_base_ns=25_000,
                            per_page_transfer_ns=1_500),
    "sata": DeviceCostModel("sata", hit_cost_ns=400, miss_base_ns=90_000,
                            per_page_transfer_ns=5_000),
}


class CacheSim:
    """LRU page cache with streak-ramped, direction-aware readahead."""

    def __init__(self, capacity_pages: int, device: DeviceCostModel | str = "nvme"):
        if capacity_pages < 1:
            raise ValueError("capacity_pages must be positive")
        if isinstance(device, str):
            device = DEVICE_PRESETS[device]
        self.capacity = capacity_pages
        self.device = device
        self._resident: dict[tuple[int, int], None] = {}
        # per-file (previous page, streak alive, walking backwards, ramp step)
        self._stream: dict[int, tuple[int, bool, bool, int]] = {}
        self.hits = 0
        self.misses = 0

    @property
    def resident_pages(self) -> int:
        return len(self._resident)

    def contains(self, file_id: int, page: int) -> bool:
        return (file_id, page) in self._resident

    def access(self, file_id: int, page: int, readahead_sectors: int,
               file_size_pages: int) -> int:
        """Service one access; returns its cost in simulated nanoseconds."""
        resident = self._resident
        key = (file_id, page)
        state = self._stream.get(file_id)
        if state is None:
            sequential, backwards, ramp = False, False, 0
        else:
            prev, sequential, backwards, ramp = state
            delta = page - prev
            sequential = -NEAR_SEQ_PAGES <= delta <= NEAR_SEQ_PAGES
            if not sequential:
                ramp = 0
            if delta:
                backwards = delta < 0

        if key in resident:
            # refresh LRU position
            del resident[key]
            resident[key] = None
            self.hits += 1
            self._stream[file_id] = (page, sequential, backwards, ramp)
            return self.device.hit_cost_ns

        self.misses += 1
        ra_pages = readahead_sectors // SECTORS_PER_PAGE
        # window doubles per miss while the stream stays (near-)sequential,
        # up to the configured sector budget
        window = min(ra_pages, MIN_WINDOW_PAGES << min(ramp, 12))
        self._stream[file_id] = (page, sequential, backwards,
                                 ramp + 1 if sequential or state is None else 1)
        if backwards:
            span = range(max(page - window, 0), page + 1)
        else:
            span = range(page, min(page + window, file_size_pages - 1) + 1)
        fetched = 0
        cap = self.capacity
        for p in span:
            k = (file_id, p)
            if k in resident:
                del resident[k]
                resident[k] = None
                continue
            fetched += 1
            resident[k] = None
            if len(resident) > cap:
                resident.pop(next(iter(resident)))
        # the demanded page itself missed, so fetched >= 1
        return self.device.miss_base_ns + fetched * self.device.per_page_transfer_ns

    def reset_stats(self) -> None:
        self.hits = 0
        self.misses = 0
