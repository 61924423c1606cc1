"""Lock-free hand-off from collection to the one training/inference thread.

Design notes:
- Strict SPSC: exactly one producer calls push, exactly one consumer calls
  pop.  Monotonic head/tail counters index a power-of-two slot array; under
  CPython each side writes only its own counter, and the item is stored
  before the counter that publishes it, so the other side never observes a
  half-filled slot.
- Bounded and non-blocking: push on a full buffer drops the item and counts
  it (data loss under pressure is tolerated, never blocking the collector);
  pop on empty returns None.  Neither call loops on the other thread.
- The consumer thread owns all model memory; a ReservedPool front-loads
  that footprint at setup so the steady-state loop never allocates beyond
  its grant.
"""

from __future__ import annotations

import logging
import threading
import time
from typing import Callable

from .errors import IngestError, NumericError, ReservationError, ShapeError

log = logging.getLogger(__name__)

PUSH_ACCEPTED = "accepted"
PUSH_DROPPED = "dropped"


class RingBuffer:
    def __init__(self, capacity: int = 4096):
        if capacity < 1 or capacity & (capacity - 1):
            raise ValueError(f"capacity must be a power of two, got {capacity}")
        self.capacity = capacity
        self._mask = capacity - 1
        self._slots = [None] * capacity
        self._head = 0  # total pushes accepted; written by producer only
        self._tail = 0  # total pops; written by consumer only
        self.dropped_count = 0

    def __len__(self) -> int:
        return self._head - self._tail

    def push(self, item) -> str:
        """Producer side: enqueue or drop-newest when full.  Never blocks."""
        head = self._head
        if head - self._tail == self.capacity:
            self.dropped_count += 1
            return PUSH_DROPPED
        self._slots[head & self._mask] = item
        self._head = head + 1  # publish after the slot is written
        return PUSH_ACCEPTED

    def pop(self):
        """Consumer side: oldest item, or None when empty.  Never blocks."""
        tail = self._tail
        if tail == self._head:
            return None
        idx = tail & self._mask
        item = self._slots[idx]
        self._slots[idx] = None
        self._tail = tail + 1
        return item


class ReservedPool:
    """Up-front memory budget for the consumer loop.

    Grants are accounting records: every model/normalizer footprint used by
    the loop is claimed here during setup, so an over-budget configuration
    fails before the loop starts rather than mid-run.
    """

    def __init__(self, reserved_bytes: int):
        if reserved_bytes <= 0:
            raise ValueError("reserved_bytes must be positive")
        self.reserved_bytes = reserved_bytes
        self.used_bytes = 0

    @property
    def available_bytes(self) -> int:
        return self.reserved_bytes - self.used_bytes

    def reserve(self, nbytes: int, purpose: str = "") -> "Reservation":
        if nbytes <= 0:
            raise ValueError("reservation size must be positive")
        if self.used_bytes + nbytes > self.reserved_bytes:
            raise ReservationError(
                f"cannot reserve {nbytes} bytes for {purpose or 'caller'}: "
                f"{self.available_bytes} of {self.reserved_bytes} left"
            )
        self.used_bytes += nbytes
        return Reservation(self, nbytes, purpose)


class Reservation:
    def __init__(self, pool: ReservedPool, nbytes: int, purpose: str):
        self.pool = pool
        self.nbytes = nbytes
        self.purpose = purpose
        self.released = False

    def release(self) -> None:
        if not self.released:
            self.pool.used_bytes -= self.nbytes
            self.released = True


class DecisionMailbox:
    """Latest per-scope predictions, written only by the consumer thread.

    ``processed`` counts handled items, letting the producer rendezvous
    with the consumer at simulated-second boundaries.
    """

    def __init__(self):
        self._decisions: dict = {}
        self.processed = 0

    def post(self, key, value) -> None:
        self._decisions[key] = value
        self.processed += 1

    def skip(self) -> None:
        self.processed += 1

    def read(self) -> dict:
        return dict(self._decisions)

    def wait_processed(self, target: int, timeout: float = 10.0) -> bool:
        deadline = time.monotonic() + timeout
        while self.processed < target:
            if time.monotonic() > deadline:
                return False
            time.sleep(0)
        return True


def run_consumer_loop(buf: RingBuffer, mode: str, model, callback: Callable,
                      shutdown: threading.Event, normalizer=None,
                      pool: ReservedPool | None = None,
                      on_skip: Callable | None = None,
                      idle_sleep: float = 0.0002) -> None:
    """Drain the ring buffer until shutdown, then finish the backlog.

    train mode expects (FeatureVector, label) items and runs one SGD
    iteration each; infer mode expects (scope_key, FeatureVector) and hands
    (scope_key, predicted_class, probabilities) to the callback.  A
    mis-shaped item is logged, reported to ``on_skip`` and skipped;
    collection must never kill the loop.  All model state is claimed from
    ``pool`` up front.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"unknown consumer mode {mode!r}")
    if pool is not None:
        footprint = model.dynamic_bytes()
        if normalizer is not None:
            footprint += 2 * 8 * normalizer.dim  # mean + variance, float64
        pool.reserve(footprint, purpose=f"{mode} loop model state")

    def handle(item) -> None:
        try:
            if mode == "train":
                vec, label = item
                loss = model.train_iteration(vec.as_column(), label)
                callback(loss)
            else:
                key, vec = item
                if normalizer is not None:
                    vec = normalizer.normalize(vec)
                cls, probs = model.predict(vec.as_column())
                callback(key, cls, probs)
        except (ShapeError, IngestError, NumericError, ValueError) as exc:
            log.warning("consumer skipped item: %s", exc)
            if on_skip is not None:
                on_skip()

    while not shutdown.is_set():
        item = buf.pop()
        if item is None:
            time.sleep(idle_sleep)
            continue
        handle(item)
    while True:  # drain whatever collection queued before shutdown
        item = buf.pop()
        if item is None:
            break
        handle(item)
