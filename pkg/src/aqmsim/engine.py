"""Deterministic discrete-event engine: integer-nanosecond clock, ordered
event queue, and seeded per-component random streams."""

from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass
from typing import Callable

import numpy as np

NS_PER_US = 1_000
NS_PER_MS = 1_000_000
NS_PER_S = 1_000_000_000


def seconds(value: float) -> int:
    """Convert seconds to integer nanoseconds."""
    return round(value * NS_PER_S)


def millis(value: float) -> int:
    """Convert milliseconds to integer nanoseconds."""
    return round(value * NS_PER_MS)


class CausalityError(RuntimeError):
    """An event was scheduled before the current virtual time."""


class HandlerError(RuntimeError):
    """An event handler raised; carries the offending event's identity."""


class EventHandle:
    """Returned by schedule(); permits cancellation before the event fires."""

    __slots__ = ("fire_at", "seq", "label", "cancelled")

    def __init__(self, fire_at: int, seq: int, label: str):
        self.fire_at = fire_at
        self.seq = seq
        self.label = label
        self.cancelled = False


@dataclass
class RunStats:
    events_processed: int
    final_time: int


class RngStream:
    """Named random stream: (seed, label) fully determines the draw sequence.

    Streams are independent Philox generators keyed by a hash of the label,
    so adding or removing components never perturbs other streams.
    """

    def __init__(self, seed: int, label: str):
        digest = hashlib.sha256(f"{seed}:{label}".encode()).digest()
        key = int.from_bytes(digest[:16], "little")
        self.seed = seed
        self.label = label
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def uniform(self) -> float:
        """Uniform draw in [0, 1)."""
        return float(self._gen.random())

    def exponential(self, mean: float) -> float:
        return float(self._gen.exponential(mean))

    def randint(self, low: int, high: int) -> int:
        """Uniform integer in [low, high] inclusive."""
        return int(self._gen.integers(low, high + 1))


class Engine:
    """Single-threaded event loop over a virtual clock.

    Ties on fire time are broken by schedule order (FIFO). Cancellation is
    lazy: cancelled handles stay in the heap as tombstones until popped.
    """

    def __init__(self, seed: int = 1):
        self.seed = seed
        self._now = 0
        self._seq = 0
        self._queue: list[tuple[int, int, EventHandle, Callable[[], None]]] = []
        self._streams: dict[str, RngStream] = {}
        self.events_processed = 0

    @property
    def now(self) -> int:
        return self._now

    def rng(self, label: str) -> RngStream:
        """Per-component stream; repeated lookups return the same stream."""
        stream = self._streams.get(label)
        if stream is None:
            stream = RngStream(self.seed, label)
            self._streams[label] = stream
        return stream

    def schedule(self, fire_at: int, callback: Callable[[], None],
                 label: str = "") -> EventHandle:
        if fire_at < self._now:
            raise CausalityError(
                f"schedule({label!r}) at t={fire_at} ns is before now={self._now} ns"
            )
        handle = EventHandle(fire_at, self._seq, label)
        heapq.heappush(self._queue, (fire_at, self._seq, handle, callback))
        self._seq += 1
        return handle

    def schedule_in(self, delay: int, callback: Callable[[], None],
                    label: str = "") -> EventHandle:
        return self.schedule(self._now + delay, callback, label)

    def cancel(self, handle: EventHandle) -> None:
        handle.cancelled = True

    def run_until(self, t_end: int) -> RunStats:
        """Process every event with fire_at <= t_end, then advance to t_end."""
        processed = 0
        queue = self._queue
        while queue and queue[0][0] <= t_end:
            fire_at, _seq, handle, callback = heapq.heappop(queue)
            if handle.cancelled:
                continue
            self._now = fire_at
            try:
                callback()
            except Exception as exc:
                raise HandlerError(
                    f"event {handle.label!r} (t={fire_at} ns, seq={handle.seq}) failed: {exc}"
                ) from exc
            processed += 1
        self._now = t_end
        self.events_processed += processed
        return RunStats(events_processed=processed, final_time=self._now)

    def pending(self) -> int:
        """Live (non-tombstoned) events still queued."""
        return sum(1 for _, _, h, _ in self._queue if not h.cancelled)
