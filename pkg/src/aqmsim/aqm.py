"""Queue disciplines at the bottleneck: PFIFO tail-drop baseline, FQ-CoDel
(per-flow DRR + CoDel dropper), and a reduced CAKE (flow-isolating DRR +
per-flow CoDel + integrated rate shaper).

CAKE here is a deliberate reduction: triple-isolate, diffserv tiers,
ack-filtering and overhead compensation are not modeled. Flow isolation,
delay control and shaping are.
"""

from __future__ import annotations

import math
import zlib
from collections import deque
from dataclasses import dataclass, field

from .engine import NS_PER_MS, NS_PER_S
from .netpath import MAX_PACKET_BYTES, Packet, serialization_ns

QDISC_KINDS = ("pfifo", "fq_codel", "cake")

DROP_TAIL = "tail"
DROP_OVERLIMIT = "overlimit"
DROP_CODEL = "codel"


@dataclass
class QdiscConfig:
    kind: str = "pfifo"
    pfifo_limit: int = 50                     # packets
    codel_target_ns: int = 5 * NS_PER_MS
    codel_interval_ns: int = 100 * NS_PER_MS
    quantum: int = 1514                       # DRR quantum, bytes
    bucket_count: int = 1024
    memory_limit_pkts: int = 10240            # fq_codel/cake total buffered cap
    cake_rate_bps: int | None = None          # None -> inherit link rate
    force_single_bucket: bool = False         # test knob: forced hash collisions

    def validate(self) -> list[str]:
        errors = []
        if self.kind not in QDISC_KINDS:
            errors.append(f"qdisc.kind must be one of {QDISC_KINDS}, got {self.kind!r}")
        if self.pfifo_limit < 1:
            errors.append("qdisc.pfifo_limit must be >= 1")
        if self.codel_target_ns >= self.codel_interval_ns:
            errors.append("qdisc.codel_target_ns must be < codel_interval_ns")
        if self.quantum < MAX_PACKET_BYTES:
            errors.append(f"qdisc.quantum must be >= max packet size ({MAX_PACKET_BYTES})")
        if self.bucket_count < 1:
            errors.append("qdisc.bucket_count must be >= 1")
        if self.memory_limit_pkts < 1:
            errors.append("qdisc.memory_limit_pkts must be >= 1")
        if self.cake_rate_bps is not None and self.cake_rate_bps <= 0:
            errors.append("qdisc.cake_rate_bps must be > 0 when set")
        return errors


@dataclass
class QdiscStats:
    enqueued: int = 0
    dequeued: int = 0
    dropped_tail: int = 0
    dropped_overlimit: int = 0
    dropped_codel: int = 0

    @property
    def dropped(self) -> int:
        return self.dropped_tail + self.dropped_overlimit + self.dropped_codel


class PfifoQdisc:
    """Packet-count-limited FIFO with tail drop. Preserves arrival order."""

    def __init__(self, config: QdiscConfig):
        self.limit = config.pfifo_limit
        self._pkts: deque[Packet] = deque()
        self.stats = QdiscStats()
        self.drop_log: list[tuple[int, str]] = []

    @property
    def occupancy(self) -> int:
        return len(self._pkts)

    def enqueue(self, pkt: Packet, now: int) -> str | None:
        if len(self._pkts) >= self.limit:
            self.stats.dropped_tail += 1
            self.drop_log.append((now, DROP_TAIL))
            return DROP_TAIL
        pkt.enqueued_at = now
        self._pkts.append(pkt)
        self.stats.enqueued += 1
        return None

    def dequeue(self, now: int) -> tuple[Packet | None, int | None]:
        if not self._pkts:
            return None, None
        self.stats.dequeued += 1
        return self._pkts.popleft(), None

    def backlog_for_flow(self, flow_id: str) -> int:
        return len(self._pkts)

    def per_bucket_backlog(self) -> dict[int, int]:
        return {0: len(self._pkts)} if self._pkts else {}


class _CodelVars:
    """Per-queue CoDel dropper state (sojourn-time control law)."""

    __slots__ = ("first_above_time", "drop_next", "count", "lastcount", "dropping")

    def __init__(self):
        self.first_above_time = 0
        self.drop_next = 0
        self.count = 0
        self.lastcount = 0
        self.dropping = False


class _FlowQueue:
    __slots__ = ("pkts", "bytes", "deficit", "codel", "active", "in_new")

    def __init__(self):
        self.pkts: deque[Packet] = deque()
        self.bytes = 0
        self.deficit = 0
        self.codel = _CodelVars()
        self.active = False
        self.in_new = False


class FqCodelQdisc:
    """Flow queues scheduled by deficit round robin, each policed by CoDel.

    Flow-to-bucket mapping hashes flow_id with crc32 (stable across runs);
    the simulator controls identities, so collisions only occur via the
    forced-collision test knob.
    """

    def __init__(self, config: QdiscConfig):
        self.config = config
        self.target = config.codel_target_ns
        self.interval = config.codel_interval_ns
        self.quantum = config.quantum
        self.memory_limit = config.memory_limit_pkts
        self._queues: dict[int, _FlowQueue] = {}
        self._new: deque[int] = deque()
        self._old: deque[int] = deque()
        self._total_pkts = 0
        self.stats = QdiscStats()
        self.drop_log: list[tuple[int, str]] = []   # (time, reason)
        self.codel_drop_times: list[int] = []

    @property
    def occupancy(self) -> int:
        return self._total_pkts

    def _bucket_of(self, flow_id: str) -> int:
        if self.config.force_single_bucket:
            return 0
        return zlib.crc32(flow_id.encode()) % self.config.bucket_count

    def enqueue(self, pkt: Packet, now: int) -> str | None:
        bucket = self._bucket_of(pkt.flow_id)
        q = self._queues.get(bucket)
        if q is None:
            q = _FlowQueue()
            self._queues[bucket] = q
        pkt.enqueued_at = now
        q.pkts.append(pkt)
        q.bytes += pkt.size
        self._total_pkts += 1
        self.stats.enqueued += 1
        if not q.active:
            q.active = True
            q.in_new = True
            q.deficit = self.quantum
            self._new.append(bucket)
        if self._total_pkts > self.memory_limit:
            self._drop_from_fattest(now)
        return None

    def _drop_from_fattest(self, now: int) -> None:
        fattest = max(self._queues, key=lambda b: self._queues[b].bytes)
        q = self._queues[fattest]
        victim = q.pkts.popleft()
        q.bytes -= victim.size
        self._total_pkts -= 1
        self.stats.dropped_overlimit += 1
        self.drop_log.append((now, DROP_OVERLIMIT))

    def _codel_should_drop(self, q: _FlowQueue, pkt: Packet, now: int) -> bool:
        """RFC-style sojourn check deciding whether pkt is drop-eligible."""
        sojourn = now - pkt.enqueued_at
        if sojourn < self.target or q.bytes <= MAX_PACKET_BYTES:
            q.codel.first_above_time = 0
            return False
        if q.codel.first_above_time == 0:
            q.codel.first_above_time = now + self.interval
            return False
        return now >= q.codel.first_above_time

    def _codel_dequeue(self, q: _FlowQueue, now: int) -> Packet | None:
        """CoDel state machine applied at dequeue; may drop head packets."""
        c = q.codel
        pkt = self._pop_head(q)
        if pkt is None:
            c.first_above_time = 0
            return None
        ok_to_drop = self._codel_should_drop(q, pkt, now)
        if c.dropping:
            if not ok_to_drop:
                c.dropping = False
                return pkt
            while c.dropping and now >= c.drop_next:
                self._codel_drop(pkt, now)
                c.count += 1
                pkt = self._pop_head(q)
                if pkt is None:
                    c.dropping = False
                    c.first_above_time = 0
                    return None
                ok_to_drop = self._codel_should_drop(q, pkt, now)
                if not ok_to_drop:
                    c.dropping = False
                else:
                    c.drop_next = c.drop_next + int(self.interval / math.sqrt(c.count))
            return pkt
        if ok_to_drop:
            self._codel_drop(pkt, now)
            pkt = self._pop_head(q)
            if pkt is None:
                c.first_above_time = 0
            c.dropping = True
            # re-entry shortly after the last dropping state resumes the
            # previous drop frequency rather than restarting from one
            delta = c.count - c.lastcount
            if delta > 1 and now - c.drop_next < 16 * self.interval:
                c.count = delta
            else:
                c.count = 1
            c.lastcount = c.count
            c.drop_next = now + int(self.interval / math.sqrt(c.count))
        return pkt

    def _pop_head(self, q: _FlowQueue) -> Packet | None:
        if not q.pkts:
            return None
        pkt = q.pkts.popleft()
        q.bytes -= pkt.size
        self._total_pkts -= 1
        return pkt

    def _codel_drop(self, pkt: Packet, now: int) -> None:
        self.stats.dropped_codel += 1
        self.drop_log.append((now, DROP_CODEL))
        self.codel_drop_times.append(now)

    def dequeue(self, now: int) -> tuple[Packet | None, int | None]:
        while True:
            if self._new:
                bucket = self._new[0]
                from_new = True
            elif self._old:
                bucket = self._old[0]
                from_new = False
            else:
                return None, None
            q = self._queues[bucket]
            if q.deficit <= 0:
                q.deficit += self.quantum
                if from_new:
                    self._new.popleft()
                else:
                    self._old.popleft()
                self._old.append(bucket)
                q.in_new = False
                continue
            pkt = self._codel_dequeue(q, now)
            if pkt is None:
                # queue emptied: new queues get one pass through the old
                # list before deactivation, old queues deactivate now
                if from_new:
                    self._new.popleft()
                    self._old.append(bucket)
                    q.in_new = False
                else:
                    self._old.popleft()
                    q.active = False
                continue
            q.deficit -= pkt.size
            self.stats.dequeued += 1
            return pkt, None

    def backlog_for_flow(self, flow_id: str) -> int:
        q = self._queues.get(self._bucket_of(flow_id))
        return len(q.pkts) if q is not None else 0

    def per_bucket_backlog(self) -> dict[int, int]:
        return {b: len(q.pkts) for b, q in self._queues.items() if q.pkts}


class CakeQdisc(FqCodelQdisc):
    """Reduced CAKE: FQ-CoDel's flow isolation plus an integrated shaper.

    The shaper is a virtual departure clock: each dequeued packet pushes
    the next permitted departure out by its serialization time at the
    shaped rate, so departures never exceed cake_rate in the long run.
    """

    def __init__(self, config: QdiscConfig, link_rate_bps: int):
        super().__init__(config)
        self.rate_bps = config.cake_rate_bps or link_rate_bps
        self._next_departure = 0

    def dequeue(self, now: int) -> tuple[Packet | None, int | None]:
        if now < self._next_departure:
            return None, self._next_departure
        pkt, _ = super().dequeue(now)
        if pkt is not None:
            self._next_departure = max(self._next_departure, now) + serialization_ns(
                pkt.size, self.rate_bps)
        return pkt, None


def build_qdisc(config: QdiscConfig, link_rate_bps: int):
    if config.kind == "pfifo":
        return PfifoQdisc(config)
    if config.kind == "fq_codel":
        return FqCodelQdisc(config)
    if config.kind == "cake":
        return CakeQdisc(config, link_rate_bps)
    raise ValueError(f"unknown qdisc kind {config.kind!r}")
