"""Bottleneck path model: a rate-limited directional link with propagation
delay, optional jitter and random loss, fed by one queue discipline."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .engine import Engine, EventHandle, NS_PER_MS, NS_PER_S

MTU_BYTES = 1500          # on-wire data segment: payload + header model
HEADER_BYTES = 52         # TCP/IP header model
MSS_BYTES = MTU_BYTES - HEADER_BYTES   # 1448 B payload per segment
ACK_BYTES = 52            # pure ack on the wire

MIN_PACKET_BYTES = 40
MAX_PACKET_BYTES = 1514


@dataclass
class Packet:
    flow_id: str
    seq_no: int                 # first payload byte offset (data) / unused for acks
    size: int                   # wire bytes, header + payload
    is_ack: bool = False
    ack_no: int = 0             # cumulative ack (valid when is_ack)
    payload: int = 0            # payload bytes (0 for pure acks)
    sent_at: int = 0            # SimTime ns, set by the sender
    enqueued_at: int = 0        # set by the qdisc on enqueue
    ecn: bool = False           # unused in this artifact, kept off
    is_retransmit: bool = False

    def __post_init__(self):
        if not MIN_PACKET_BYTES <= self.size <= MAX_PACKET_BYTES:
            raise ValueError(f"packet size {self.size} outside [{MIN_PACKET_BYTES}, {MAX_PACKET_BYTES}]")
        if self.seq_no < 0:
            raise ValueError("negative seq_no")


@dataclass
class LinkConfig:
    rate_bps: int = 10_000_000
    prop_delay_ns: int = 5 * NS_PER_MS    # one way
    jitter_max_ns: int = 0                # uniform extra prop delay in [0, max]; 0 disables
    loss_prob: float = 0.0                # per-packet Bernoulli at ingress

    def validate(self) -> list[str]:
        errors = []
        if self.rate_bps <= 0:
            errors.append("link.rate_bps must be > 0")
        if self.prop_delay_ns < 0:
            errors.append("link.prop_delay_ns must be >= 0")
        if self.jitter_max_ns < 0:
            errors.append("link.jitter_max_ns must be >= 0")
        if not 0.0 <= self.loss_prob < 1.0:
            errors.append("link.loss_prob must be in [0, 1)")
        return errors


def serialization_ns(size_bytes: int, rate_bps: int) -> int:
    # ceil so the transmitter never exceeds the configured rate
    return -(-size_bytes * 8 * NS_PER_S // rate_bps)


@dataclass
class PathStats:
    offered: int = 0
    random_losses: int = 0
    delivered_packets: int = 0
    delivered_bytes: int = 0


class DirectionalPath:
    """One direction of the bottleneck: qdisc -> serializing transmitter ->
    propagation -> receiving endpoint.

    The transmitter serializes one packet at a time and is work-conserving:
    it pulls from the qdisc whenever it goes idle. A qdisc may defer a
    dequeue (CAKE's shaper); the path then retries at the indicated time.
    """

    def __init__(self, engine: Engine, name: str, link: LinkConfig, qdisc):
        self.engine = engine
        self.name = name
        self.link = link
        self.qdisc = qdisc
        self.busy_until = 0
        self.stats = PathStats()
        self._serializing = False
        self._wake_handle: EventHandle | None = None
        self._receivers: dict[str, Callable[[Packet, int], None]] = {}
        self._rng = engine.rng(f"path.{name}")
        self._last_delivery = 0
        self.on_deliver: Callable[[Packet, int], None] | None = None  # test/metrics hook

    def attach(self, flow_id: str, handler: Callable[[Packet, int], None]) -> None:
        self._receivers[flow_id] = handler

    def send(self, pkt: Packet, now: int) -> str | None:
        """Offer a packet to this direction. Returns None if accepted into
        the qdisc, else the drop reason. Drops are data, not errors."""
        self.stats.offered += 1
        if self.link.loss_prob > 0.0 and self._rng.uniform() < self.link.loss_prob:
            self.stats.random_losses += 1
            return "random-loss"
        reason = self.qdisc.enqueue(pkt, now)
        if reason is not None:
            return reason
        self._pull(now)
        return None

    def _pull(self, now: int) -> None:
        if self._serializing:
            return
        pkt, wake_at = self.qdisc.dequeue(now)
        if pkt is not None:
            if self._wake_handle is not None:
                self.engine.cancel(self._wake_handle)
                self._wake_handle = None
            ser = serialization_ns(pkt.size, self.link.rate_bps)
            self._serializing = True
            self.busy_until = now + ser
            self.engine.schedule(now + ser, lambda p=pkt: self._on_transmit_complete(p),
                                 label=f"{self.name}.tx")
        elif wake_at is not None:
            if self._wake_handle is None or self._wake_handle.cancelled:
                self._wake_handle = self.engine.schedule(
                    max(wake_at, now), self._on_wake, label=f"{self.name}.wake")
            elif self._wake_handle.fire_at > wake_at:
                self.engine.cancel(self._wake_handle)
                self._wake_handle = self.engine.schedule(
                    max(wake_at, now), self._on_wake, label=f"{self.name}.wake")

    def _on_wake(self) -> None:
        self._wake_handle = None
        self._pull(self.engine.now)

    def _on_transmit_complete(self, pkt: Packet) -> None:
        now = self.engine.now
        delay = self.link.prop_delay_ns
        if self.link.jitter_max_ns > 0:
            # contention-style jitter: a waiting delay, not a reordering
            # one — deliveries stay FIFO along the path
            delay += int(self._rng.uniform() * (self.link.jitter_max_ns + 1))
        fire_at = max(now + delay, self._last_delivery)
        self._last_delivery = fire_at
        self.engine.schedule(fire_at, lambda: self._deliver(pkt),
                             label=f"{self.name}.deliver")
        self._serializing = False
        self._pull(now)

    def _deliver(self, pkt: Packet) -> None:
        now = self.engine.now
        handler = self._receivers.get(pkt.flow_id)
        if handler is None:
            raise RuntimeError(f"no receiver attached for flow {pkt.flow_id!r} on path {self.name}")
        self.stats.delivered_packets += 1
        self.stats.delivered_bytes += pkt.size
        if self.on_deliver is not None:
            self.on_deliver(pkt, now)
        handler(pkt, now)
