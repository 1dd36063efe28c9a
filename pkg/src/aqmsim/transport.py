"""TCP flow endpoints: a bulk-transfer sender with pluggable congestion
control and an immediately-acking receiver.

The sender is a simplified but faithful TCP loss-recovery machine:
cumulative acks, 3-dupack fast retransmit with NewReno-style partial-ack
retransmission, and an RTO with Karn backoff. No SACK, no delayed acks,
no handshake (flows start established).
"""

from __future__ import annotations

from dataclasses import dataclass

from .engine import Engine, EventHandle, NS_PER_MS, NS_PER_S
from .netpath import ACK_BYTES, DirectionalPath, HEADER_BYTES, MSS_BYTES, MTU_BYTES, Packet

RTO_MIN_NS = 200 * NS_PER_MS
RTO_MAX_NS = 60 * NS_PER_S
RTO_INITIAL_NS = 1 * NS_PER_S
DUPACK_THRESHOLD = 3
INITIAL_CWND_SEGMENTS = 10


class ProtocolError(RuntimeError):
    """An ack acknowledged data that was never sent."""


@dataclass
class RateSample:
    """Per-ack delivery rate sample fed to the congestion controller."""
    delivery_rate_bps: float = 0.0
    rtt_ns: int | None = None
    newly_acked: int = 0            # payload bytes
    is_app_limited: bool = False
    delivered: int = 0              # cumulative payload bytes after this ack
    prior_delivered: int = 0        # sender's delivered count when the acked pkt left
    interval_ns: int = 0


class _SegmentRecord:
    """Send-time snapshot for one in-flight segment (rate estimation + Karn)."""

    __slots__ = ("start", "end", "sent_at", "first_sent_at",
                 "delivered_at_send", "delivered_time_at_send", "retransmitted",
                 "app_limited")

    def __init__(self, start, end, sent_at, first_sent_at,
                 delivered_at_send, delivered_time_at_send, retransmitted,
                 app_limited):
        self.start = start
        self.end = end
        self.sent_at = sent_at
        self.first_sent_at = first_sent_at
        self.delivered_at_send = delivered_at_send
        self.delivered_time_at_send = delivered_time_at_send
        self.retransmitted = retransmitted
        self.app_limited = app_limited


class TcpReceiver:
    """Acking endpoint: emits one cumulative ack per data packet received."""

    def __init__(self, flow_id: str, ack_path: DirectionalPath):
        self.flow_id = flow_id
        self.ack_path = ack_path
        self.rcv_nxt = 0
        self._ooo: list[tuple[int, int]] = []   # sorted disjoint byte ranges
        self.received_payload = 0   # first-time payload bytes (dups excluded)

    def _coverage(self) -> int:
        return self.rcv_nxt + sum(e - s for s, e in self._ooo)

    def on_data(self, pkt: Packet, now: int) -> None:
        before = self._coverage()
        start, end = pkt.seq_no, pkt.seq_no + pkt.payload
        if start <= self.rcv_nxt:
            if end > self.rcv_nxt:
                self.rcv_nxt = end
                self._consume_ooo()
        else:
            self._insert_ooo(start, end)
        self.received_payload += self._coverage() - before
        ack = Packet(flow_id=self.flow_id, seq_no=0, size=ACK_BYTES,
                     is_ack=True, ack_no=self.rcv_nxt, sent_at=now)
        self.ack_path.send(ack, now)

    def _insert_ooo(self, start: int, end: int) -> None:
        for s, e in self._ooo:
            if s <= start and end <= e:
                return
        merged = [(start, end)]
        for s, e in self._ooo:
            placed = False
            for i, (ms, me) in enumerate(merged):
                if s <= me and ms <= e:   # overlap/adjacent
                    merged[i] = (min(ms, s), max(me, e))
                    placed = True
                    break
            if not placed:
                merged.append((s, e))
        self._ooo = sorted(merged)

    def _consume_ooo(self) -> None:
        while self._ooo and self._ooo[0][0] <= self.rcv_nxt:
            _, e = self._ooo.pop(0)
            if e > self.rcv_nxt:
                self.rcv_nxt = e


class TcpSender:
    """Bulk sender: always has data; paced when the CCA provides a rate."""

    def __init__(self, engine: Engine, flow_id: str, cca,
                 data_path: DirectionalPath, mss: int = MSS_BYTES):
        self.engine = engine
        self.flow_id = flow_id
        self.cca = cca
        self.data_path = data_path
        self.mss = mss

        self.snd_una = 0
        self.snd_nxt = 0
        self.dupack_count = 0
        self.retransmissions = 0

        # RFC 6298 estimator state
        self.srtt: int | None = None
        self.rttvar: int | None = None
        self.min_rtt: int | None = None
        self.rto = RTO_INITIAL_NS

        # delivery-rate estimator connection state
        self.delivered = 0
        self.delivered_time = 0
        self.first_sent_time = 0
        self.app_limited = False    # bulk model: never app-limited

        self.in_recovery = False
        self.recover_point = 0
        self._recovery_extra = 0   # fast-recovery window inflation, bytes
        self.started = False
        self.rtt_log: list[tuple[int, int]] = []   # (time, rtt) for jitter calc

        self._records: dict[int, _SegmentRecord] = {}   # keyed by end offset
        self._rto_handle: EventHandle | None = None
        self._send_timer: EventHandle | None = None
        self._next_send_at = 0

    @property
    def inflight(self) -> int:
        return self.snd_nxt - self.snd_una

    def start(self, now: int) -> None:
        self.started = True
        self._try_send(now)

    # -- sending ---------------------------------------------------------

    def _try_send(self, now: int) -> None:
        if not self.started:
            return
        while self.inflight < self.cca.cwnd + self._recovery_extra:
            rate = self.cca.pacing_rate_bps
            if rate:
                if self._next_send_at > now:
                    if self._send_timer is None:
                        self._send_timer = self.engine.schedule(
                            self._next_send_at, self._on_send_timer,
                            label=f"{self.flow_id}.pace")
                    return
                self._emit(self.snd_nxt, now, retransmit=False)
                self._next_send_at = now + (-(-MTU_BYTES * 8 * NS_PER_S // int(rate)))
            else:
                self._emit(self.snd_nxt, now, retransmit=False)

    def _on_send_timer(self) -> None:
        self._send_timer = None
        self._try_send(self.engine.now)

    def _emit(self, seq: int, now: int, retransmit: bool) -> None:
        if self.snd_nxt == self.snd_una and not retransmit:
            self.first_sent_time = now
            self.delivered_time = now
        end = seq + self.mss
        record = _SegmentRecord(
            start=seq, end=end, sent_at=now,
            first_sent_at=self.first_sent_time,
            delivered_at_send=self.delivered,
            delivered_time_at_send=self.delivered_time,
            retransmitted=retransmit,
            app_limited=self.app_limited,
        )
        self._records[end] = record
        pkt = Packet(flow_id=self.flow_id, seq_no=seq, size=MTU_BYTES,
                     payload=self.mss, sent_at=now, is_retransmit=retransmit)
        if not retransmit:
            self.snd_nxt = end
        else:
            self.retransmissions += 1
        self.data_path.send(pkt, now)
        self._arm_rto(now)

    def _retransmit_head(self, now: int) -> None:
        self._emit(self.snd_una, now, retransmit=True)

    # -- timers ----------------------------------------------------------

    def _arm_rto(self, now: int) -> None:
        if self._rto_handle is None and self.inflight > 0:
            self._rto_handle = self.engine.schedule(
                now + self.rto, self._on_rto, label=f"{self.flow_id}.rto")

    def _restart_rto(self, now: int) -> None:
        if self._rto_handle is not None:
            self.engine.cancel(self._rto_handle)
            self._rto_handle = None
        self._arm_rto(now)

    def _on_rto(self) -> None:
        self._rto_handle = None
        now = self.engine.now
        if self.inflight == 0:
            return
        self.rto = min(self.rto * 2, RTO_MAX_NS)   # Karn backoff
        self.dupack_count = 0
        # recover remaining holes ack-by-ack rather than one per timeout
        self.in_recovery = True
        self.recover_point = self.snd_nxt
        self._recovery_extra = 0
        self._retransmit_head(now)
        self.cca.on_loss(self, "rto", self.mss, now)
        self._restart_rto(now)
        self._try_send(now)

    # -- ack processing ----------------------------------------------------

    def on_ack_packet(self, pkt: Packet, now: int) -> None:
        ack_no = pkt.ack_no
        if ack_no > self.snd_nxt:
            raise ProtocolError(
                f"flow {self.flow_id}: ack {ack_no} beyond snd_nxt {self.snd_nxt}")
        if ack_no > self.snd_una:
            rs = self._register_delivery(ack_no, now)
            self.snd_una = ack_no
            self.dupack_count = 0
            if self.in_recovery:
                if ack_no >= self.recover_point:
                    self.in_recovery = False
                    self._recovery_extra = 0
                else:
                    # partial ack: the next hole starts at the new snd_una;
                    # deflate by the acked amount, add back one segment
                    self._recovery_extra = max(0, self._recovery_extra - rs.newly_acked) + self.mss
                    self._retransmit_head(now)
                    self.cca.on_loss(self, "partial", self.mss, now)
            if rs.rtt_ns is not None:
                self._update_rtt(rs.rtt_ns, now)
            elif self.srtt is not None:
                # forward progress ends any timer backoff even when Karn's
                # rule withholds a fresh sample
                self.rto = max(RTO_MIN_NS, self.srtt + 4 * self.rttvar)
            self.cca.on_ack(self, rs, now)
            if self.inflight == 0 and self._rto_handle is not None:
                self.engine.cancel(self._rto_handle)
                self._rto_handle = None
            else:
                self._restart_rto(now)
            self._try_send(now)
        elif ack_no == self.snd_una and self.inflight > 0:
            self.dupack_count += 1
            if self.dupack_count == DUPACK_THRESHOLD and not self.in_recovery:
                self.in_recovery = True
                self.recover_point = self.snd_nxt
                self._recovery_extra = DUPACK_THRESHOLD * self.mss
                self._retransmit_head(now)
                self.cca.on_loss(self, "dupack", self.mss, now)
                self._try_send(now)
            elif self.in_recovery:
                # each further dupack signals one departed segment: keep
                # the pipe full while the hole repairs, bounded by the
                # window outstanding at loss detection
                self._recovery_extra = min(self._recovery_extra + self.mss,
                                           max(0, self.recover_point - self.snd_una))
                self._try_send(now)

    def _register_delivery(self, ack_no: int, now: int) -> RateSample:
        rs = RateSample()
        newly = ack_no - self.snd_una
        best: _SegmentRecord | None = None
        rtt_record: _SegmentRecord | None = None
        end = self.snd_una + self.mss
        while end <= ack_no:
            record = self._records.pop(end, None)
            if record is not None:
                self.delivered += record.end - record.start
                # Karn's rule for rate samples too: a cumulatively-acked
                # retransmission lumps the repaired hole into one ack, so
                # its send-time snapshot would yield a bogus rate spike
                if not record.retransmitted:
                    if best is None or record.delivered_at_send >= best.delivered_at_send:
                        best = record
                    # only a single-segment advance is unambiguous: larger
                    # jumps are hole repairs, where buffered segments would
                    # absorb the whole repair stall into the sample
                    if record.end == ack_no and newly == self.mss:
                        rtt_record = record
            end += self.mss
        self.delivered_time = now
        rs.newly_acked = newly
        rs.delivered = self.delivered
        if rtt_record is not None:
            rs.rtt_ns = now - rtt_record.sent_at
        if best is not None:
            rs.prior_delivered = best.delivered_at_send
            rs.is_app_limited = best.app_limited
            send_elapsed = best.sent_at - best.first_sent_at
            ack_elapsed = now - best.delivered_time_at_send
            interval = max(send_elapsed, ack_elapsed)
            rs.interval_ns = interval
            if interval > 0:
                data = self.delivered - best.delivered_at_send
                # rate in wire units (headers included): pacing and the link
                # both spend wire bytes, so the estimate must match them
                wire = data + (data // self.mss) * HEADER_BYTES
                rs.delivery_rate_bps = wire * 8 * NS_PER_S / interval
            self.first_sent_time = best.sent_at
        return rs

    def _update_rtt(self, rtt: int, now: int) -> None:
        self.rtt_log.append((now, rtt))
        if self.min_rtt is None or rtt < self.min_rtt:
            self.min_rtt = rtt
        if self.srtt is None:
            self.srtt = rtt
            self.rttvar = rtt // 2
        else:
            self.rttvar = (3 * self.rttvar + abs(self.srtt - rtt)) // 4
            self.srtt = (7 * self.srtt + rtt) // 8
        self.rto = max(RTO_MIN_NS, self.srtt + 4 * self.rttvar)
