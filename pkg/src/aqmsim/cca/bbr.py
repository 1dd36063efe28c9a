"""BBR congestion control, versions 1 through 3.

All three share the model core (delivery-rate max filter, min-RTT tracking,
round counting, ProbeRTT) and differ in the probing state machine and loss
response:

  v1: 8-phase pacing-gain cycle in ProbeBW, no reaction to loss.
  v2: ProbeBW restructured to Down/Cruise/Refill/Up with loss-bounded
      probing (inflight_hi clamp above a per-round loss-rate threshold,
      multiplicative inflight_lo decrease).
  v3: v2 structure with retuned gains, cruise headroom under inflight_hi,
      and a shorter wait between bandwidth probes.

Every constant lives in the tunables table below, tagged by version.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

from ..engine import NS_PER_MS, NS_PER_S, RngStream, seconds
from ..netpath import HEADER_BYTES, MSS_BYTES

STARTUP = "startup"
DRAIN = "drain"
PROBE_BW = "probe_bw"            # v1 gain-cycled steady state
PROBE_DOWN = "probe_bw_down"
PROBE_CRUISE = "probe_bw_cruise"
PROBE_REFILL = "probe_bw_refill"
PROBE_UP = "probe_bw_up"
PROBE_RTT = "probe_rtt"

V1_GAIN_CYCLE = (1.25, 0.75, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0)


@dataclass(frozen=True)
class BbrTunables:
    version: int
    startup_pacing_gain: float
    startup_cwnd_gain: float
    probe_down_gain: float          # unused by v1
    probe_up_gain: float = 1.25
    cwnd_gain: float = 2.0          # steady-state cwnd gain
    loss_thresh: float = 0.02       # per-round loss rate triggering a clamp
    beta: float = 0.7               # inflight_lo multiplicative decrease
    headroom: float | None = None   # cruise cap fraction of inflight_hi
    probe_wait_base_s: float = 2.0  # wall-clock wait before re-probing
    probe_wait_rand_s: float = 1.0
    bw_window_rounds: int = 10      # v1: rounds; v2/v3 tick per probe cycle
    bw_window_cycles: int = 2
    use_bw_lo: bool = False         # pacing lower-bound adaptation on lossy rounds
    use_extra_acked: bool = False   # ack-aggregation cwnd allowance
    min_rtt_window_ns: int = 10 * NS_PER_S
    probe_rtt_interval_ns: int = 10 * NS_PER_S
    probe_rtt_duration_ns: int = 200 * NS_PER_MS
    probe_rtt_cwnd_gain: float | None = None   # None: floor cwnd at 4 segments
    min_cwnd_segments: int = 4
    full_bw_thresh: float = 1.25    # startup plateau: <25% growth ...
    full_bw_rounds: int = 3         # ... over 3 consecutive rounds

    @property
    def drain_pacing_gain(self) -> float:
        return 1.0 / self.startup_pacing_gain


TUNABLES = {
    1: BbrTunables(version=1, startup_pacing_gain=2.885, startup_cwnd_gain=2.885,
                   probe_down_gain=0.75),
    2: BbrTunables(version=2, startup_pacing_gain=2.885, startup_cwnd_gain=2.885,
                   probe_down_gain=0.75, headroom=None,
                   probe_wait_base_s=2.0, probe_wait_rand_s=1.0, bw_window_cycles=2,
                   probe_rtt_interval_ns=5 * NS_PER_S, probe_rtt_cwnd_gain=0.5,
                   use_extra_acked=True),
    3: BbrTunables(version=3, startup_pacing_gain=2.77, startup_cwnd_gain=2.0,
                   probe_down_gain=0.90, headroom=0.85,
                   probe_wait_base_s=1.75, probe_wait_rand_s=0.5, bw_window_cycles=2,
                   probe_rtt_interval_ns=5 * NS_PER_S, probe_rtt_cwnd_gain=0.5,
                   use_bw_lo=True, use_extra_acked=True),
}

INITIAL_RTT_GUESS_NS = 1 * NS_PER_MS


class WindowedMax:
    """Exact max over the trailing `window` ticks, O(1) amortized."""

    __slots__ = ("window", "_samples")

    def __init__(self, window: int):
        self.window = window
        self._samples: deque[tuple[int, float]] = deque()

    def update(self, tick: int, value: float) -> None:
        samples = self._samples
        while samples and samples[-1][1] <= value:
            samples.pop()
        samples.append((tick, value))
        lo = tick - self.window
        while samples and samples[0][0] <= lo:
            samples.popleft()

    @property
    def value(self) -> float:
        return self._samples[0][1] if self._samples else 0.0


class _BbrBase:
    """Model core shared by every version."""

    def __init__(self, version: int, mss: int = MSS_BYTES, rng: RngStream | None = None):
        self.tun = TUNABLES[version]
        self.name = f"bbr{version}"
        self.mss = mss
        self.rng = rng
        initial_cwnd = 10 * mss
        self.cwnd = initial_cwnd
        self._initial_cwnd = initial_cwnd
        self.pacing_gain = self.tun.startup_pacing_gain
        self.cwnd_gain = self.tun.startup_cwnd_gain
        self.pacing_rate_bps = (
            self.tun.startup_pacing_gain * initial_cwnd * 8 * NS_PER_S / INITIAL_RTT_GUESS_NS)
        self.state = STARTUP

        self._bw_filter = WindowedMax(self.tun.bw_window_rounds)
        self.min_rtt_ns: int | None = None
        self._min_rtt_stamp = 0
        self._min_rtt_expired = False

        self._round_count = 0
        self._next_round_delivered = 0
        self._round_start = False

        self.filled_pipe = False
        self._full_bw = 0.0
        self._full_bw_count = 0

        self._loss_in_round = False
        self._lost_in_round = 0
        self._delivered_in_round = 0

        self._probe_rtt_done_at: int | None = None
        self._probe_rtt_round_done = False
        self._prior_cwnd = 0

        # ack-aggregation allowance: acks arriving in bursts beyond
        # bw * elapsed would otherwise strangle cwnd when the actual RTT
        # runs above min_rtt (bufferbloat from a competing flow)
        self._extra_acked_filter = WindowedMax(10)
        self._extra_epoch_start = 0
        self._extra_delivered = 0

    # -- public metric surface --------------------------------------------

    @property
    def btl_bw_bps(self) -> float:
        return self._bw_filter.value

    @property
    def state_name(self) -> str:
        return self.state

    # -- model updates ------------------------------------------------------

    def on_ack(self, flow, rs, now: int) -> None:
        self._update_round(flow, rs)
        self._update_filters(rs, now)
        self._update_ack_aggregation(rs, now)
        self._advance_machine(flow, rs, now)
        self._check_probe_rtt(flow, rs, now)
        self._set_pacing()
        self._set_cwnd(flow, rs, now)
        if self._round_start:
            self._lost_in_round = 0
            self._delivered_in_round = 0
            self._loss_in_round = False

    def on_loss(self, flow, kind: str, lost_bytes: int, now: int) -> None:
        self._loss_in_round = True
        self._lost_in_round += lost_bytes
        self._on_loss_event(flow, kind, now)

    def _on_loss_event(self, flow, kind: str, now: int) -> None:
        pass   # v1: rate filters only

    def _update_round(self, flow, rs) -> None:
        self._delivered_in_round += rs.newly_acked
        if rs.prior_delivered >= self._next_round_delivered:
            self._round_count += 1
            self._next_round_delivered = flow.delivered
            self._round_start = True
        else:
            self._round_start = False

    def _bw_filter_tick(self) -> int:
        return self._round_count

    def _update_filters(self, rs, now: int) -> None:
        ignore = rs.is_app_limited or self.state == PROBE_RTT
        if rs.delivery_rate_bps > 0 and (
                not ignore or rs.delivery_rate_bps > self._bw_filter.value):
            self._bw_filter.update(self._bw_filter_tick(), rs.delivery_rate_bps)
        self._min_rtt_expired = (
            self.min_rtt_ns is not None
            and now > self._min_rtt_stamp + self.tun.probe_rtt_interval_ns)
        if rs.rtt_ns is not None:
            if self.min_rtt_ns is None or rs.rtt_ns <= self.min_rtt_ns or self._min_rtt_expired:
                self.min_rtt_ns = rs.rtt_ns
                self._min_rtt_stamp = now

    def _update_ack_aggregation(self, rs, now: int) -> None:
        bw = self._bw_filter.value
        expected = bw * (now - self._extra_epoch_start) / (8 * NS_PER_S)
        if self._extra_delivered <= expected:
            self._extra_delivered = 0
            self._extra_epoch_start = now
            expected = 0.0
        wire_acked = rs.newly_acked + (rs.newly_acked // self.mss) * HEADER_BYTES
        self._extra_delivered += wire_acked
        extra = min(self._extra_delivered - expected, self.cwnd)
        if extra > 0:
            self._extra_acked_filter.update(self._round_count, extra)

    @property
    def extra_acked(self) -> int:
        if not self.tun.use_extra_acked:
            return 0
        return int(self._extra_acked_filter.value)

    def _check_full_bw(self, rs) -> None:
        if self.filled_pipe or not self._round_start or rs.is_app_limited:
            return
        bw = self._bw_filter.value
        if bw >= self._full_bw * self.tun.full_bw_thresh:
            self._full_bw = bw
            self._full_bw_count = 0
            return
        self._full_bw_count += 1
        if self._full_bw_count >= self.tun.full_bw_rounds:
            self.filled_pipe = True

    # -- control computation ------------------------------------------------

    def _min_cwnd(self) -> int:
        return self.tun.min_cwnd_segments * self.mss

    def _model_bw(self) -> float:
        return self._bw_filter.value

    def _bdp_bytes(self, gain: float = 1.0) -> int:
        bw = self._model_bw()
        if bw <= 0 or self.min_rtt_ns is None:
            return self._initial_cwnd
        return int(gain * bw * self.min_rtt_ns / (8 * NS_PER_S))

    def _target_inflight(self, gain: float) -> int:
        return max(self._bdp_bytes(gain), self._min_cwnd())

    def _set_pacing(self) -> None:
        bw = self._model_bw()
        if bw <= 0:
            return
        rate = self.pacing_gain * bw
        if self.filled_pipe or rate > self.pacing_rate_bps:
            self.pacing_rate_bps = rate

    def _probe_rtt_cwnd(self) -> int:
        if self.tun.probe_rtt_cwnd_gain is not None:
            return max(self._bdp_bytes(self.tun.probe_rtt_cwnd_gain), self._min_cwnd())
        return self._min_cwnd()

    def _set_cwnd(self, flow, rs, now: int) -> None:
        if self.state == PROBE_RTT:
            self.cwnd = min(self.cwnd, self._probe_rtt_cwnd())
            return
        target = self._target_inflight(self.cwnd_gain) + self.extra_acked
        if self.filled_pipe:
            self.cwnd = min(self.cwnd + rs.newly_acked, target)
        elif self.cwnd < target or flow.delivered < self._initial_cwnd:
            self.cwnd = self.cwnd + rs.newly_acked
        self.cwnd = max(self.cwnd, self._min_cwnd())
        self._bound_cwnd_for_model()

    def _bound_cwnd_for_model(self) -> None:
        pass   # v2/v3 inflight bounds

    # -- ProbeRTT ------------------------------------------------------------

    def _check_probe_rtt(self, flow, rs, now: int) -> None:
        if self.state != PROBE_RTT and self._min_rtt_expired:
            self._enter_probe_rtt(flow, now)
        if self.state == PROBE_RTT:
            self._handle_probe_rtt(flow, now)

    def _enter_probe_rtt(self, flow, now: int) -> None:
        self._prior_cwnd = max(self.cwnd, self._prior_cwnd)
        self.state = PROBE_RTT
        self.pacing_gain = 1.0
        self.cwnd_gain = 1.0
        self._probe_rtt_done_at = None
        self._probe_rtt_round_done = False
        flow.app_limited = True

    def _handle_probe_rtt(self, flow, now: int) -> None:
        if self._probe_rtt_done_at is None:
            if flow.inflight <= self._probe_rtt_cwnd() + self.mss:
                self._probe_rtt_done_at = now + self.tun.probe_rtt_duration_ns
                self._probe_rtt_round_done = False
                self._next_round_delivered = flow.delivered
        else:
            if self._round_start:
                self._probe_rtt_round_done = True
            if self._probe_rtt_round_done and now >= self._probe_rtt_done_at:
                self._min_rtt_stamp = now
                self._min_rtt_expired = False
                self.cwnd = max(self.cwnd, self._prior_cwnd)
                self._prior_cwnd = 0
                flow.app_limited = False
                self._exit_probe_rtt(now)

    def _exit_probe_rtt(self, now: int) -> None:
        raise NotImplementedError

    def _enter_startup(self) -> None:
        self.state = STARTUP
        self.pacing_gain = self.tun.startup_pacing_gain
        self.cwnd_gain = self.tun.startup_cwnd_gain

    def _advance_machine(self, flow, rs, now: int) -> None:
        raise NotImplementedError


class BbrV1(_BbrBase):
    """Original design: gain-cycled ProbeBW, oblivious to loss."""

    def __init__(self, mss: int = MSS_BYTES, rng: RngStream | None = None):
        super().__init__(1, mss, rng)
        self._cycle_idx = 0
        self._cycle_stamp = 0

    def _advance_machine(self, flow, rs, now: int) -> None:
        if self.state == STARTUP:
            self._check_full_bw(rs)
            if self.filled_pipe:
                self.state = DRAIN
                self.pacing_gain = self.tun.drain_pacing_gain
                self.cwnd_gain = self.tun.startup_cwnd_gain
        if self.state == DRAIN:
            if flow.inflight <= self._target_inflight(1.0):
                self._enter_probe_bw(now)
        if self.state == PROBE_BW:
            self._advance_cycle(flow, rs, now)

    def _enter_probe_bw(self, now: int) -> None:
        self.state = PROBE_BW
        self.cwnd_gain = self.tun.cwnd_gain
        # random initial phase, skipping the draining slot
        r = self.rng.randint(0, 6) if self.rng is not None else 0
        self._cycle_idx = 0 if r == 0 else r + 1
        self._cycle_stamp = now
        self.pacing_gain = V1_GAIN_CYCLE[self._cycle_idx]

    def _advance_cycle(self, flow, rs, now: int) -> None:
        min_rtt = self.min_rtt_ns or INITIAL_RTT_GUESS_NS
        elapsed = now - self._cycle_stamp > min_rtt
        gain = V1_GAIN_CYCLE[self._cycle_idx]
        prior_inflight = flow.inflight + rs.newly_acked
        if gain > 1.0:
            advance = elapsed and (
                self._loss_in_round or prior_inflight >= self._target_inflight(gain))
        elif gain < 1.0:
            advance = elapsed or flow.inflight <= self._target_inflight(1.0)
        else:
            advance = elapsed
        if advance:
            self._cycle_idx = (self._cycle_idx + 1) % len(V1_GAIN_CYCLE)
            self._cycle_stamp = now
            self.pacing_gain = V1_GAIN_CYCLE[self._cycle_idx]

    def _exit_probe_rtt(self, now: int) -> None:
        if self.filled_pipe:
            self._enter_probe_bw(now)
        else:
            self._enter_startup()


class _BbrV23(_BbrBase):
    """Down/Cruise/Refill/Up probing with loss-bounded inflight."""

    def __init__(self, version: int, mss: int = MSS_BYTES, rng: RngStream | None = None):
        super().__init__(version, mss, rng)
        self.inflight_hi = math.inf
        self.inflight_lo = math.inf
        self._probe_wait_until = 0
        self._cycle_stamp = 0
        self._probe_up_rounds = 0
        self._probe_up_acks = 0
        self._probe_up_cnt = self.mss
        self._cycle_count = 0
        self._in_cycles = False   # once past drain, tick the bw filter per cycle
        self._inflight_at_loss = 0
        self._round_max_inflight = 0
        self.bw_lo = math.inf          # pacing bound after lossy rounds
        self._bw_latest = 0.0          # best delivery-rate sample this round

    def _bw_filter_tick(self) -> int:
        return self._cycle_count if self._in_cycles else self._round_count

    @property
    def _bw_window(self) -> int:
        return self.tun.bw_window_cycles if self._in_cycles else self.tun.bw_window_rounds

    def _bounded_bw(self) -> float:
        return min(self._bw_filter.value, self.bw_lo)

    def _advance_machine(self, flow, rs, now: int) -> None:
        self._round_max_inflight = max(self._round_max_inflight, flow.inflight)
        self._bw_latest = max(self._bw_latest, rs.delivery_rate_bps)
        if self._round_start and self._lost_in_round > 0:
            denom = self._lost_in_round + self._delivered_in_round
            if denom > 0 and self._lost_in_round / denom > self.tun.loss_thresh:
                self._on_high_loss_round(flow, now)
        if self._round_start:
            self._inflight_at_loss = 0
            self._round_max_inflight = flow.inflight
            self._bw_latest = rs.delivery_rate_bps

        prior_inflight = flow.inflight + rs.newly_acked
        if self.state == STARTUP:
            self._check_full_bw(rs)
            if self.filled_pipe:
                self.state = DRAIN
                self.pacing_gain = self.tun.drain_pacing_gain
        if self.state == DRAIN:
            if flow.inflight <= self._target_inflight(1.0):
                self._enter_probe_down(now)
        elif self.state == PROBE_DOWN:
            if now >= self._probe_wait_until:
                self._enter_probe_refill(flow, now)
            elif flow.inflight <= self._target_inflight(1.0):
                self._enter_probe_cruise()
        elif self.state == PROBE_CRUISE:
            if now >= self._probe_wait_until:
                self._enter_probe_refill(flow, now)
        elif self.state == PROBE_REFILL:
            if self._round_start:
                self._enter_probe_up(now)
        elif self.state == PROBE_UP:
            self._maybe_grow_inflight_hi(flow, rs)
            min_rtt = self.min_rtt_ns or INITIAL_RTT_GUESS_NS
            if now - self._cycle_stamp > min_rtt and \
                    prior_inflight > self._target_inflight(self.tun.probe_up_gain):
                self._enter_probe_down(now)

    def _on_loss_event(self, flow, kind: str, now: int) -> None:
        # remember how much was in flight when congestion actually struck
        self._inflight_at_loss = max(self._inflight_at_loss, flow.inflight)

    def _on_high_loss_round(self, flow, now: int) -> None:
        struck = max(self._inflight_at_loss, flow.inflight, self._min_cwnd())
        # the hard ceiling reacts only to losses caused by our own probing;
        # ambient loss in cruise adapts the soft lower bound instead,
        # floored at the inflight level this round actually sustained
        if self.state in (STARTUP, PROBE_REFILL, PROBE_UP):
            self.inflight_hi = struck
        else:
            lo = self.inflight_lo if math.isfinite(self.inflight_lo) else self.cwnd
            self.inflight_lo = max(self._round_max_inflight,
                                   int(self.tun.beta * lo), self._min_cwnd())
            if self.tun.use_bw_lo:
                blo = self.bw_lo if math.isfinite(self.bw_lo) else self._bw_filter.value
                self.bw_lo = max(self._bw_latest, self.tun.beta * blo)
        if self.state == STARTUP:
            self.filled_pipe = True
        elif self.state == PROBE_UP:
            self._enter_probe_down(now)

    def _enter_probe_down(self, now: int) -> None:
        self.state = PROBE_DOWN
        self.pacing_gain = self.tun.probe_down_gain
        self.cwnd_gain = self.tun.cwnd_gain
        self._probe_up_acks = 0
        self._in_cycles = True
        self._cycle_count += 1
        self._bw_filter.window = self._bw_window
        self._cycle_stamp = now
        wait_s = self.tun.probe_wait_base_s
        if self.rng is not None:
            wait_s += self.rng.uniform() * self.tun.probe_wait_rand_s
        self._probe_wait_until = now + seconds(wait_s)

    def _enter_probe_cruise(self) -> None:
        self.state = PROBE_CRUISE
        self.pacing_gain = 1.0
        self.cwnd_gain = self.tun.cwnd_gain

    def _enter_probe_refill(self, flow, now: int) -> None:
        self.state = PROBE_REFILL
        self.pacing_gain = 1.0
        self.inflight_lo = math.inf
        self.bw_lo = math.inf
        self._lost_in_round = 0
        self._delivered_in_round = 0
        self._next_round_delivered = flow.delivered

    def _enter_probe_up(self, now: int) -> None:
        self.state = PROBE_UP
        self.pacing_gain = self.tun.probe_up_gain
        self._cycle_stamp = now
        self._probe_up_rounds = 0
        self._probe_up_acks = 0
        self._probe_up_cnt = max(self.cwnd, self.mss)

    def _maybe_grow_inflight_hi(self, flow, rs) -> None:
        if not math.isfinite(self.inflight_hi):
            return
        if flow.inflight > self.inflight_hi:
            self.inflight_hi = flow.inflight
        if self._round_start:
            self._probe_up_rounds = min(self._probe_up_rounds + 1, 30)
            self._probe_up_cnt = max(self.cwnd // (1 << self._probe_up_rounds), self.mss)
        if self.cwnd >= self.inflight_hi:
            self._probe_up_acks += rs.newly_acked
            if self._probe_up_acks >= self._probe_up_cnt:
                delta = self._probe_up_acks // self._probe_up_cnt
                self._probe_up_acks -= delta * self._probe_up_cnt
                self.inflight_hi += delta * self.mss

    def _model_bw(self) -> float:
        return self._bounded_bw()

    def _cruise_cap(self) -> float:
        if not math.isfinite(self.inflight_hi):
            return math.inf
        if self.tun.headroom is None:
            return self.inflight_hi
        return max(self.tun.headroom * self.inflight_hi, self._min_cwnd())

    def _bound_cwnd_for_model(self) -> None:
        cap = math.inf
        if self.state in (PROBE_DOWN, PROBE_REFILL, PROBE_UP):
            cap = self.inflight_hi
        elif self.state == PROBE_CRUISE:
            cap = self._cruise_cap()
        cap = min(cap, self.inflight_lo)
        if math.isfinite(cap):
            self.cwnd = max(min(self.cwnd, int(cap)), self._min_cwnd())

    def _exit_probe_rtt(self, now: int) -> None:
        if self.filled_pipe:
            self._enter_probe_cruise()
        else:
            self._enter_startup()


class BbrV2(_BbrV23):
    def __init__(self, mss: int = MSS_BYTES, rng: RngStream | None = None):
        super().__init__(2, mss, rng)


class BbrV3(_BbrV23):
    def __init__(self, mss: int = MSS_BYTES, rng: RngStream | None = None):
        super().__init__(3, mss, rng)
