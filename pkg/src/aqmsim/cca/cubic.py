"""CUBIC congestion control: pure cubic window growth between loss epochs.

No hystart, no Reno-friendly region, no fast convergence: each loss event
restarts a clean cubic epoch, so the trajectory is exactly
W(t) = C*(t - K)^3 + W_max with K = cbrt(W_max*(1-beta)/C).
"""

from __future__ import annotations

from ..engine import NS_PER_S
from ..netpath import MSS_BYTES

CUBIC_C = 0.4      # packets per second cubed
CUBIC_BETA = 0.7
MIN_CWND_SEGMENTS = 2


def cubic_k_seconds(w_max_packets: float) -> float:
    """Epoch plateau offset: time for the cubic to climb back to W_max."""
    return (w_max_packets * (1.0 - CUBIC_BETA) / CUBIC_C) ** (1.0 / 3.0)


def cubic_window_packets(t_seconds: float, w_max_packets: float) -> float:
    """Closed-form window at t seconds after the epoch start."""
    k = cubic_k_seconds(w_max_packets)
    return CUBIC_C * (t_seconds - k) ** 3 + w_max_packets


class Cubic:
    name = "cubic"

    def __init__(self, mss: int = MSS_BYTES, rng=None):
        self.mss = mss
        self.cwnd = 10 * mss
        self.ssthresh = float("inf")
        self.w_max = 0.0            # packets
        self.epoch_start: int | None = None
        # unpaced: window-limited, ack-clocked
        self.pacing_rate_bps = None
        self.pacing_gain = None
        self.state_name = None

    def on_ack(self, flow, rs, now: int) -> None:
        if self.cwnd < self.ssthresh:
            self.cwnd += min(rs.newly_acked, self.mss)
            return
        if self.epoch_start is None:
            self.epoch_start = now
            self.w_max = self.cwnd / self.mss
        t = (now - self.epoch_start) / NS_PER_S
        w = cubic_window_packets(t, self.w_max)
        self.cwnd = max(round(w * self.mss), MIN_CWND_SEGMENTS * self.mss)

    def on_loss(self, flow, kind: str, lost_bytes: int, now: int) -> None:
        if kind == "partial":
            return   # one multiplicative decrease per recovery episode
        self.w_max = self.cwnd / self.mss
        self.cwnd = max(round(CUBIC_BETA * self.cwnd), MIN_CWND_SEGMENTS * self.mss)
        self.ssthresh = self.cwnd
        self.epoch_start = now
