"""Congestion control algorithms with a common duck-typed surface:
cwnd (bytes), pacing_rate_bps (None = unpaced), pacing_gain, state_name,
on_ack(flow, rate_sample, now), on_loss(flow, kind, lost_bytes, now)."""

from __future__ import annotations

from ..engine import RngStream
from ..netpath import MSS_BYTES
from .bbr import BbrV1, BbrV2, BbrV3
from .cubic import Cubic

CCA_NAMES = ("cubic", "bbr1", "bbr2", "bbr3")

_REGISTRY = {
    "cubic": Cubic,
    "bbr1": BbrV1,
    "bbr2": BbrV2,
    "bbr3": BbrV3,
}


def make_cca(name: str, mss: int = MSS_BYTES, rng: RngStream | None = None):
    try:
        cls = _REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown CCA {name!r}; choose from {CCA_NAMES}") from None
    return cls(mss=mss, rng=rng)
