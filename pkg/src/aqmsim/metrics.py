"""Per-flow sampling, fairness math, run summaries, and the JSONL log format.

Declared metric definitions (recorded in the log header):
  goodput  - acked payload bits per second over a trailing window
             (default 1 s), so retransmissions never inflate a flow.
  jitter   - mean absolute difference of consecutive RTT samples inside
             the trailing window.
"""

from __future__ import annotations

import json
import math
import statistics
from dataclasses import asdict, dataclass, field

from .engine import NS_PER_S

SCHEMA_VERSION = 1

SAMPLE_FIELDS = (
    "t", "flow_id", "cca", "goodput", "srtt", "jitter", "cwnd", "inflight",
    "retransmissions", "pacing_rate", "pacing_gain", "bbr_state", "qdisc_backlog",
)


class LogParseError(ValueError):
    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass
class MetricSample:
    t: float                       # seconds from run start
    flow_id: str
    cca: str
    goodput: float                 # bits/s over the trailing window
    srtt: float | None             # ms
    jitter: float | None           # ms
    cwnd: float                    # packets
    inflight: int                  # bytes
    retransmissions: int           # cumulative
    pacing_rate: float | None      # bits/s; absent for unpaced CCAs
    pacing_gain: float | None
    bbr_state: str | None
    qdisc_backlog: int             # packets

    def to_json_obj(self) -> dict:
        obj = {}
        for name in SAMPLE_FIELDS:
            value = getattr(self, name)
            if value is not None:
                obj[name] = value
        return obj

    @classmethod
    def from_json_obj(cls, obj: dict) -> "MetricSample":
        kwargs = {name: obj.get(name) for name in SAMPLE_FIELDS}
        return cls(**kwargs)


@dataclass
class FlowSummary:
    cca: str
    mean_goodput: float
    median_goodput: float
    retransmissions: int
    cov_goodput: float | None      # std/mean over the summary window


@dataclass
class RunSummary:
    schema_version: int
    duration_s: float
    n_samples: int
    window_s: tuple[float, float]  # [lo, hi] over which fairness stats run
    flows: dict[str, FlowSummary]
    jain_index: float
    jain_degenerate: bool
    convergence_time_s: float | None

    def to_json_obj(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "duration_s": self.duration_s,
            "n_samples": self.n_samples,
            "window_s": list(self.window_s),
            "flows": {fid: asdict(fs) for fid, fs in self.flows.items()},
            "jain_index": self.jain_index,
            "jain_degenerate": self.jain_degenerate,
            "convergence_time_s": self.convergence_time_s,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "RunSummary":
        flows = {fid: FlowSummary(**fs) for fid, fs in obj["flows"].items()}
        return cls(
            schema_version=obj["schema_version"],
            duration_s=obj["duration_s"],
            n_samples=obj["n_samples"],
            window_s=tuple(obj["window_s"]),
            flows=flows,
            jain_index=obj["jain_index"],
            jain_degenerate=obj["jain_degenerate"],
            convergence_time_s=obj["convergence_time_s"],
        )


def jain_index(values: list[float]) -> float:
    """(sum x)^2 / (n * sum x^2); 1 for equal shares, 1/n for total capture.

    All-zero input is defined as 1.0 (vacuous fairness); callers flag it.
    """
    if not values:
        raise ValueError("jain_index needs at least one value")
    if any(v < 0 for v in values):
        raise ValueError("jain_index needs non-negative rates")
    total = sum(values)
    sum_sq = sum(v * v for v in values)
    if total == 0 or sum_sq == 0:   # all zero (or denormal underflow)
        return 1.0
    return total * total / (len(values) * sum_sq)


def convergence_time(series: dict[str, list[float]], times: list[float],
                     band: float = 0.2) -> float | None:
    """Smallest t after which every flow's share of total goodput stays
    within band of 1/n. None when the run never converges. Samples with
    zero total carry no share information and pass vacuously."""
    flows = list(series)
    n = len(flows)
    if n < 2:
        raise ValueError("convergence_time needs >= 2 flows")
    length = len(times)
    for fid in flows:
        if len(series[fid]) != length:
            raise ValueError("series must share one sample grid")
    lo, hi = 1.0 / n - band, 1.0 / n + band
    last_bad = -1
    for i in range(length):
        total = sum(series[fid][i] for fid in flows)
        if total == 0:
            continue
        for fid in flows:
            share = series[fid][i] / total
            if not lo <= share <= hi:
                last_bad = i
                break
    if last_bad == length - 1:
        return None
    if last_bad < 0:
        return 0.0
    return times[last_bad + 1]


class FlowSampler:
    """Tracks one flow's received-payload and RTT history between samples.

    Goodput is credited at the receiver when payload first arrives, so
    retransmitted duplicates never count and cumulative-ack repair jumps
    cannot lump credit into one window."""

    def __init__(self, sender, receiver, window_s: float, period_s: float):
        self.sender = sender
        self.receiver = receiver
        self.window_samples = max(1, round(window_s / period_s))
        self._delivered_history: list[int] = [0]
        self._rtt_read_idx = 0
        self._rtt_window: list[tuple[float, float]] = []   # (t_s, rtt_ms)

    def sample(self, t_s: float, period_s: float, window_s: float,
               qdisc_backlog: int) -> MetricSample:
        sender = self.sender
        self._delivered_history.append(self.receiver.received_payload)
        span = min(len(self._delivered_history) - 1, self.window_samples)
        newly = self._delivered_history[-1] - self._delivered_history[-1 - span]
        goodput = newly * 8 / (span * period_s) if span else 0.0

        log = sender.rtt_log
        while self._rtt_read_idx < len(log):
            t_ns, rtt_ns = log[self._rtt_read_idx]
            self._rtt_window.append((t_ns / NS_PER_S, rtt_ns / 1e6))
            self._rtt_read_idx += 1
        cutoff = t_s - window_s
        while self._rtt_window and self._rtt_window[0][0] <= cutoff:
            self._rtt_window.pop(0)
        if len(self._rtt_window) >= 2:
            diffs = [abs(b[1] - a[1]) for a, b in zip(self._rtt_window, self._rtt_window[1:])]
            jitter = sum(diffs) / len(diffs)
        else:
            jitter = 0.0

        cca = sender.cca
        return MetricSample(
            t=round(t_s, 6),
            flow_id=sender.flow_id,
            cca=cca.name,
            goodput=round(goodput, 3),
            srtt=round(sender.srtt / 1e6, 4) if sender.srtt is not None else None,
            jitter=round(jitter, 4),
            cwnd=round(cca.cwnd / sender.mss, 3),
            inflight=sender.inflight,
            retransmissions=sender.retransmissions,
            pacing_rate=round(cca.pacing_rate_bps, 3) if cca.pacing_rate_bps else None,
            pacing_gain=round(cca.pacing_gain, 4) if cca.pacing_gain is not None else None,
            bbr_state=cca.state_name,
            qdisc_backlog=qdisc_backlog,
        )


def write_jsonl(path, samples: list[MetricSample], header_extra: dict | None = None) -> None:
    header = {
        "type": "header",
        "schema_version": SCHEMA_VERSION,
        "jitter_definition": "mean_abs_consecutive_rtt_diff_ms",
        "goodput_definition": "acked_payload_bits_per_s_trailing_window",
    }
    if header_extra:
        header.update(header_extra)
    with open(path, "w") as fh:
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        for s in samples:
            fh.write(json.dumps(s.to_json_obj(), separators=(",", ":")) + "\n")


def read_jsonl(path) -> tuple[dict, list[MetricSample]]:
    samples = []
    header = None
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LogParseError(str(exc), line_no) from None
            if line_no == 1:
                if obj.get("type") != "header":
                    raise LogParseError("missing header line", line_no)
                header = obj
                continue
            try:
                samples.append(MetricSample.from_json_obj(obj))
            except TypeError as exc:
                raise LogParseError(str(exc), line_no) from None
    if header is None:
        raise LogParseError("empty log", 1)
    return header, samples


def summarize_samples(samples: list[MetricSample], duration_s: float,
                      sampling_period_s: float,
                      window: tuple[float, float] | None = None,
                      band: float = 0.2) -> RunSummary:
    """Build a RunSummary from a sample list. Deterministic: the stored
    summary and any later recomputation from the log are identical."""
    by_flow: dict[str, list[MetricSample]] = {}
    for s in samples:
        by_flow.setdefault(s.flow_id, []).append(s)
    if window is None:
        skip = min(30.0, duration_s / 4)
        window = (skip, duration_s)
    lo, hi = window

    flows: dict[str, FlowSummary] = {}
    windowed_means: dict[str, float] = {}
    for fid, rows in sorted(by_flow.items()):
        in_win = [r.goodput for r in rows if lo <= r.t <= hi]
        if not in_win:
            in_win = [0.0]
        mean_g = statistics.fmean(in_win)
        cov = None
        if mean_g > 0 and len(in_win) > 1:
            cov = statistics.pstdev(in_win) / mean_g
        flows[fid] = FlowSummary(
            cca=rows[0].cca,
            mean_goodput=round(mean_g, 3),
            median_goodput=round(statistics.median(in_win), 3),
            retransmissions=rows[-1].retransmissions,
            cov_goodput=round(cov, 6) if cov is not None else None,
        )
        windowed_means[fid] = mean_g

    rates = list(windowed_means.values())
    jain = round(jain_index(rates), 6) if rates else 1.0
    degenerate = bool(rates) and all(r == 0 for r in rates)

    conv = None
    if len(by_flow) >= 2:
        times = sorted({s.t for s in samples})
        grid = {fid: {r.t: r.goodput for r in rows} for fid, rows in by_flow.items()}
        aligned_times = [t for t in times if all(t in g for g in grid.values())]
        series = {fid: [grid[fid][t] for t in aligned_times] for fid in grid}
        if aligned_times:
            conv = convergence_time(series, aligned_times, band=band)

    return RunSummary(
        schema_version=SCHEMA_VERSION,
        duration_s=duration_s,
        n_samples=len(samples),
        window_s=(lo, hi),
        flows=flows,
        jain_index=jain,
        jain_degenerate=degenerate,
        convergence_time_s=conv,
    )
