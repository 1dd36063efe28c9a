"""Experiment runner: wires a scenario into an engine, paths and flow
endpoints, drives it on the sampling clock, and writes logs + summaries."""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

from .aqm import QdiscConfig, build_qdisc
from .cca import make_cca
from .engine import Engine, seconds
from .metrics import (
    FlowSampler,
    MetricSample,
    RunSummary,
    read_jsonl,
    summarize_samples,
    write_jsonl,
)
from .netpath import DirectionalPath, LinkConfig, MSS_BYTES
from .scenario import ScenarioConfig, ScenarioError, get_preset
from .transport import TcpReceiver, TcpSender

ACK_PATH_PFIFO_LIMIT = 1000   # reverse direction: deep FIFO, never the bottleneck


class Simulation:
    """One scenario instance: deterministic for a fixed config + seed."""

    def __init__(self, cfg: ScenarioConfig):
        errors = cfg.validate()
        if errors:
            raise ScenarioError(errors)
        self.cfg = cfg
        self.engine = Engine(seed=cfg.seed)

        data_qdisc = build_qdisc(cfg.qdisc, cfg.link.rate_bps)
        ack_link = LinkConfig(rate_bps=cfg.link.rate_bps,
                              prop_delay_ns=cfg.link.prop_delay_ns)
        ack_qdisc = build_qdisc(QdiscConfig(kind="pfifo", pfifo_limit=ACK_PATH_PFIFO_LIMIT),
                                ack_link.rate_bps)
        label = "up" if cfg.direction == "upload" else "down"
        self.data_path = DirectionalPath(self.engine, f"{label}.data", cfg.link, data_qdisc)
        self.ack_path = DirectionalPath(self.engine, f"{label}.ack", ack_link, ack_qdisc)
        self.data_qdisc = data_qdisc

        self.senders: dict[str, TcpSender] = {}
        self.receivers: dict[str, TcpReceiver] = {}
        self._samplers: dict[str, FlowSampler] = {}
        self._flow_order: list[str] = []
        for spec in cfg.flows:
            cca = make_cca(spec.cca, MSS_BYTES, self.engine.rng(f"cca.{spec.flow_id}"))
            sender = TcpSender(self.engine, spec.flow_id, cca, self.data_path)
            receiver = TcpReceiver(spec.flow_id, self.ack_path)
            self.data_path.attach(spec.flow_id, receiver.on_data)
            self.ack_path.attach(spec.flow_id, sender.on_ack_packet)
            self.engine.schedule(seconds(spec.start_offset_s),
                                 lambda s=sender: s.start(self.engine.now),
                                 label=f"{spec.flow_id}.start")
            self.senders[spec.flow_id] = sender
            self.receivers[spec.flow_id] = receiver
            self._samplers[spec.flow_id] = FlowSampler(
                sender, receiver, cfg.goodput_window_s, cfg.sampling_period_s)
            self._flow_order.append(spec.flow_id)
        self.samples: list[MetricSample] = []

    def run(self, on_sample: Callable[[MetricSample], None] | None = None,
            should_continue: Callable[[], bool] | None = None) -> list[MetricSample]:
        cfg = self.cfg
        period_ns = seconds(cfg.sampling_period_s)
        n_ticks = round(cfg.duration_s / cfg.sampling_period_s)
        for k in range(1, n_ticks + 1):
            self.engine.run_until(k * period_ns)
            t_s = round(k * cfg.sampling_period_s, 6)
            for fid in self._flow_order:
                sample = self._samplers[fid].sample(
                    t_s, cfg.sampling_period_s, cfg.goodput_window_s,
                    self.data_qdisc.backlog_for_flow(fid))
                self.samples.append(sample)
                if on_sample is not None:
                    on_sample(sample)
            if should_continue is not None and not should_continue():
                break
        return self.samples

    def summary(self) -> RunSummary:
        return summarize_samples(self.samples, self.cfg.duration_s,
                                 self.cfg.sampling_period_s)


@dataclass
class RunResult:
    scenario: ScenarioConfig
    log_path: str
    summary_path: str
    summary: RunSummary
    runtime_s: float


def default_out_dir() -> Path:
    return Path(os.environ.get("AQMSIM_OUT", "runs"))


def run_scenario(cfg: ScenarioConfig, out_dir: str | Path | None = None,
                 stem: str | None = None,
                 on_sample: Callable[[MetricSample], None] | None = None,
                 should_continue: Callable[[], bool] | None = None) -> RunResult:
    out = Path(out_dir) if out_dir is not None else default_out_dir()
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    sim = Simulation(cfg)
    samples = sim.run(on_sample=on_sample, should_continue=should_continue)
    runtime = time.perf_counter() - started

    stem = stem or f"{cfg.name}-seed{cfg.seed}"
    log_path = out / f"{stem}.jsonl"
    write_jsonl(log_path, samples, header_extra={"scenario": cfg.to_json_obj()})
    summary = summarize_samples(samples, cfg.duration_s, cfg.sampling_period_s)
    summary_path = out / f"{stem}.summary.json"
    summary_path.write_text(json.dumps(summary.to_json_obj(), indent=2) + "\n")
    return RunResult(scenario=cfg, log_path=str(log_path), summary_path=str(summary_path),
                     summary=summary, runtime_s=runtime)


def summarize(log_path: str | Path) -> RunSummary:
    """Recompute a summary from a log; identical to the run-time summary."""
    header, samples = read_jsonl(log_path)
    scenario = header.get("scenario", {})
    duration = float(scenario.get("duration_s", samples[-1].t if samples else 0.0))
    period = float(scenario.get("sampling_period_s", 0.1))
    return summarize_samples(samples, duration, period)


def build_pair_scenario(cca: str, aqm: str, direction: str, seed: int) -> ScenarioConfig:
    tag = {"pfifo": "pfifo", "fq_codel": "fqcodel", "cake": "cake"}[aqm]
    short = "up" if direction in ("up", "upload") else "down"
    preset = get_preset(f"cubic-vs-{cca}-{tag}-{short}") if cca != "cubic" else None
    if preset is None:
        # cubic-vs-cubic cell: clone the bbr3 preset shape with two cubics
        base = get_preset(f"cubic-vs-bbr3-{tag}-{short}")
        from .scenario import FlowSpec
        preset = replace(base, name=f"cubic-vs-cubic-{tag}-{short}",
                         flows=[FlowSpec("cubic-a", "cubic"), FlowSpec("cubic-b", "cubic")])
    return preset.with_seed(seed)


def run_matrix(ccas: list[str], aqms: list[str], directions: list[str],
               seeds: list[int], out_dir: str | Path | None = None) -> list[dict]:
    if not (ccas and aqms and directions and seeds):
        raise ScenarioError(["matrix requires non-empty ccas, aqms, directions and seeds"])
    out = Path(out_dir) if out_dir is not None else default_out_dir()
    out.mkdir(parents=True, exist_ok=True)
    cells = []
    for cca in ccas:
        for aqm in aqms:
            for direction in directions:
                for seed in seeds:
                    cell = {"cca": cca, "aqm": aqm, "direction": direction, "seed": seed}
                    try:
                        cfg = build_pair_scenario(cca, aqm, direction, seed)
                        result = run_scenario(cfg, out)
                        cell.update(status="ok", scenario=cfg.name,
                                    log=result.log_path, summary=result.summary_path,
                                    runtime_s=round(result.runtime_s, 3))
                    except Exception as exc:   # record and continue
                        cell.update(status="failed", error=str(exc))
                    cells.append(cell)
    (out / "index.json").write_text(json.dumps(cells, indent=2) + "\n")
    return cells
