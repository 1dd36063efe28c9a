"""Run-control service: launches simulations, streams live metric samples
as NDJSON over held HTTP connections, and serves completed logs.

Persistence is an append-only index plus per-run directories under the
data dir; no database. Each simulation runs on its own worker thread,
capped at a configurable concurrency; surplus submissions queue FIFO.
"""

from __future__ import annotations

import json
import math
import os
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import FileResponse, JSONResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles

from .aqm import QDISC_KINDS, QdiscConfig
from .cca import CCA_NAMES
from .cca.bbr import TUNABLES
from .cca.cubic import CUBIC_BETA, CUBIC_C
from .harness import Simulation
from .metrics import SCHEMA_VERSION, read_jsonl, summarize_samples, write_jsonl
from .scenario import PRESET_ALIASES, PRESETS, ScenarioConfig, ScenarioError, get_preset

RUN_STATES = ("pending", "running", "done", "failed", "cancelled")
TERMINAL_STATES = ("done", "failed", "cancelled")


class RunRecord:
    """One submitted run: live sample buffer plus its state machine."""

    def __init__(self, run_id: str, scenario: ScenarioConfig, run_dir: Path):
        self.run_id = run_id
        self.scenario = scenario
        self.run_dir = run_dir
        self.state = "pending"
        self.progress_s = 0.0
        self.error: str | None = None
        self.samples: list = []
        self.summary_obj: dict | None = None
        self.cond = threading.Condition()
        self.cancel_requested = threading.Event()

    def handle(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "run_id": self.run_id,
            "state": self.state,
            "progress_s": self.progress_s,
            "scenario": self.scenario.to_json_obj(),
            "error": self.error,
        }

    def terminal(self) -> bool:
        return self.state in TERMINAL_STATES


class RunManager:
    def __init__(self, data_dir: Path, max_workers: int | None = None):
        self.data_dir = Path(data_dir)
        self.runs_dir = self.data_dir / "runs"
        self.runs_dir.mkdir(parents=True, exist_ok=True)
        self.index_path = self.data_dir / "index.jsonl"
        self._lock = threading.Lock()
        self._runs: dict[str, RunRecord] = {}
        workers = max_workers or os.cpu_count() or 2
        self._pool = ThreadPoolExecutor(max_workers=workers)
        self._restore()

    # -- persistence -------------------------------------------------------

    def _append_index(self, record: RunRecord) -> None:
        entry = {"run_id": record.run_id, "name": record.scenario.name,
                 "seed": record.scenario.seed, "state": record.state}
        with open(self.index_path, "a") as fh:
            fh.write(json.dumps(entry, separators=(",", ":")) + "\n")

    def _restore(self) -> None:
        """Reload completed runs from disk after a restart."""
        if not self.index_path.exists():
            return
        states: dict[str, dict] = {}
        with open(self.index_path) as fh:
            for line in fh:
                line = line.strip()
                if line:
                    entry = json.loads(line)
                    states[entry["run_id"]] = entry
        for run_id, entry in states.items():
            run_dir = self.runs_dir / run_id
            scenario_path = run_dir / "scenario.json"
            if not scenario_path.exists():
                continue
            scenario = ScenarioConfig.parse(scenario_path.read_text())
            record = RunRecord(run_id, scenario, run_dir)
            summary_path = run_dir / "summary.json"
            if summary_path.exists():
                record.summary_obj = json.loads(summary_path.read_text())
                record.state = entry["state"] if entry["state"] in TERMINAL_STATES else "done"
                record.progress_s = scenario.duration_s
            else:
                record.state = "failed"
                record.error = "service restarted mid-run"
            self._runs[run_id] = record

    # -- lifecycle ---------------------------------------------------------

    def submit(self, scenario: ScenarioConfig) -> RunRecord:
        run_id = uuid.uuid4().hex
        run_dir = self.runs_dir / run_id
        run_dir.mkdir(parents=True, exist_ok=True)
        record = RunRecord(run_id, scenario, run_dir)
        (run_dir / "scenario.json").write_text(scenario.render())
        with self._lock:
            self._runs[run_id] = record
        self._append_index(record)
        self._pool.submit(self._execute, record)
        return record

    def _execute(self, record: RunRecord) -> None:
        with record.cond:
            if record.cancel_requested.is_set():
                record.state = "cancelled"
                record.cond.notify_all()
                self._finalize(record)
                return
            record.state = "running"
            record.cond.notify_all()
        try:
            sim = Simulation(record.scenario)

            def on_sample(sample):
                with record.cond:
                    record.samples.append(sample)
                    record.progress_s = sample.t
                    record.cond.notify_all()

            def should_continue():
                return not record.cancel_requested.is_set()

            sim.run(on_sample=on_sample, should_continue=should_continue)
            with record.cond:
                record.state = "cancelled" if record.cancel_requested.is_set() else "done"
                record.cond.notify_all()
        except Exception as exc:
            with record.cond:
                record.state = "failed"
                record.error = str(exc)
                record.cond.notify_all()
        self._finalize(record)

    def _finalize(self, record: RunRecord) -> None:
        cfg = record.scenario
        write_jsonl(record.run_dir / "log.jsonl", record.samples,
                    header_extra={"scenario": cfg.to_json_obj(), "run_id": record.run_id})
        if record.state in ("done", "cancelled"):
            summary = summarize_samples(record.samples, cfg.duration_s,
                                        cfg.sampling_period_s)
            record.summary_obj = summary.to_json_obj()
            (record.run_dir / "summary.json").write_text(
                json.dumps(record.summary_obj, indent=2) + "\n")
        self._append_index(record)

    def get(self, run_id: str) -> RunRecord:
        with self._lock:
            record = self._runs.get(run_id)
        if record is None:
            raise KeyError(run_id)
        return record

    def list(self) -> list[RunRecord]:
        with self._lock:
            return list(self._runs.values())

    def cancel(self, run_id: str) -> RunRecord:
        record = self.get(run_id)
        with record.cond:
            if record.terminal():
                raise ValueError(f"run {run_id} already {record.state}")
            record.cancel_requested.set()
        return record

    # -- streaming -----------------------------------------------------------

    def stream(self, record: RunRecord, start_index: int, realtime_factor: float):
        """Yield NDJSON events: samples from start_index, then the terminal
        summary. Throttled so one simulated second takes at least
        sampling_period/realtime_factor real seconds per sample."""
        samples = record.samples
        if record.terminal() and not samples:
            log_path = record.run_dir / "log.jsonl"
            if log_path.exists():
                _, samples = read_jsonl(log_path)
        idx = start_index
        stream_start = time.monotonic()
        t0: float | None = None
        while True:
            with record.cond:
                while idx >= len(samples) and not record.terminal():
                    record.cond.wait(timeout=0.5)
                available = len(samples)
                terminal = record.terminal()
            while idx < available:
                sample = samples[idx]
                if math.isfinite(realtime_factor) and realtime_factor > 0:
                    if t0 is None:
                        t0 = sample.t
                    target = stream_start + (sample.t - t0) / realtime_factor
                    delay = target - time.monotonic()
                    if delay > 0:
                        time.sleep(delay)
                event = {"type": "sample", "index": idx}
                event.update(sample.to_json_obj())
                yield json.dumps(event, separators=(",", ":")) + "\n"
                idx += 1
            if terminal and idx >= available:
                break
        if record.state == "failed":
            yield json.dumps({"type": "error", "error": record.error or "failed"},
                             separators=(",", ":")) + "\n"
        else:
            event = {"type": "summary", "state": record.state,
                     "summary": record.summary_obj}
            yield json.dumps(event, separators=(",", ":")) + "\n"


def catalog() -> dict:
    presets = []
    for name, cfg in sorted(PRESETS.items()):
        presets.append({
            "name": name,
            "direction": cfg.direction,
            "qdisc": cfg.qdisc.kind,
            "duration_s": cfg.duration_s,
            "flows": [{"flow_id": f.flow_id, "cca": f.cca} for f in cfg.flows],
        })
    tunables = {
        "cubic": {"c": CUBIC_C, "beta": CUBIC_BETA},
        "codel": {"target_ms": 5.0, "interval_ms": 100.0},
        "bbr": {f"v{v}": {
            "startup_pacing_gain": t.startup_pacing_gain,
            "startup_cwnd_gain": t.startup_cwnd_gain,
            "probe_down_gain": t.probe_down_gain,
            "cwnd_gain": t.cwnd_gain,
            "loss_thresh": t.loss_thresh,
            "beta": t.beta,
            "headroom": t.headroom,
            "probe_wait_base_s": t.probe_wait_base_s,
            "probe_wait_rand_s": t.probe_wait_rand_s,
        } for v, t in TUNABLES.items()},
    }
    return {
        "schema_version": SCHEMA_VERSION,
        "ccas": list(CCA_NAMES),
        "aqms": list(QDISC_KINDS),
        "presets": presets,
        "preset_aliases": dict(sorted(PRESET_ALIASES.items())),
        "metrics": ["goodput", "srtt", "jitter", "cwnd", "inflight",
                    "retransmissions", "pacing_rate", "pacing_gain", "qdisc_backlog"],
        "tunables": tunables,
    }


def create_app(data_dir: str | Path = "service-data",
               realtime_factor: float = 10.0,
               max_workers: int | None = None,
               static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="aqmsim control api")
    manager = RunManager(Path(data_dir), max_workers=max_workers)
    app.state.manager = manager
    app.state.realtime_factor = realtime_factor

    def _get_or_404(run_id: str) -> RunRecord:
        try:
            return manager.get(run_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown run {run_id}") from None

    @app.post("/api/runs", status_code=201)
    async def create_run(request: Request):
        body = await request.json()
        try:
            if isinstance(body, dict) and "preset" in body:
                cfg = get_preset(body["preset"])
                if "seed" in body and body["seed"] is not None:
                    cfg = cfg.with_seed(int(body["seed"]))
                if "duration_s" in body and body["duration_s"] is not None:
                    cfg.duration_s = float(body["duration_s"])
            else:
                cfg = ScenarioConfig.from_json_obj(body)
            errors = cfg.validate()
            if errors:
                raise ScenarioError(errors)
        except ScenarioError as exc:
            raise HTTPException(status_code=400,
                                detail={"validation_errors": exc.errors}) from None
        except (TypeError, ValueError, KeyError) as exc:
            raise HTTPException(status_code=400,
                                detail={"validation_errors": [str(exc)]}) from None
        record = manager.submit(cfg)
        return record.handle()

    @app.get("/api/runs")
    def list_runs():
        return {"schema_version": SCHEMA_VERSION,
                "runs": [r.handle() for r in manager.list()]}

    @app.get("/api/runs/{run_id}")
    def get_run(run_id: str):
        return _get_or_404(run_id).handle()

    @app.get("/api/runs/{run_id}/stream")
    def stream_run(run_id: str, request: Request):
        record = _get_or_404(run_id)
        try:
            start = int(request.query_params.get("from", "0"))
        except ValueError:
            raise HTTPException(status_code=400, detail="'from' must be an integer") from None
        factor = app.state.realtime_factor
        if "factor" in request.query_params:
            raw = request.query_params["factor"]
            factor = math.inf if raw in ("inf", "max") else float(raw)
        return StreamingResponse(manager.stream(record, start, factor),
                                 media_type="application/x-ndjson")

    @app.get("/api/runs/{run_id}/log")
    def get_log(run_id: str):
        record = _get_or_404(run_id)
        log_path = record.run_dir / "log.jsonl"
        if not record.terminal() or not log_path.exists():
            raise HTTPException(status_code=409, detail="run not finished")
        return FileResponse(log_path, media_type="application/x-ndjson")

    @app.delete("/api/runs/{run_id}")
    def cancel_run(run_id: str):
        record = _get_or_404(run_id)
        try:
            manager.cancel(run_id)
        except ValueError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from None
        return {"schema_version": SCHEMA_VERSION, "run_id": run_id,
                "state": record.state, "cancel_requested": True}

    @app.get("/api/catalog")
    def get_catalog():
        return catalog()

    static = Path(static_dir) if static_dir else Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if static.is_dir():
        app.mount("/", StaticFiles(directory=static, html=True), name="dashboard")
    else:
        @app.get("/")
        def index_placeholder():
            return JSONResponse({"service": "aqmsim", "dashboard": "not built",
                                 "api": "/api/catalog"})

    return app
