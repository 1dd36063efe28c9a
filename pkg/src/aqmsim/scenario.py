"""Scenario definition: experiment descriptions as human-editable JSON
documents, validation, and the builtin preset catalog covering the
standard experiment matrix (CCA pair x qdisc x direction)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .aqm import QDISC_KINDS, QdiscConfig
from .cca import CCA_NAMES
from .engine import NS_PER_MS
from .netpath import LinkConfig

SCENARIO_SCHEMA_VERSION = 1
DIRECTIONS = ("upload", "download")


class ScenarioError(ValueError):
    """Invalid scenario; carries every violation found."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


@dataclass
class FlowSpec:
    flow_id: str
    cca: str
    start_offset_s: float = 0.0


@dataclass
class ScenarioConfig:
    name: str
    direction: str = "upload"
    duration_s: float = 120.0
    link: LinkConfig = field(default_factory=LinkConfig)
    qdisc: QdiscConfig = field(default_factory=QdiscConfig)
    flows: list[FlowSpec] = field(default_factory=list)
    seed: int = 1
    sampling_period_s: float = 0.1
    goodput_window_s: float = 1.0

    def validate(self) -> list[str]:
        errors = []
        if not self.name:
            errors.append("name must be non-empty")
        if self.direction not in DIRECTIONS:
            errors.append(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")
        if not self.duration_s > 0:
            errors.append("duration_s must be > 0")
        errors.extend(self.link.validate())
        errors.extend(self.qdisc.validate())
        if not self.flows:
            errors.append("at least one flow required")
        seen = set()
        for f in self.flows:
            if f.flow_id in seen:
                errors.append(f"duplicate flow_id {f.flow_id!r}")
            seen.add(f.flow_id)
            if f.cca not in CCA_NAMES:
                errors.append(f"flow {f.flow_id!r}: unknown cca {f.cca!r}")
            if f.start_offset_s < 0:
                errors.append(f"flow {f.flow_id!r}: start_offset_s must be >= 0")
            if f.start_offset_s >= self.duration_s > 0:
                errors.append(f"flow {f.flow_id!r}: start_offset_s beyond duration")
        if self.seed < 0:
            errors.append("seed must be >= 0")
        if not self.sampling_period_s > 0:
            errors.append("sampling_period_s must be > 0")
        if not self.goodput_window_s >= self.sampling_period_s:
            errors.append("goodput_window_s must be >= sampling_period_s")
        return errors

    def to_json_obj(self) -> dict:
        return {
            "schema_version": SCENARIO_SCHEMA_VERSION,
            "name": self.name,
            "direction": self.direction,
            "duration_s": self.duration_s,
            "seed": self.seed,
            "sampling_period_s": self.sampling_period_s,
            "goodput_window_s": self.goodput_window_s,
            "link": {
                "rate_bps": self.link.rate_bps,
                "prop_delay_ms": self.link.prop_delay_ns / NS_PER_MS,
                "jitter_max_ms": self.link.jitter_max_ns / NS_PER_MS,
                "loss_prob": self.link.loss_prob,
            },
            "qdisc": {
                "kind": self.qdisc.kind,
                "pfifo_limit": self.qdisc.pfifo_limit,
                "codel_target_ms": self.qdisc.codel_target_ns / NS_PER_MS,
                "codel_interval_ms": self.qdisc.codel_interval_ns / NS_PER_MS,
                "quantum": self.qdisc.quantum,
                "bucket_count": self.qdisc.bucket_count,
                "memory_limit_pkts": self.qdisc.memory_limit_pkts,
                "cake_rate_bps": self.qdisc.cake_rate_bps,
                "force_single_bucket": self.qdisc.force_single_bucket,
            },
            "flows": [
                {"flow_id": f.flow_id, "cca": f.cca, "start_offset_s": f.start_offset_s}
                for f in self.flows
            ],
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "ScenarioConfig":
        link_obj = obj.get("link", {})
        qdisc_obj = obj.get("qdisc", {})
        link = LinkConfig(
            rate_bps=int(link_obj.get("rate_bps", 10_000_000)),
            prop_delay_ns=round(link_obj.get("prop_delay_ms", 5.0) * NS_PER_MS),
            jitter_max_ns=round(link_obj.get("jitter_max_ms", 0.0) * NS_PER_MS),
            loss_prob=float(link_obj.get("loss_prob", 0.0)),
        )
        qdisc = QdiscConfig(
            kind=qdisc_obj.get("kind", "pfifo"),
            pfifo_limit=int(qdisc_obj.get("pfifo_limit", 50)),
            codel_target_ns=round(qdisc_obj.get("codel_target_ms", 5.0) * NS_PER_MS),
            codel_interval_ns=round(qdisc_obj.get("codel_interval_ms", 100.0) * NS_PER_MS),
            quantum=int(qdisc_obj.get("quantum", 1514)),
            bucket_count=int(qdisc_obj.get("bucket_count", 1024)),
            memory_limit_pkts=int(qdisc_obj.get("memory_limit_pkts", 10240)),
            cake_rate_bps=qdisc_obj.get("cake_rate_bps"),
            force_single_bucket=bool(qdisc_obj.get("force_single_bucket", False)),
        )
        flows = [
            FlowSpec(flow_id=f["flow_id"], cca=f["cca"],
                     start_offset_s=float(f.get("start_offset_s", 0.0)))
            for f in obj.get("flows", [])
        ]
        return cls(
            name=obj.get("name", ""),
            direction=obj.get("direction", "upload"),
            duration_s=float(obj.get("duration_s", 120.0)),
            link=link,
            qdisc=qdisc,
            flows=flows,
            seed=int(obj.get("seed", 1)),
            sampling_period_s=float(obj.get("sampling_period_s", 0.1)),
            goodput_window_s=float(obj.get("goodput_window_s", 1.0)),
        )

    def render(self) -> str:
        return json.dumps(self.to_json_obj(), indent=2) + "\n"

    @classmethod
    def parse(cls, text: str) -> "ScenarioConfig":
        return cls.from_json_obj(json.loads(text))

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=seed)


# declared Wi-Fi surrogates: contention among multiple transmitting
# stations shows up as propagation jitter on the contended direction
UPLOAD_JITTER_MS = 2.0
DOWNLOAD_JITTER_MS = 0.5

_AQM_TAGS = {"pfifo": "pfifo", "fq_codel": "fqcodel", "cake": "cake"}


def _qdisc_for(kind: str) -> QdiscConfig:
    return QdiscConfig(kind=kind)


def _pair_preset(cca: str, aqm_kind: str, direction: str) -> ScenarioConfig:
    tag = _AQM_TAGS[aqm_kind]
    short = "up" if direction == "upload" else "down"
    jitter = UPLOAD_JITTER_MS if direction == "upload" else DOWNLOAD_JITTER_MS
    return ScenarioConfig(
        name=f"cubic-vs-{cca}-{tag}-{short}",
        direction=direction,
        link=LinkConfig(jitter_max_ns=round(jitter * NS_PER_MS)),
        qdisc=_qdisc_for(aqm_kind),
        flows=[FlowSpec("cubic", "cubic"), FlowSpec(cca, cca)],
    )


def _solo_preset(cca: str) -> ScenarioConfig:
    return ScenarioConfig(
        name=f"{cca}-solo",
        direction="upload",
        link=LinkConfig(),   # clean path: no jitter, no loss
        qdisc=_qdisc_for("pfifo"),
        flows=[FlowSpec(cca, cca)],
    )


def _build_presets() -> dict[str, ScenarioConfig]:
    presets: dict[str, ScenarioConfig] = {}
    for aqm in QDISC_KINDS:
        for direction in DIRECTIONS:
            for cca in ("bbr1", "bbr2", "bbr3"):
                cfg = _pair_preset(cca, aqm, direction)
                presets[cfg.name] = cfg
    for cca in CCA_NAMES:
        cfg = _solo_preset(cca)
        presets[cfg.name] = cfg
    return presets


PRESETS = _build_presets()

# aliases matching the standard figure layout: fig5 = cubic-vs-bbr3 upload
# across qdiscs, fig6 = the download mirror, fig7 = BBR generations under
# pfifo upload, fig1 = the cake upload demo panel
PRESET_ALIASES = {
    "fig1a": "cubic-vs-bbr3-cake-up",
    "fig5a": "cubic-vs-bbr3-pfifo-up",
    "fig5b": "cubic-vs-bbr3-fqcodel-up",
    "fig5c": "cubic-vs-bbr3-cake-up",
    "fig6a": "cubic-vs-bbr3-pfifo-down",
    "fig6b": "cubic-vs-bbr3-fqcodel-down",
    "fig6c": "cubic-vs-bbr3-cake-down",
    "fig7a": "cubic-vs-bbr1-pfifo-up",
    "fig7b": "cubic-vs-bbr2-pfifo-up",
    "fig7c": "cubic-vs-bbr3-pfifo-up",
}


def get_preset(name: str) -> ScenarioConfig:
    key = PRESET_ALIASES.get(name, name)
    try:
        base = PRESETS[key]
    except KeyError:
        raise ScenarioError([f"unknown preset {name!r}"]) from None
    return replace(base)


def list_presets() -> list[str]:
    return sorted(PRESETS) + sorted(PRESET_ALIASES)
