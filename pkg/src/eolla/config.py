"""Scenario configuration.

Scenarios are TOML files with one table per section. Every key has a
default (the XR evaluation defaults where one exists), so an
empty file is a valid scenario. Unknown keys are rejected.

Example::

    [run]
    seed = 7
    ues_per_cell = 4

    [la]
    policy = "EOLLA_ALG2"

    [traffic.frame_size]
    mean = 62.5
"""

from __future__ import annotations

import dataclasses
import json
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from . import analytics
from .harq import ALLOWED_N_MAX
from .phy import McsTable
from .traffic import XR_FRAME_SIZE, XR_JITTER, TruncGaussParams

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

POLICIES = ("TRADITIONAL", "EOLLA_ALG1", "EOLLA_ALG2")
# down-steps giving ~30% first-TX CBGER (Alg 1) and ~15% residual TBER (Alg 2) with a 0.5 dB up-step
DEFAULT_STEP_DOWN = {"EOLLA_ALG1": 0.21, "EOLLA_ALG2": 0.044}


class ConfigError(ValueError):
    """Invalid scenario: parse failure, unknown key or violated constraint."""


@dataclass
class RunConfig:
    seed: int = 1
    horizon_ms: float = 10_000.0
    runs: int = 15
    cells: int = 3
    ues_per_cell: int = 5
    warmup_fraction: float = 0.1
    output_dir: str = "out"


@dataclass
class TrafficConfig:
    fps: float = 60.0
    jitter: TruncGaussParams = XR_JITTER  # ms
    frame_size: TruncGaussParams = XR_FRAME_SIZE  # kByte
    pdb_ms: float = 10.0
    random_phase: bool = True  # per-UE frame phase uniform in [0, 1000/fps)
    reliability: float = 0.99
    required_rate_mbps: float = 45.0  # label only; traffic follows frame_size


@dataclass
class CarrierConfig:
    n_prb: int = 272
    slot_ms: float = 0.5
    symbols_per_slot: int = 14
    control_symbols: int = 1
    subcarriers_per_prb: int = 12
    tdd_pattern: str = "DDDSU"
    rank: float = 1.0


@dataclass
class ChannelConfig:
    geometry_db: list = field(default_factory=lambda: [10.0, 25.0])
    fading_std_db: float = 3.0
    fading_corr_ms: float = 5.0
    cqi_period_ms: float = 2.0
    cqi_delay_ms: float = 2.0
    cqi_noise_db: float = 1.0
    cqi_step_db: float = 1.0


@dataclass
class LinkConfig:
    mcs_table: str = "default"
    curve_slope: float = 2.0
    ref_start_db: float = -4.0
    ref_spacing_db: float = 1.0


@dataclass
class HarqConfig:
    mode: str = "auto"  # "tb", "cbg", or "auto" (TB for TRADITIONAL, CBG otherwise)
    n_max: int = 8
    max_retx: int = 3
    processing_symbols: int = 6
    combining: bool = True
    processes: int = 16


@dataclass
class LaConfig:
    policy: str = "TRADITIONAL"
    step_up_db: float = 0.5
    step_down_db: float | None = None
    tber_target: float = 0.1
    initial_offset_db: float = 0.0
    offset_bounds_db: list = field(default_factory=lambda: [-25.0, 15.0])

    def resolved_step_down(self) -> float:
        if self.step_down_db is not None:
            return self.step_down_db
        if self.policy == "TRADITIONAL":
            return analytics.step_down_for_target(self.step_up_db, self.tber_target)
        return DEFAULT_STEP_DOWN[self.policy]


@dataclass
class SchedulerConfig:
    pf_window_slots: float = 100.0
    drop_expired: bool = True


@dataclass
class CapacityConfig:
    ue_counts: list = field(default_factory=lambda: list(range(1, 11)))
    satisfied_fraction: float = 0.9
    runs: int | None = None
    workers: int = 1


@dataclass
class AnalyticsConfig:
    p_tb_values: list = field(default_factory=lambda: [0.05, 0.1, 0.15, 0.2, 0.25, 0.3])
    m_values: list = field(default_factory=lambda: [2, 4, 6, 8])
    xi_cbg: float = 1.0
    xi_tb: float = 1.0
    residual_factor: float = 0.0


@dataclass
class Scenario:
    run: RunConfig = field(default_factory=RunConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    carrier: CarrierConfig = field(default_factory=CarrierConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    link: LinkConfig = field(default_factory=LinkConfig)
    harq: HarqConfig = field(default_factory=HarqConfig)
    la: LaConfig = field(default_factory=LaConfig)
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    capacity: CapacityConfig = field(default_factory=CapacityConfig)
    analytics: AnalyticsConfig = field(default_factory=AnalyticsConfig)

    def tb_based_harq(self) -> bool:
        if self.harq.mode == "auto":
            return self.la.policy == "TRADITIONAL"
        return self.harq.mode == "tb"

    def mcs_table(self) -> McsTable:
        if self.link.mcs_table == "default":
            return McsTable.default(self.link.ref_start_db, self.link.ref_spacing_db)
        return McsTable.from_csv(self.link.mcs_table)

    def derived_targets(self) -> dict:
        up, down = self.la.step_up_db, self.la.resolved_step_down()
        return {
            "first_tx_error_target": analytics.cbger_target(up, down),
            "residual_tber_2nd_tx_target": analytics.residual_tber_target(up, down),
        }

    def with_overrides(self, overrides) -> "Scenario":
        data = self.to_dict(resolve=False)
        for item in overrides:
            key, value = parse_override(item)
            _set_dotted(data, key, value)
        return from_dict(data)

    def to_dict(self, resolve: bool = True) -> dict:
        data = dataclasses.asdict(self)
        if resolve:
            data["la"]["step_down_db"] = self.la.resolved_step_down()
            data["harq"]["mode"] = "tb" if self.tb_based_harq() else "cbg"
            if data["capacity"]["runs"] is None:
                data["capacity"]["runs"] = self.run.runs
        return _drop_none(data)


def _drop_none(obj):
    if isinstance(obj, dict):
        return {k: _drop_none(v) for k, v in obj.items() if v is not None}
    return obj


_SECTIONS = {f.name: f.default_factory for f in fields(Scenario)}
_NESTED = {("traffic", "jitter"), ("traffic", "frame_size")}


def _coerce(path: str, default: Any, value: Any, annotation: str):
    if isinstance(default, bool) or annotation == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean, got {value!r}")
        return value
    if annotation.startswith("int"):
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if annotation.startswith("float"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if annotation == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if annotation == "list":
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        return value
    return value


def _build_section(name: str, data: dict):
    if not isinstance(data, dict):
        raise ConfigError(f"[{name}] must be a table")
    obj = _SECTIONS[name]()
    known = {f.name: f for f in fields(obj)}
    for key, value in data.items():
        path = f"{name}.{key}"
        if key not in known:
            raise ConfigError(f"unknown key '{path}'")
        if (name, key) in _NESTED:
            if not isinstance(value, dict):
                raise ConfigError(f"{path}: expected a table with keys mean, std, lo, hi")
            base = dataclasses.asdict(getattr(obj, key))
            for sub in value:
                if sub not in base:
                    raise ConfigError(f"unknown key '{path}.{sub}'")
            base.update({k: float(v) for k, v in value.items()})
            try:
                setattr(obj, key, TruncGaussParams(**base))
            except ValueError as exc:
                raise ConfigError(f"{path}: {exc}") from None
            continue
        ann = known[key].type if isinstance(known[key].type, str) else known[key].type.__name__
        setattr(obj, key, _coerce(path, getattr(obj, key), value, ann))
    return obj


def _validate(sc: Scenario) -> None:
    def need(cond, key, msg):
        if not cond:
            raise ConfigError(f"{key}: {msg}")

    r = sc.run
    need(r.horizon_ms > 0, "run.horizon_ms", "must be positive")
    need(r.runs >= 1, "run.runs", "must be >= 1")
    need(r.cells >= 1, "run.cells", "must be >= 1")
    need(r.ues_per_cell >= 0, "run.ues_per_cell", "must be >= 0")
    need(0.0 <= r.warmup_fraction < 1.0, "run.warmup_fraction", "must lie in [0, 1)")
    t = sc.traffic
    need(t.fps > 0, "traffic.fps", "must be positive")
    need(t.pdb_ms > 0, "traffic.pdb_ms", "must be positive")
    need(0.0 <= t.reliability < 1.0, "traffic.reliability", "must lie in [0, 1)")
    need(t.frame_size.lo > 0, "traffic.frame_size.lo", "must be positive")
    c = sc.carrier
    need(c.n_prb >= 1, "carrier.n_prb", "must be >= 1")
    need(c.slot_ms > 0, "carrier.slot_ms", "must be positive")
    need(0 <= c.control_symbols < c.symbols_per_slot, "carrier.control_symbols", "must be below symbols_per_slot")
    need(bool(c.tdd_pattern) and not set(c.tdd_pattern) - set("DSU"), "carrier.tdd_pattern", "only D, S, U allowed")
    need("D" in c.tdd_pattern and "U" in c.tdd_pattern, "carrier.tdd_pattern", "needs at least one D and one U")
    need(c.rank > 0, "carrier.rank", "must be positive")
    ch = sc.channel
    need(len(ch.geometry_db) == 2 and ch.geometry_db[0] <= ch.geometry_db[1], "channel.geometry_db", "must be [lo, hi] with lo <= hi")
    ch.geometry_db = [float(x) for x in ch.geometry_db]
    need(ch.fading_std_db >= 0, "channel.fading_std_db", "must be >= 0")
    need(ch.cqi_period_ms > 0, "channel.cqi_period_ms", "must be positive")
    need(ch.cqi_delay_ms >= 0, "channel.cqi_delay_ms", "must be >= 0")
    need(ch.cqi_noise_db >= 0, "channel.cqi_noise_db", "must be >= 0")
    lk = sc.link
    need(lk.curve_slope > 0, "link.curve_slope", "must be positive")
    need(0.5 <= lk.ref_spacing_db <= 2.5, "link.ref_spacing_db", "must lie in [0.5, 2.5] dB")
    if lk.mcs_table != "default":
        need(Path(lk.mcs_table).is_file(), "link.mcs_table", f"file not found: {lk.mcs_table}")
    h = sc.harq
    need(h.mode in ("auto", "tb", "cbg"), "harq.mode", "must be one of 'auto', 'tb', 'cbg'")
    need(h.n_max in ALLOWED_N_MAX, "harq.n_max", f"must be one of {{2, 4, 6, 8}}, got {h.n_max}")
    need(0 <= h.max_retx <= 3, "harq.max_retx", "must lie in [0, 3]")
    need(h.processing_symbols >= 0, "harq.processing_symbols", "must be >= 0")
    need(h.processes >= 1, "harq.processes", "must be >= 1")
    a = sc.la
    need(a.policy in POLICIES, "la.policy", f"must be one of {POLICIES}")
    need(a.step_up_db > 0, "la.step_up_db", "must be positive")
    need(a.step_down_db is None or a.step_down_db > 0, "la.step_down_db", "must be positive")
    need(0.0 < a.tber_target <= 1.0, "la.tber_target", "must lie in (0, 1]")
    need(len(a.offset_bounds_db) == 2 and a.offset_bounds_db[0] <= a.offset_bounds_db[1], "la.offset_bounds_db", "must be [min, max]")
    a.offset_bounds_db = [float(x) for x in a.offset_bounds_db]
    need(a.offset_bounds_db[0] <= a.initial_offset_db <= a.offset_bounds_db[1], "la.initial_offset_db", "must lie within offset_bounds_db")
    if a.policy == "TRADITIONAL" and a.step_down_db is None:
        need(a.tber_target < 1.0, "la.tber_target", "must be < 1 to derive step_down_db")
    need(sc.scheduler.pf_window_slots >= 1, "scheduler.pf_window_slots", "must be >= 1")
    cap = sc.capacity
    need(all(isinstance(n, int) and n >= 1 for n in cap.ue_counts), "capacity.ue_counts", "must be positive integers")
    need(cap.ue_counts == sorted(set(cap.ue_counts)), "capacity.ue_counts", "must be strictly ascending")
    need(0.0 < cap.satisfied_fraction <= 1.0, "capacity.satisfied_fraction", "must lie in (0, 1]")
    need(cap.runs is None or cap.runs >= 1, "capacity.runs", "must be >= 1")
    need(cap.workers >= 1, "capacity.workers", "must be >= 1")
    an = sc.analytics
    need(all(0.0 <= p <= 1.0 for p in an.p_tb_values), "analytics.p_tb_values", "must lie in [0, 1]")
    need(all(isinstance(m, int) and 1 <= m <= 8 for m in an.m_values), "analytics.m_values", "must be integers in [1, 8]")
    need(an.xi_cbg > 0 and an.xi_tb > 0, "analytics.xi_cbg", "efficiencies must be positive")
    need(0.0 <= an.residual_factor <= 1.0, "analytics.residual_factor", "must lie in [0, 1]")


def from_dict(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ConfigError("scenario must be a table of sections")
    sections = {}
    for name, body in data.items():
        if name not in _SECTIONS:
            raise ConfigError(f"unknown section '{name}'")
        sections[name] = _build_section(name, body)
    sc = Scenario(**sections)
    _validate(sc)
    return sc


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file (TOML, or the JSON run metadata
    written by a previous run)."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix == ".json":
            data = json.loads(text)
            data = data.get("config", data)
        else:
            data = tomllib.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: parse error: {exc}") from None
    return from_dict(data)


def parse_override(item: str) -> tuple[str, Any]:
    """Parse ``section.key=value``; the value uses TOML syntax, bare words are strings."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like section.key=value")
    key, raw = item.split("=", 1)
    key = key.strip()
    if "." not in key:
        raise ConfigError(f"override key {key!r} must name a section, e.g. la.policy")
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return key, value


def _set_dotted(data: dict, key: str, value: Any) -> None:
    parts = key.split(".")
    node = data
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key!r} does not address a table")
    node[parts[-1]] = value
