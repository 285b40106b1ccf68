"""Scenario configuration and the flat ``key = value`` file format.

Keys are ``section.field`` (``mac.scheduler = nr-sps``); top-level fields have no
section (``seed = 3``). Tuples are comma separated. Lines starting with ``#`` are
comments.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any

from .mobility import ConfigurationError

SCHEDULERS = ("cv2x-sps", "nr-sps", "nr-dynamic")
TRAFFIC_MODES = ("etsi", "periodic", "hybrid")
PREDICTORS = ("none", "periodic", "mean-ipt", "oracle", "gru")
DEFAULT_RRIS = tuple(range(100, 1001, 100))


@dataclass
class ChannelConfig:
    carrier_hz: float = 5.9e9
    bandwidth_hz: float = 10e6
    subchannels: int = 3
    subchannel_rbs: int = 16
    rb_hz: float = 180e3

    @property
    def subchannel_hz(self) -> float:
        return self.subchannel_rbs * self.rb_hz


@dataclass
class AppConfig:
    packet_bytes: int = 190
    traffic: str = "etsi"
    periodic_fraction: float = 0.5
    # None: the pooled mean ETSI IPT rounded to the closest RRI
    period_ms: int | None = None
    position_m: float = 4.0
    heading_deg: float = 4.0
    speed_mps: float = 4.0
    strict_thresholds: bool = False


@dataclass
class MacConfig:
    scheduler: str = "cv2x-sps"
    grant_breaking: bool = False
    keep_probability: float = 0.0
    rsrp_threshold_dbm: float = -126.0
    # None: 1000 ms for cv2x-sps, 1100 ms for the NR modes
    sensing_window_ms: int | None = None
    t1: int = 4
    t2: int = 100
    allowed_rri: tuple = DEFAULT_RRIS
    rri_ms: int = 100
    c_resel_min: int = 5
    c_resel_max: int = 15
    subchannels_per_packet: int = 1
    # hybrid traffic under nr-dynamic: "mixed" keeps SB-SPS for the periodic vehicles,
    # "all-dynamic" puts every vehicle on dynamic grant
    hybrid_grant: str = "all-dynamic"
    min_candidate_fraction: float = 0.2
    threshold_step_db: float = 3.0

    @property
    def window_ms(self) -> int:
        if self.sensing_window_ms is not None:
            return self.sensing_window_ms
        return 1000 if self.scheduler == "cv2x-sps" else 1100


@dataclass
class PhyConfig:
    tx_power_dbm: float = 23.0
    noise_figure_db: float = 9.0
    shadow_sigma_db: float = 3.0
    decode_sinr_db: float = 3.0
    pl0_db: float = 41.7
    pl_exponent: float = 2.27
    d0_m: float = 1.0
    sensing_range_m: float = 1500.0


@dataclass
class PredictorConfig:
    kind: str = "none"
    period_ms: int | None = None
    weights_dir: str | None = None
    max_speed: float = 50.0


@dataclass
class ScenarioConfig:
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    app: AppConfig = field(default_factory=AppConfig)
    mac: MacConfig = field(default_factory=MacConfig)
    phy: PhyConfig = field(default_factory=PhyConfig)
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    seed: int = 0
    duration_ms: int = 10_000
    log_hooks: bool = False

    def validate(self) -> "ScenarioConfig":
        ch, mac, app = self.channel, self.mac, self.app
        if ch.subchannels < 1:
            raise ConfigurationError("subchannel count must be >= 1")
        if not 1 <= mac.subchannels_per_packet <= ch.subchannels:
            raise ConfigurationError("subchannels_per_packet must fit the channel")
        rris = tuple(mac.allowed_rri)
        if not rris or list(rris) != sorted(rris) or len(set(rris)) != len(rris):
            raise ConfigurationError("allowed RRI set must be non-empty and sorted ascending")
        if any(r <= 0 for r in rris):
            raise ConfigurationError("RRIs must be positive")
        if not 0 <= mac.t1 < mac.t2:
            raise ConfigurationError("selection window needs 0 <= T1 < T2")
        if mac.rri_ms not in rris:
            raise ConfigurationError(f"mac.rri_ms {mac.rri_ms} not in allowed RRI set")
        if mac.scheduler not in SCHEDULERS:
            raise ConfigurationError(f"unknown scheduler {mac.scheduler!r}")
        if mac.hybrid_grant not in ("mixed", "all-dynamic"):
            raise ConfigurationError(f"unknown hybrid_grant {mac.hybrid_grant!r}")
        if not 1 <= mac.c_resel_min <= mac.c_resel_max:
            raise ConfigurationError("invalid c_resel range")
        if not 0.0 <= mac.keep_probability <= 1.0:
            raise ConfigurationError("keep_probability must be in [0, 1]")
        if app.traffic not in TRAFFIC_MODES:
            raise ConfigurationError(f"unknown traffic mode {app.traffic!r}")
        if not 0.0 <= app.periodic_fraction <= 1.0:
            raise ConfigurationError("periodic_fraction must be in [0, 1]")
        if app.period_ms is not None and app.period_ms not in rris:
            raise ConfigurationError(f"app.period_ms {app.period_ms} not in allowed RRI set")
        if self.predictor.kind not in PREDICTORS:
            raise ConfigurationError(f"unknown predictor {self.predictor.kind!r}")
        p = self.predictor.period_ms
        if p is not None and p not in rris:
            raise ConfigurationError(f"predictor.period_ms {p} not in allowed RRI set")
        if self.duration_ms <= mac.window_ms:
            raise ConfigurationError("duration must exceed the sensing window")
        if self.phy.shadow_sigma_db < 0:
            raise ConfigurationError("shadow_sigma_db must be >= 0")
        return self


_SECTIONS = ("channel", "app", "mac", "phy", "predictor")


def _coerce(raw: str, current: Any, ftype: str):
    raw = raw.strip()
    if raw.lower() in ("none", "") and ("None" in ftype):
        return None
    if isinstance(current, bool) or ftype == "bool":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigurationError(f"not a boolean: {raw!r}")
    if isinstance(current, tuple) or ftype == "tuple":
        return tuple(int(v) for v in raw.split(",") if v.strip())
    if "int" in ftype and "float" not in ftype:
        return int(raw)
    if "float" in ftype:
        return float(raw)
    return raw


def set_key(cfg: ScenarioConfig, key: str, raw: str) -> None:
    """Assign one ``section.field`` (or top-level) key from its text value."""
    parts = key.strip().split(".")
    if len(parts) == 1:
        target, name = cfg, parts[0]
    elif len(parts) == 2 and parts[0] in _SECTIONS:
        target, name = getattr(cfg, parts[0]), parts[1]
    else:
        raise ConfigurationError(f"unknown config key {key!r}")
    fields = {f.name: f for f in dataclasses.fields(target)}
    if name not in fields or name in _SECTIONS:
        raise ConfigurationError(f"unknown config key {key!r}")
    ftype = str(fields[name].type)
    try:
        value = _coerce(raw, getattr(target, name), ftype)
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {key}: {exc}") from None
    setattr(target, name, value)


def parse_config(text: str, base: ScenarioConfig | None = None) -> ScenarioConfig:
    cfg = base if base is not None else ScenarioConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected key = value")
        key, value = line.split("=", 1)
        set_key(cfg, key, value)
    return cfg


def load_config(path) -> ScenarioConfig:
    with open(path) as fh:
        return parse_config(fh.read()).validate()


def dump_config(cfg: ScenarioConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if f.name in _SECTIONS:
            for g in dataclasses.fields(value):
                lines.append(f"{f.name}.{g.name} = {_fmt(getattr(value, g.name))}")
        else:
            lines.append(f"{f.name} = {_fmt(value)}")
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)
