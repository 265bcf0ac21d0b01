"""Gateway configuration: defaults, config-file parsing, validation.

The config file is plain text, one `key = value` per line, `#` starts
a comment. Recognized keys:

    bind = 127.0.0.1
    port = 8765
    data_dir = ./studyhall-data
    inactivity_secs = 120
    incorrect_threshold = 3
    incorrect_window_secs = 300
    bandwidth_budget_kbps = 4000
    heartbeat_interval_secs = 15
    stale_after_secs = 45
    disconnect_after_secs = 90
    outbound_queue_limit = 1000
    simulated_clock = false
    avatar_file = ./avatar.json          # lexicon/prompt overrides
    ice_server = stun:stun.example.org   # repeatable
    tier.High = 1280x720@1500            # WxH@kbps[/frame_interval_ms]
    tier.Frozen = 320x180@10/5000

CLI flags override file values. The avatar file is JSON of the shape
{"lexicon": {"Greeting": [..], "Encouragement": [..], "Corrective":
[..]}, "prompts": [..]}; prompts are appended to the defaults, lexicon
entries replace the default keyword list for that cue.

Any violation raises ConfigInvalid with a line-anchored message; the
CLI treats that as fatal at startup.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple

from .alerts import AlertRuleConfig
from .avatar import SemanticCue
from .errors import ConfigInvalid
from .quality import DEFAULT_TIERS, Tier, validate_tier_table
from .session import PresenceThresholds

DEFAULT_ICE_SERVERS = ("stun:stun.l.google.com:19302",)

_TIER_RE = re.compile(r"^(\d+)x(\d+)@(\d+)(?:/(\d+))?$")

_INT_KEYS = {
    "port", "inactivity_secs", "incorrect_threshold",
    "incorrect_window_secs", "bandwidth_budget_kbps",
    "heartbeat_interval_secs", "stale_after_secs", "disconnect_after_secs",
    "outbound_queue_limit",
}
_STR_KEYS = {"bind", "data_dir", "avatar_file"}
_BOOL_KEYS = {"simulated_clock"}


@dataclass(frozen=True)
class GatewayConfig:
    bind: str = "127.0.0.1"
    port: int = 8765
    data_dir: Path = Path("./studyhall-data")
    alert_rules: AlertRuleConfig = AlertRuleConfig()
    tiers: Mapping[str, Tier] = field(default_factory=lambda: dict(DEFAULT_TIERS))
    presence: PresenceThresholds = PresenceThresholds()
    bandwidth_budget_kbps: int = 4000
    ice_servers: Tuple[str, ...] = DEFAULT_ICE_SERVERS
    outbound_queue_limit: int = 1000
    simulated_clock: bool = False
    avatar_file: Optional[Path] = None
    lexicon: Optional[Dict[SemanticCue, Tuple[str, ...]]] = None
    extra_prompts: Tuple[str, ...] = ()

    def validate(self) -> "GatewayConfig":
        try:
            if not self.bind:
                raise ValueError("bind must be non-empty")
            if not (0 <= self.port <= 65535):
                raise ValueError("port must be in [0, 65535]")
            if self.bandwidth_budget_kbps < 0:
                raise ValueError("bandwidth_budget_kbps must be >= 0")
            if self.outbound_queue_limit <= 0:
                raise ValueError("outbound_queue_limit must be positive")
            self.alert_rules.validate()
            self.presence.validate()
            validate_tier_table(self.tiers)
        except ValueError as e:
            raise ConfigInvalid(str(e)) from None
        return self


def _parse_tier(name: str, value: str, where: str) -> Tier:
    m = _TIER_RE.match(value)
    if not m:
        raise ConfigInvalid(
            f"{where}: tier.{name} must look like 1280x720@1500"
            " or 320x180@10/5000")
    w, h, kbps, interval = m.groups()
    return Tier(name, int(w), int(h), int(kbps),
                int(interval) if interval else None)


def parse_config_file(path: Path) -> dict:
    """Raw key/value mapping from one config file.

    Repeatable keys (ice_server) collect into a list under
    "ice_servers"; tier.<Name> entries collect under "tiers".
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigInvalid(f"cannot read config file {path}: {e}") from None
    out: dict = {}
    ice: List[str] = []
    tiers: Dict[str, Tier] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigInvalid(f"{path}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        where = f"{path}:{lineno}"
        if key == "ice_server":
            if not value:
                raise ConfigInvalid(f"{where}: ice_server must be non-empty")
            ice.append(value)
        elif key.startswith("tier."):
            name = key[len("tier."):]
            if name not in DEFAULT_TIERS:
                raise ConfigInvalid(f"{where}: unknown tier {name!r}")
            tiers[name] = _parse_tier(name, value, where)
        elif key in _INT_KEYS:
            try:
                out[key] = int(value)
            except ValueError:
                raise ConfigInvalid(f"{where}: {key} must be an integer") from None
        elif key in _BOOL_KEYS:
            if value.lower() not in ("true", "false"):
                raise ConfigInvalid(f"{where}: {key} must be true or false")
            out[key] = value.lower() == "true"
        elif key in _STR_KEYS:
            out[key] = value
        else:
            raise ConfigInvalid(f"{where}: unknown key {key!r}")
    if ice:
        out["ice_servers"] = ice
    if tiers:
        out["tiers"] = tiers
    return out


def _load_avatar_file(path: Path) -> Tuple[Optional[dict], Tuple[str, ...]]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        raise ConfigInvalid(f"cannot load avatar file {path}: {e}") from None
    if not isinstance(doc, dict):
        raise ConfigInvalid(f"{path}: avatar file must be a JSON object")
    lexicon = None
    raw_lex = doc.get("lexicon")
    if raw_lex is not None:
        if not isinstance(raw_lex, dict):
            raise ConfigInvalid(f"{path}: lexicon must be an object")
        lexicon = {}
        for cue_name, words in raw_lex.items():
            try:
                cue = SemanticCue(cue_name)
            except ValueError:
                raise ConfigInvalid(
                    f"{path}: unknown cue {cue_name!r}") from None
            if cue is SemanticCue.NEUTRAL:
                raise ConfigInvalid(f"{path}: Neutral takes no keywords")
            if (not isinstance(words, list)
                    or not all(isinstance(w, str) and w for w in words)):
                raise ConfigInvalid(
                    f"{path}: lexicon[{cue_name}] must be a list of words")
            lexicon[cue] = tuple(w.lower() for w in words)
    prompts = doc.get("prompts", [])
    if (not isinstance(prompts, list)
            or not all(isinstance(p, str) and p for p in prompts)):
        raise ConfigInvalid(f"{path}: prompts must be a list of strings")
    return lexicon, tuple(prompts)


def build_config(file_values: Optional[dict] = None,
                 overrides: Optional[dict] = None) -> GatewayConfig:
    """Merge defaults <- config file <- CLI overrides, then validate."""
    merged: dict = {}
    for source in (file_values or {}), (overrides or {}):
        for k, v in source.items():
            if v is not None:
                merged[k] = v

    cfg = GatewayConfig()
    alert = AlertRuleConfig(
        inactivity_secs=merged.pop("inactivity_secs",
                                   cfg.alert_rules.inactivity_secs),
        incorrect_threshold=merged.pop("incorrect_threshold",
                                       cfg.alert_rules.incorrect_threshold),
        incorrect_window_secs=merged.pop("incorrect_window_secs",
                                         cfg.alert_rules.incorrect_window_secs))
    presence = PresenceThresholds(
        heartbeat_interval_secs=merged.pop(
            "heartbeat_interval_secs", cfg.presence.heartbeat_interval_secs),
        stale_after_secs=merged.pop("stale_after_secs",
                                    cfg.presence.stale_after_secs),
        disconnect_after_secs=merged.pop("disconnect_after_secs",
                                         cfg.presence.disconnect_after_secs))
    tiers = dict(DEFAULT_TIERS)
    tiers.update(merged.pop("tiers", {}))

    kwargs = dict(alert_rules=alert, presence=presence, tiers=tiers)
    if "bind" in merged:
        kwargs["bind"] = merged.pop("bind")
    if "port" in merged:
        kwargs["port"] = merged.pop("port")
    if "data_dir" in merged:
        kwargs["data_dir"] = Path(merged.pop("data_dir"))
    if "bandwidth_budget_kbps" in merged:
        kwargs["bandwidth_budget_kbps"] = merged.pop("bandwidth_budget_kbps")
    if "ice_servers" in merged:
        kwargs["ice_servers"] = tuple(merged.pop("ice_servers"))
    if "outbound_queue_limit" in merged:
        kwargs["outbound_queue_limit"] = merged.pop("outbound_queue_limit")
    if "simulated_clock" in merged:
        kwargs["simulated_clock"] = bool(merged.pop("simulated_clock"))
    if "avatar_file" in merged:
        kwargs["avatar_file"] = Path(merged.pop("avatar_file"))
    if merged:
        raise ConfigInvalid(f"unknown config key {sorted(merged)[0]!r}")

    config = GatewayConfig(**kwargs)
    if config.avatar_file is not None:
        lexicon, prompts = _load_avatar_file(config.avatar_file)
        config = replace(config, lexicon=lexicon, extra_prompts=prompts)
    return config.validate()
