"""Config file parsing, merge precedence, avatar overrides, validation."""

import json

import pytest

from studyhall.avatar import SemanticCue, classify_intent
from studyhall.config import (GatewayConfig, build_config, parse_config_file)
from studyhall.errors import ConfigInvalid


def write(tmp_path, text, name="gw.conf"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


class TestParseFile:
    def test_full_file(self, tmp_path):
        p = write(tmp_path, """
# studyhall gateway
bind = 0.0.0.0
port = 9001
data_dir = /tmp/sh-data

inactivity_secs = 60
incorrect_threshold = 2
incorrect_window_secs = 120
bandwidth_budget_kbps = 2500
heartbeat_interval_secs = 10
stale_after_secs = 30
disconnect_after_secs = 60
outbound_queue_limit = 64
simulated_clock = true

ice_server = stun:stun.example.org
ice_server = turn:turn.example.org:3478

tier.High = 1920x1080@2500
tier.Frozen = 160x90@5/10000
""")
        vals = parse_config_file(p)
        assert vals["bind"] == "0.0.0.0"
        assert vals["port"] == 9001
        assert vals["simulated_clock"] is True
        assert vals["ice_servers"] == ["stun:stun.example.org",
                                       "turn:turn.example.org:3478"]
        assert vals["tiers"]["High"].width == 1920
        assert vals["tiers"]["High"].frame_interval_ms is None
        assert vals["tiers"]["Frozen"].frame_interval_ms == 10000
        assert vals["tiers"]["Frozen"].bitrate_kbps == 5

    def test_comments_and_blanks_skipped(self, tmp_path):
        p = write(tmp_path, "\n\n# only comments\n   \n# port = 1\n")
        assert parse_config_file(p) == {}

    def test_errors_are_line_anchored(self, tmp_path):
        p = write(tmp_path, "port = 8080\nwat\n")
        with pytest.raises(ConfigInvalid, match=r":2: expected key = value"):
            parse_config_file(p)

    def test_unknown_key(self, tmp_path):
        p = write(tmp_path, "colour = blue\n")
        with pytest.raises(ConfigInvalid, match="unknown key 'colour'"):
            parse_config_file(p)

    def test_int_key_rejects_text(self, tmp_path):
        p = write(tmp_path, "port = eight\n")
        with pytest.raises(ConfigInvalid, match="port must be an integer"):
            parse_config_file(p)

    def test_bool_key_strict(self, tmp_path):
        p = write(tmp_path, "simulated_clock = yes\n")
        with pytest.raises(ConfigInvalid, match="true or false"):
            parse_config_file(p)
        p2 = write(tmp_path, "simulated_clock = FALSE\n", name="b.conf")
        assert parse_config_file(p2)["simulated_clock"] is False

    def test_bad_tier_syntax(self, tmp_path):
        for bad in ("1280x720", "1280@1500", "axb@c", "1280x720@1500/",
                    "1280 x 720 @ 1500"):
            p = write(tmp_path, f"tier.High = {bad}\n")
            with pytest.raises(ConfigInvalid, match="must look like"):
                parse_config_file(p)

    def test_unknown_tier_name(self, tmp_path):
        p = write(tmp_path, "tier.Ultra = 1x1@1\n")
        with pytest.raises(ConfigInvalid, match="unknown tier 'Ultra'"):
            parse_config_file(p)

    def test_empty_ice_server(self, tmp_path):
        p = write(tmp_path, "ice_server =\n")
        with pytest.raises(ConfigInvalid, match="ice_server"):
            parse_config_file(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigInvalid, match="cannot read config file"):
            parse_config_file(tmp_path / "nope.conf")


class TestBuildConfig:
    def test_defaults(self):
        cfg = build_config()
        assert cfg.bind == "127.0.0.1"
        assert cfg.port == 8765
        assert cfg.bandwidth_budget_kbps == 4000
        assert cfg.alert_rules.inactivity_secs == 120
        assert cfg.presence.stale_after_secs == 45
        assert set(cfg.tiers) == {"High", "Mid", "Low", "Frozen"}
        assert cfg.lexicon is None

    def test_override_beats_file(self):
        cfg = build_config(file_values={"port": 9000,
                                        "inactivity_secs": 60},
                           overrides={"port": 9100})
        assert cfg.port == 9100
        assert cfg.alert_rules.inactivity_secs == 60

    def test_none_overrides_are_skipped(self):
        cfg = build_config(file_values={"port": 9000},
                           overrides={"port": None, "bind": None})
        assert cfg.port == 9000
        assert cfg.bind == "127.0.0.1"

    def test_unknown_merged_key(self):
        with pytest.raises(ConfigInvalid, match="unknown config key"):
            build_config(overrides={"verbosity": 3})

    def test_validation_failures(self):
        with pytest.raises(ConfigInvalid, match="port"):
            build_config(overrides={"port": 70000})
        with pytest.raises(ConfigInvalid):
            build_config(overrides={"inactivity_secs": 0})
        with pytest.raises(ConfigInvalid):
            build_config(overrides={"stale_after_secs": 500})
        with pytest.raises(ConfigInvalid):
            build_config(overrides={"outbound_queue_limit": 0})
        with pytest.raises(ConfigInvalid):
            build_config(overrides={"bandwidth_budget_kbps": -1})

    def test_tier_override_must_keep_ordering(self, tmp_path):
        # Mid hotter than High breaks the non-decreasing tier ladder
        p = write(tmp_path, "tier.Mid = 1280x720@2000\n")
        with pytest.raises(ConfigInvalid):
            build_config(file_values=parse_config_file(p))

    def test_file_plus_overrides_round_trip(self, tmp_path):
        p = write(tmp_path, "port = 9000\nbandwidth_budget_kbps = 1234\n")
        cfg = build_config(file_values=parse_config_file(p),
                           overrides={"data_dir": str(tmp_path / "d")})
        assert cfg.port == 9000
        assert cfg.bandwidth_budget_kbps == 1234
        assert str(cfg.data_dir).endswith("/d")


class TestAvatarFile:
    def test_lexicon_and_prompts(self, tmp_path):
        av = tmp_path / "avatar.json"
        av.write_text(json.dumps({
            "lexicon": {"Greeting": ["HOWDY"],
                        "Corrective": ["rethink"]},
            "prompts": ["Sketch the graph first."],
        }))
        cfg = build_config(overrides={"avatar_file": str(av)})
        assert cfg.lexicon[SemanticCue.GREETING] == ("howdy",)
        assert SemanticCue.ENCOURAGEMENT not in cfg.lexicon
        assert cfg.extra_prompts == ("Sketch the graph first.",)
        # the custom lexicon actually drives classification
        assert classify_intent("howdy partner", cfg.lexicon) is \
            SemanticCue.GREETING
        assert classify_intent("hello", cfg.lexicon) is SemanticCue.NEUTRAL

    def test_neutral_rejected(self, tmp_path):
        av = write(tmp_path, json.dumps({"lexicon": {"Neutral": ["x"]}}),
                   name="a.json")
        with pytest.raises(ConfigInvalid, match="Neutral takes no keywords"):
            build_config(overrides={"avatar_file": str(av)})

    def test_unknown_cue_rejected(self, tmp_path):
        av = write(tmp_path, json.dumps({"lexicon": {"Sarcasm": ["x"]}}),
                   name="a.json")
        with pytest.raises(ConfigInvalid, match="unknown cue"):
            build_config(overrides={"avatar_file": str(av)})

    def test_bad_shapes_rejected(self, tmp_path):
        for doc in ([1, 2], {"lexicon": "words"},
                    {"lexicon": {"Greeting": "hi"}},
                    {"lexicon": {"Greeting": [""]}},
                    {"prompts": "say hi"}, {"prompts": [1]}):
            av = write(tmp_path, json.dumps(doc), name="a.json")
            with pytest.raises(ConfigInvalid):
                build_config(overrides={"avatar_file": str(av)})

    def test_unreadable_avatar_file(self, tmp_path):
        with pytest.raises(ConfigInvalid, match="cannot load avatar file"):
            build_config(overrides={"avatar_file": str(tmp_path / "no.json")})

    def test_invalid_json(self, tmp_path):
        av = write(tmp_path, "{broken", name="a.json")
        with pytest.raises(ConfigInvalid, match="cannot load avatar file"):
            build_config(overrides={"avatar_file": str(av)})


class TestGatewayConfigValidate:
    def test_direct_failures(self):
        with pytest.raises(ConfigInvalid):
            GatewayConfig(bind="").validate()
        with pytest.raises(ConfigInvalid):
            GatewayConfig(port=-1).validate()
        assert GatewayConfig(port=0).validate().port == 0  # ephemeral ok
