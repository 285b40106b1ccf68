import pytest

from v2xsched.config import ScenarioConfig, dump_config, load_config, parse_config, set_key
from v2xsched.mobility import ConfigurationError


def test_defaults_validate():
    cfg = ScenarioConfig().validate()
    assert cfg.mac.window_ms == 1000
    cfg.mac.scheduler = "nr-sps"
    assert cfg.mac.window_ms == 1100


def test_dump_parse_roundtrip():
    cfg = ScenarioConfig()
    cfg.mac.scheduler = "nr-dynamic"
    cfg.mac.allowed_rri = (100, 200, 500)
    cfg.mac.rri_ms = 200
    cfg.app.period_ms = 500
    cfg.phy.shadow_sigma_db = 0.0
    cfg.predictor.weights_dir = "w"
    cfg.seed = 7
    back = parse_config(dump_config(cfg))
    assert back == cfg
    assert dump_config(back) == dump_config(cfg)


def test_load_config_file(tmp_path):
    p = tmp_path / "s.cfg"
    p.write_text("# comment\nmac.scheduler = nr-sps  # trailing\nseed=3\napp.period_ms = none\nmac.grant_breaking = yes\n")
    cfg = load_config(p)
    assert cfg.mac.scheduler == "nr-sps" and cfg.seed == 3
    assert cfg.app.period_ms is None and cfg.mac.grant_breaking is True


@pytest.mark.parametrize("key", ["nope", "mac.nope", "a.b.c", "mac", "channel.x"])
def test_unknown_keys(key):
    with pytest.raises(ConfigurationError, match="unknown config key"):
        set_key(ScenarioConfig(), key, "1")


@pytest.mark.parametrize("key,val", [("seed", "x"), ("mac.grant_breaking", "maybe"), ("phy.tx_power_dbm", "hot")])
def test_bad_values(key, val):
    with pytest.raises(ConfigurationError):
        set_key(ScenarioConfig(), key, val)


def test_missing_equals():
    with pytest.raises(ConfigurationError, match="line 2"):
        parse_config("seed = 1\nbogus\n")


@pytest.mark.parametrize(
    "edits,msg",
    [
        ({"channel.subchannels": "0"}, "subchannel count"),
        ({"mac.subchannels_per_packet": "4"}, "fit the channel"),
        ({"mac.allowed_rri": "200,100"}, "sorted"),
        ({"mac.allowed_rri": ""}, "non-empty"),
        ({"mac.t1": "100"}, "T1 < T2"),
        ({"mac.rri_ms": "150"}, "not in allowed"),
        ({"mac.scheduler": "lte"}, "unknown scheduler"),
        ({"mac.keep_probability": "1.5"}, "keep_probability"),
        ({"mac.c_resel_min": "20"}, "c_resel"),
        ({"app.traffic": "bursty"}, "traffic mode"),
        ({"app.period_ms": "250"}, "not in allowed"),
        ({"predictor.kind": "lstm"}, "unknown predictor"),
        ({"duration_ms": "500"}, "sensing window"),
        ({"phy.shadow_sigma_db": "-1"}, "shadow"),
        ({"mac.hybrid_grant": "some"}, "hybrid_grant"),
    ],
)
def test_validation_errors(edits, msg):
    cfg = ScenarioConfig()
    for k, v in edits.items():
        set_key(cfg, k, v)
    with pytest.raises(ConfigurationError, match=msg):
        cfg.validate()
