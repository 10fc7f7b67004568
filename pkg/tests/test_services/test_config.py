import pytest

from app.config import build_node_config, get_settings, load_node_config, parse_endpoint
from app.core.exceptions import ConfigError

NODE_TOML = """
[node]
name = "A"
asn = 64512
bgp_id = "10.0.0.1"
rib_dump_path = "/tmp/a.rib"

[[cla]]
name = "mtcp0"
safi = 0
host = "127.0.0.1"
port = 4556

[[cla]]
name = "tcpcl0"
safi = 1
host = "::1"
port = 4557

[bp]
listen = "127.0.0.1:5000"

[bgp]
listen = "127.0.0.1:1790"

[[peer]]
host = "127.0.0.1"
port = 1791
remote_asn = 64513

[timers]
hold = 30
"""


def test_parse_endpoint():
    assert parse_endpoint("127.0.0.1:4556") == ("127.0.0.1", 4556)
    assert parse_endpoint("[::1]:179") == ("::1", 179)
    assert parse_endpoint("::1", default_port=179) == ("::1", 179)
    with pytest.raises(ValueError):
        parse_endpoint("127.0.0.1")
    with pytest.raises(ValueError):
        parse_endpoint("127.0.0.1:70000")


def test_load_node_config(tmp_path):
    path = tmp_path / "a.toml"
    path.write_text(NODE_TOML)

    config = load_node_config(str(path))

    assert config.node_name == "A"
    assert config.node.bgp_id == 0x0A000001
    assert [c.name for c in config.cla] == ["mtcp0", "tcpcl0"]
    assert config.cla_by_name()["tcpcl0"].safi == 1
    assert config.peer[0].peer_id == "as64513"
    assert config.peer[0].mode == "active"
    assert config.peer[0].advertise_dtn
    assert config.timers.hold == 30
    assert config.bgp.adapter == "speaker"
    assert config.bp.adapter == "sim"


def test_missing_and_invalid_files(tmp_path):
    with pytest.raises(ConfigError) as exc_info:
        load_node_config(str(tmp_path / "absent.toml"))
    assert exc_info.value.detail == "file not found"

    broken = tmp_path / "broken.toml"
    broken.write_text("[node\nasn = 1")
    with pytest.raises(ConfigError) as exc_info:
        load_node_config(str(broken))
    assert "invalid TOML" in exc_info.value.detail


def test_default_node_name_and_integer_bgp_id(node_config_factory):
    config = node_config_factory(asn=64520, bgp_id=42, name="")
    assert config.node.bgp_id == 42
    assert config.node_name == "as64520"


@pytest.mark.parametrize(
    "sections, message",
    [
        ({"node": {"bgp_id": "300.0.0.1"}}, "node.bgp_id"),
        ({"node": {"bgp_id": 0}}, "node.bgp_id"),
        ({"node": {"asn": 70000}}, "node.asn"),
        ({"bp": {"adapter": "ion"}}, "bp.adapter"),
        ({"bgp": {"adapter": "bird"}}, "bgp.adapter"),
        ({"timers": {"hold": 2}}, "timers.hold"),
        ({"cla": [{"name": "x", "safi": 0, "host": "not-an-ip", "port": 1}]}, "cla.0.host"),
    ],
)
def test_invalid_sections_are_rejected(node_config_factory, sections, message):
    with pytest.raises(ConfigError) as exc_info:
        node_config_factory(**sections)
    assert exc_info.value.detail.startswith(message)


def test_ibgp_peer_is_rejected(node_config_factory):
    with pytest.raises(ConfigError) as exc_info:
        node_config_factory(asn=64512, peers=[{"host": "127.0.0.1", "remote_asn": 64512}])
    assert "only eBGP" in exc_info.value.detail


def test_duplicate_names_are_rejected(node_config_factory):
    cla = {"name": "mtcp0", "safi": 0, "host": "127.0.0.1", "port": 4556}
    with pytest.raises(ConfigError):
        node_config_factory(clas=[cla, dict(cla, port=4557)])
    peer = {"host": "127.0.0.1", "remote_asn": 64513}
    with pytest.raises(ConfigError):
        node_config_factory(peers=[peer, dict(peer, port=1790)])


def test_error_names_its_source():
    with pytest.raises(ConfigError) as exc_info:
        build_node_config({"node": {"asn": 1, "bgp_id": 1}}, source="inline.toml")
    assert exc_info.value.source == "inline.toml"
    assert "bp" in exc_info.value.detail


def test_omitted_port_and_timers_fall_back_to_settings():
    settings = get_settings()
    config = build_node_config({
        "node": {"asn": 64512, "bgp_id": "10.0.0.1"},
        "cla": [{"name": "mtcp0", "safi": 0, "host": "127.0.0.1", "port": 4556}],
        "bp": {"listen": "127.0.0.1:5000"},
        "peer": [{"host": "127.0.0.2", "remote_asn": 64513}],
    })

    assert config.timers.hold == settings.DEFAULT_HOLD_TIME
    assert config.timers.connect_retry == settings.CONNECT_RETRY_SECONDS
    assert config.peer[0].port == settings.DEFAULT_BGP_PORT
    assert parse_endpoint(config.bgp.listen) == ("0.0.0.0", settings.DEFAULT_BGP_PORT)
