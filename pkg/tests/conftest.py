import os
from pathlib import Path

import pytest

# Keep test runs from writing dated logs into the working tree
os.environ.setdefault("ERDS_LOG_DIR", str(Path(os.environ.get("TMPDIR", "/tmp")) / "erds-test-logs"))

from app.config import build_node_config
from app.services.harness.topology import free_port as allocate_port
from app.services.nlri.models import ClaEndpoint, EidAttribute, EidEntry, EndpointId, ReachabilityAnnouncement

TESTDATA_DIR = Path(__file__).resolve().parent.parent / "testdata"


def read_hex(name: str) -> bytes:
    """Read a commented hex dump from testdata/, ignoring '#' lines."""
    text = (TESTDATA_DIR / name).read_text()
    digits = "".join(line.split("#", 1)[0] for line in text.splitlines())
    return bytes.fromhex(digits)


@pytest.fixture
def load_hex():
    return read_hex


@pytest.fixture
def free_port():
    """Factory for unused loopback ports."""
    return allocate_port


@pytest.fixture
def ipn_eid():
    return EndpointId.parse("ipn:5.1")


@pytest.fixture
def mtcp_endpoint():
    return ClaEndpoint.from_host(0, "127.0.0.1", 4556)


@pytest.fixture
def sample_announcement(ipn_eid, mtcp_endpoint):
    return ReachabilityAnnouncement(
        mtcp_endpoint,
        (EidEntry(ipn_eid), EidEntry(EndpointId.parse("dtn://c/"), (EidAttribute(1, b"ipn"),))),
    )


@pytest.fixture
def node_config_factory(tmp_path):
    """Build a validated node configuration with loopback defaults."""

    def factory(asn=64512, bgp_id="10.0.0.1", name=None, clas=None, peers=None, **sections):
        data = {
            "node": {"asn": asn, "bgp_id": bgp_id, "name": name or f"as{asn}"},
            "cla": clas if clas is not None else [{"name": "mtcp0", "safi": 0, "host": "127.0.0.1", "port": 4556}],
            "bp": {"listen": "127.0.0.1:0"},
            "bgp": {"listen": "127.0.0.1:0"},
            "peer": peers or [],
            "timers": {"hold": 3, "connect_retry": 1.0},
        }
        for section, values in sections.items():
            if isinstance(values, dict) and isinstance(data.get(section), dict):
                data[section].update(values)
            else:
                data[section] = values
        return build_node_config(data)

    return factory
