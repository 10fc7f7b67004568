"""
Builds and runs the nodes of a scenario on loopback.
"""

import asyncio
import copy
import socket
from typing import Any, Dict, Optional

from app.config import ErdsConfig, build_node_config, parse_endpoint
from app.core.exceptions import ConfigError, ScenarioSetupError
from app.core.logging import logger
from app.services.harness.scenario import ScenarioFile
from app.services.nlri.models import ClaEndpoint
from app.services.node.node_service import ErdsNode

LOOPBACK = "127.0.0.1"


def free_port(host: str = LOOPBACK) -> int:
    """Ask the OS for a currently unused TCP port."""
    family = socket.AF_INET6 if ":" in host else socket.AF_INET
    with socket.socket(family, socket.SOCK_STREAM) as sock:
        sock.bind((host, 0))
        return sock.getsockname()[1]


def _resolve_listen(value: Optional[str]) -> str:
    host, port = parse_endpoint(value or f"{LOOPBACK}:0", default_port=0)
    if port == 0:
        port = free_port(host)
    return f"{host}:{port}"


def build_node_configs(scenario: ScenarioFile) -> Dict[str, ErdsConfig]:
    """
    Turn the scenario's node tables into validated node configurations.

    Ports given as 0 are replaced with free ports, ``[[peer]]`` entries of the
    form ``{ node = "B" }`` are expanded to B's BGP endpoint and ASN, and
    nodes without a ``[timers]`` table get the scenario's hold time and
    connect retry.

    Args:
        scenario: Parsed scenario

    Returns:
        Mapping of node name to configuration, in scenario order

    Raises:
        ConfigError: If a node table or a peer reference is invalid
    """
    raw: Dict[str, Dict[str, Any]] = {}
    for name, table in scenario.nodes.items():
        data = copy.deepcopy(table)
        node = data.setdefault("node", {})
        node.setdefault("name", name)
        data.setdefault("bp", {})
        data["bp"]["listen"] = _resolve_listen(data["bp"].get("listen"))
        data.setdefault("bgp", {})
        data["bgp"]["listen"] = _resolve_listen(data["bgp"].get("listen"))
        for cla in data.get("cla", []):
            cla.setdefault("host", LOOPBACK)
            if not cla.get("port"):
                cla["port"] = free_port(cla["host"])
        data.setdefault("timers", {"hold": scenario.scenario.hold, "connect_retry": scenario.scenario.connect_retry})
        raw[name] = data

    bound = [
        parse_endpoint(data[section]["listen"])[1] for data in raw.values() for section in ("bp", "bgp")
    ] + [cla["port"] for data in raw.values() for cla in data.get("cla", [])]
    duplicates = sorted({port for port in bound if bound.count(port) > 1})
    if duplicates:
        raise ScenarioSetupError(f"ports used more than once: {duplicates}")

    for name, data in raw.items():
        for peer in data.get("peer", []):
            ref = peer.pop("node", None)
            if ref is None:
                continue
            if ref not in raw:
                raise ConfigError(f"nodes.{name}", f"peer references unknown node '{ref}'")
            host, port = parse_endpoint(raw[ref]["bgp"]["listen"])
            peer.setdefault("host", host)
            peer.setdefault("port", port)
            peer.setdefault("remote_asn", raw[ref]["node"].get("asn"))
            peer.setdefault("name", ref)

    return {name: build_node_config(data, source=f"nodes.{name}") for name, data in raw.items()}


class Topology:
    """
    The running nodes of one scenario.

    Args:
        scenario: Parsed scenario
    """

    def __init__(self, scenario: ScenarioFile):
        self.scenario = scenario
        self.configs = build_node_configs(scenario)
        self.nodes: Dict[str, ErdsNode] = {
            name: ErdsNode(config, serve_api=False) for name, config in self.configs.items()
        }

    async def start(self) -> None:
        """
        Start every node.

        Raises:
            ScenarioSetupError: If a node cannot bind its ports
        """
        for name, node in self.nodes.items():
            try:
                await node.start()
            except OSError as e:
                logger.error(f"Node {name} failed to start: {e}")
                await self.stop()
                raise ScenarioSetupError(f"node {name} could not bind its ports: {e}")

    async def stop(self) -> None:
        await asyncio.gather(*(node.stop() for node in self.nodes.values()), return_exceptions=True)

    def node(self, name: str) -> ErdsNode:
        return self.nodes[name]

    def cla_endpoint(self, ref: str) -> ClaEndpoint:
        """
        Resolve ``"<node>.<cla>"`` or ``"<node>"`` (first CLA) to an endpoint.

        Raises:
            ConfigError: If the node or CLA does not exist
        """
        name, _, cla_name = ref.partition(".")
        config = self.configs.get(name)
        if config is None or not config.cla:
            raise ConfigError("scenario", f"'{ref}' does not name a node with CLAs")
        clas = config.cla_by_name()
        cla = clas.get(cla_name) if cla_name else config.cla[0]
        if cla is None:
            raise ConfigError("scenario", f"node {name} has no CLA '{cla_name}'")
        return ClaEndpoint.from_host(cla.safi, cla.host, cla.port)

    def resolve_next_hop(self, value: str) -> str:
        """Endpoint text for a node reference, or the value itself when it is a literal endpoint."""
        name = value.partition(".")[0]
        if name in self.configs:
            return str(self.cla_endpoint(value))
        return value

    def endpoint_names(self) -> Dict[str, str]:
        """Map of CLA endpoint text to ``<node>.<cla>``, used to make dumps port independent."""
        return {
            str(ClaEndpoint.from_host(cla.safi, cla.host, cla.port)): f"{name}.{cla.name}"
            for name, config in self.configs.items()
            for cla in config.cla
        }

    @property
    def total_updates_sent(self) -> int:
        return sum(node.updates_sent for node in self.nodes.values() if node.started)
