"""
One ERDS node: the BP agent simulator, the ERDS with its two adapters and,
optionally, the status API, all in the current event loop.
"""

import asyncio
from typing import Dict, List, Optional

import uvicorn

from app.config import ErdsConfig, get_settings, parse_endpoint
from app.core.logging import get_node_logger
from app.services.bgp.session import LocalIdentity
from app.services.bp.agent import BpAgentSim
from app.services.erds.bgp_adapter import BgpSpeakerAdapter
from app.services.erds.bp_adapter import BpAgentAdapter
from app.services.erds.erds_service import ErdsService, local_clas_by_name
from app.services.rib.rib_service import ReachabilityRib

settings = get_settings()


def local_identity(config: ErdsConfig) -> LocalIdentity:
    return LocalIdentity(
        asn=config.node.asn,
        bgp_id=config.node.bgp_id,
        hold_time=config.timers.hold,
        safis=tuple(sorted({c.safi for c in config.cla})),
    )


class ErdsNode:
    """
    Runtime of one node.

    Args:
        config: Validated node configuration
        serve_api: Start the status API when ``[node] api`` is set
    """

    def __init__(self, config: ErdsConfig, serve_api: bool = True):
        self.config = config
        self.name = config.node_name
        self.serve_api = serve_api
        self.log = get_node_logger(self.name, "node")

        self.agent = BpAgentSim(self.name, parse_endpoint(config.bp.listen), config.cla)
        self.erds: Optional[ErdsService] = None
        self._api_server: Optional[uvicorn.Server] = None
        self._api_task: Optional[asyncio.Task] = None
        self.started = False

    @property
    def rib(self) -> ReachabilityRib:
        return self.erds.rib

    @property
    def bgp(self) -> BgpSpeakerAdapter:
        return self.erds.bgp_adapter

    @property
    def agent_endpoint(self):
        host, _ = parse_endpoint(self.config.bp.listen)
        return host, self.agent.bound_port

    async def start(self) -> None:
        """Start agent, adapters and ERDS; returns once every listener is bound."""
        await self.agent.start()
        agent_host, agent_port = self.agent_endpoint

        bp_adapter = BpAgentAdapter(self.name, agent_host, agent_port, local_clas_by_name(self.config))
        bgp_adapter = BgpSpeakerAdapter(
            self.name,
            local_identity(self.config),
            self.config.peer,
            parse_endpoint(self.config.bgp.listen, default_port=settings.DEFAULT_BGP_PORT),
            connect_retry=self.config.timers.connect_retry,
        )
        self.erds = ErdsService(self.config, bp_adapter, bgp_adapter)
        await self.erds.start()

        if self.serve_api and self.config.node.api:
            await self._start_api()
        self.started = True

    async def _start_api(self) -> None:
        from app.main import create_app

        host, port = parse_endpoint(self.config.node.api)
        server_config = uvicorn.Config(create_app(self), host=host, port=port, log_level="warning", lifespan="off")
        self._api_server = uvicorn.Server(server_config)
        self._api_task = asyncio.ensure_future(self._api_server.serve())
        self.log.info(f"Status API on http://{host}:{port}")

    async def stop(self) -> None:
        if self._api_server is not None:
            self._api_server.should_exit = True
            await asyncio.gather(self._api_task, return_exceptions=True)
            self._api_server = None
        if self.erds is not None:
            await self.erds.stop()
        await self.agent.stop()
        self.started = False
        self.log.info("Node stopped")

    async def run_forever(self) -> None:
        await self.start()
        try:
            await asyncio.Event().wait()
        finally:
            await self.stop()

    def rib_dump(self) -> str:
        return self.rib.dump()

    def fib_dump(self) -> str:
        return self.agent.fib.dump()

    def peer_status(self) -> List[Dict]:
        return self.bgp.speaker.peer_status()

    @property
    def updates_sent(self) -> int:
        return self.bgp.speaker.total_updates_sent
