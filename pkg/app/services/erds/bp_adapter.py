"""
BP-side adapter speaking the agent protocol to the BP agent simulator.
"""

import asyncio
from typing import AsyncIterator, List, Mapping, Optional, Tuple, Union

from tenacity import AsyncRetrying, retry_if_exception_type, wait_fixed

from app.config import get_settings
from app.core.exceptions import AdapterError, AgentProtocolError, InvariantViolation, UnknownCla
from app.core.logging import get_node_logger
from app.integrations.agent_client import AgentConnection
from app.services.bp.protocol import AgentMessage, AgentOp, AgentRole, FibEntryModel, RegistrationModel
from app.services.erds.adapters import Adapter
from app.services.erds.events import Announce, ReachabilityEvent, Resync, Withdraw
from app.services.nlri.models import (
    ClaEndpoint,
    ClaSafi,
    EidEntry,
    EndpointId,
    ReachabilityAnnouncement,
    ReachabilityWithdrawal,
)

settings = get_settings()


def translate_bp_event(event: Union[AgentMessage, RegistrationModel], local_clas: Mapping[str, ClaEndpoint]) -> Union[Announce, Withdraw]:
    """
    Turn an agent registration change into a Local announcement or withdrawal.

    Args:
        event: ``register``/``deregister`` message, or a registration listed in a hello reply
        local_clas: Local CLA endpoints by name

    Returns:
        Announce with the named CLA as next hop, or Withdraw

    Raises:
        UnknownCla: If a registration names a CLA that is not configured
        InvariantViolation: If the EID is malformed
        AgentProtocolError: If the message is not a registration change
    """
    op = event.op if isinstance(event, AgentMessage) else AgentOp.REGISTER
    if not event.eid:
        raise AgentProtocolError(f"{op.value} without eid")
    eid = EndpointId.parse(event.eid)

    if op == AgentOp.REGISTER:
        next_hop = local_clas.get(event.cla or "")
        if next_hop is None:
            raise UnknownCla(event.cla or "")
        attributes = tuple(a.to_attribute() for a in event.attributes)
        return Announce(ReachabilityAnnouncement(next_hop, (EidEntry(eid, attributes),)))

    if op == AgentOp.DEREGISTER:
        cla = local_clas.get(event.cla or "")
        safi = cla.safi if cla is not None else int(ClaSafi.MTCP)
        return Withdraw(ReachabilityWithdrawal(safi, (EidEntry(eid),)))

    raise AgentProtocolError(f"unexpected op '{op.value}' from agent")


class BpAgentAdapter(Adapter):
    """
    Adapter for the simulated BP agent.

    Each (re)connection starts with a ``Resync`` carrying the agent's current
    registrations. Outbound announcements become ``fib_set``, withdrawals
    ``fib_del``; while disconnected they are dropped, since the ERDS re-pushes
    the whole FIB after the next ``Resync``.
    """

    name = "bp"

    def __init__(self, node_name: str, host: str, port: int, local_clas: Mapping[str, ClaEndpoint], retry: Optional[float] = None):
        self.host = host
        self.port = port
        self.local_clas = dict(local_clas)
        self.retry = retry if retry is not None else settings.ADAPTER_RETRY_SECONDS
        self.log = get_node_logger(node_name, "erds.bp")

        self.connection: Optional[AgentConnection] = None
        self._outbound: asyncio.Queue = asyncio.Queue()
        self._sender: Optional[asyncio.Task] = None
        self.connects = 0

    @property
    def connected(self) -> bool:
        return self.connection is not None and not self.connection.closed

    async def start(self) -> None:
        self._sender = asyncio.ensure_future(self._send_loop())

    async def stop(self) -> None:
        if self._sender is not None:
            self._sender.cancel()
            await asyncio.gather(self._sender, return_exceptions=True)
        if self.connection is not None:
            await self.connection.close()
            self.connection = None

    async def _connect(self) -> AgentMessage:
        async for attempt in AsyncRetrying(
            wait=wait_fixed(self.retry),
            retry=retry_if_exception_type(AdapterError),
            reraise=True,
        ):
            with attempt:
                connection = AgentConnection(self.host, self.port, AgentRole.ERDS, log=self.log)
                try:
                    hello = await connection.connect()
                except AdapterError as e:
                    await connection.close()
                    self.log.debug(f"BP agent not reachable yet: {e.detail}")
                    raise
                self.connection = connection
                return hello

    def _translate_all(self, registrations: List[RegistrationModel]) -> List[Announce]:
        announcements = []
        for registration in registrations:
            try:
                announcements.append(translate_bp_event(registration, self.local_clas))
            except (UnknownCla, InvariantViolation, AgentProtocolError) as e:
                self.log.error(f"Skipping registration {registration.eid}: {e}")
        return announcements

    async def _installed_eids(self) -> Tuple[EndpointId, ...]:
        try:
            reply = await self.connection.request(AgentMessage(op=AgentOp.FIB_GET))
        except (AdapterError, AgentProtocolError) as e:
            self.log.warning(f"Could not read the agent FIB: {e}")
            return ()
        installed = []
        for entry in reply.entries:
            try:
                installed.append(EndpointId.parse(entry.eid))
            except InvariantViolation:
                continue
        return tuple(installed)

    async def listen(self) -> AsyncIterator[ReachabilityEvent]:
        while True:
            hello = await self._connect()
            self.connects += 1
            self.log.info(f"Connected to BP agent at {self.host}:{self.port} ({len(hello.registrations)} registrations)")
            installed = await self._installed_eids()
            yield Resync(tuple(self._translate_all(hello.registrations)), installed)

            while True:
                message = await self.connection.next_event()
                if message is None:
                    break
                try:
                    yield translate_bp_event(message, self.local_clas)
                except (UnknownCla, InvariantViolation, AgentProtocolError) as e:
                    self.log.error(f"Ignoring agent event {message.op.value} {message.eid}: {e}")

            self.log.warning("Lost connection to BP agent, reconnecting")
            await self.connection.close()
            self.connection = None
            await asyncio.sleep(self.retry)

    async def send(self, event: ReachabilityEvent) -> None:
        self._outbound.put_nowait(event)

    async def _send_loop(self) -> None:
        while True:
            event = await self._outbound.get()
            if not self.connected:
                continue
            try:
                await self.connection.request(self._to_request(event))
            except (AdapterError, AgentProtocolError) as e:
                self.log.error(f"FIB update failed: {e}")

    def _to_request(self, event: ReachabilityEvent) -> AgentMessage:
        if isinstance(event, Announce):
            next_hop = event.record.next_hop
            return AgentMessage(
                op=AgentOp.FIB_SET,
                entries=[FibEntryModel.from_endpoint(eid.uri_text, next_hop) for eid in event.record.eids],
            )
        if isinstance(event, Withdraw):
            return AgentMessage(op=AgentOp.FIB_DEL, eids=[eid.uri_text for eid in event.record.eids])
        raise AdapterError(self.name, f"cannot send {type(event).__name__}")
