"""
Simulated Bundle Protocol agent.

Holds the node's EID registrations and forwarding table, serves the agent
protocol to one ERDS connection and any number of control connections, and
runs the node's stream CLA listeners so bundles can actually be delivered.
"""

import asyncio
import base64
import binascii
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from app.config import ClaSection
from app.core.exceptions import AgentProtocolError, ClaProbeError, InvariantViolation, UnsupportedSafi
from app.core.logging import get_node_logger
from app.services.bp.cla import PROBE_SAFIS, ClaListener, cla_probe
from app.services.bp.protocol import (
    MAX_LINE_SIZE,
    AgentMessage,
    AgentOp,
    AgentRole,
    AttributeModel,
    FibEntryModel,
    ReceivedBundleModel,
    RegistrationModel,
    decode_message,
    encode_message,
    error,
    ok,
)
from app.services.nlri.models import ClaEndpoint, EidAttribute, EndpointId


@dataclass(frozen=True)
class Registration:
    eid: EndpointId
    cla: str
    attributes: Tuple[EidAttribute, ...] = ()

    def to_model(self) -> RegistrationModel:
        return RegistrationModel(
            eid=self.eid.uri_text,
            cla=self.cla,
            attributes=[AttributeModel.from_attribute(a) for a in self.attributes],
        )


@dataclass(frozen=True)
class ReceivedBundle:
    seq: int
    payload: bytes
    peer: str

    def to_model(self) -> ReceivedBundleModel:
        return ReceivedBundleModel(
            seq=self.seq,
            size=len(self.payload),
            payload_b64=base64.b64encode(self.payload).decode("ascii"),
            peer=self.peer,
        )


class FibTable:
    """Forwarding table: EID to next-hop CLA endpoint, last writer wins."""

    def __init__(self):
        self._entries: Dict[EndpointId, ClaEndpoint] = {}

    def set(self, eid: EndpointId, endpoint: ClaEndpoint) -> None:
        self._entries[eid] = endpoint

    def delete(self, eid: EndpointId) -> bool:
        return self._entries.pop(eid, None) is not None

    def get(self, eid: EndpointId) -> Optional[ClaEndpoint]:
        return self._entries.get(eid)

    def items(self) -> List[Tuple[EndpointId, ClaEndpoint]]:
        return sorted(self._entries.items(), key=lambda item: item[0].uri_text)

    def as_dict(self) -> Dict[str, str]:
        return {eid.uri_text: str(endpoint) for eid, endpoint in self.items()}

    def dump(self) -> str:
        """One line per EID: ``eid | next_hop | safi``, sorted by EID."""
        return "\n".join(f"{eid} | {endpoint} | {endpoint.safi}" for eid, endpoint in self.items())

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, eid: EndpointId) -> bool:
        return eid in self._entries


class BpAgentSim:
    """
    Agent protocol server of one simulated BP node.

    Args:
        node_name: Node name used in logs
        listen: (host, port) of the agent protocol socket
        clas: The node's CLAs; registrations must name one of them, and
            stream CLAs get a listener
    """

    def __init__(self, node_name: str, listen: Tuple[str, int], clas: Sequence[ClaSection] = ()):
        self.node_name = node_name
        self.listen = listen
        self.clas = {c.name: c for c in clas}
        self.log = get_node_logger(node_name, "bp")

        self.registrations: Dict[EndpointId, Registration] = {}
        self.fib = FibTable()
        self.received: List[ReceivedBundle] = []

        self._server: Optional[asyncio.AbstractServer] = None
        self._erds_writer: Optional[asyncio.StreamWriter] = None
        self._client_tasks: List[asyncio.Task] = []
        self.cla_listeners: List[ClaListener] = [
            ClaListener(c.host, c.port, self._record_bundle, log=self.log)
            for c in clas
            if c.safi in PROBE_SAFIS
        ]
        self.bound_port: Optional[int] = None

    @property
    def erds_connected(self) -> bool:
        return self._erds_writer is not None

    async def start(self) -> None:
        """Start the CLA listeners and the agent protocol server."""
        for listener in self.cla_listeners:
            await listener.start()
        host, port = self.listen
        self._server = await asyncio.start_server(self._accept, host, port, limit=MAX_LINE_SIZE)
        self.bound_port = self._server.sockets[0].getsockname()[1]
        self.log.info(f"BP agent listening on {host}:{self.bound_port}")

    async def stop(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
            self._server = None
        for task in list(self._client_tasks):
            task.cancel()
        await asyncio.gather(*self._client_tasks, return_exceptions=True)
        for listener in self.cla_listeners:
            await listener.stop()

    def _record_bundle(self, payload: bytes, peer: str) -> None:
        bundle = ReceivedBundle(seq=len(self.received) + 1, payload=payload, peer=peer)
        self.received.append(bundle)
        self.log.info(f"bundle_recv #{bundle.seq}: {len(payload)} bytes from {peer}")

    def _accept(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        task = asyncio.ensure_future(self._serve(reader, writer))
        self._client_tasks.append(task)
        task.add_done_callback(self._client_tasks.remove)

    async def _send(self, writer: asyncio.StreamWriter, message: AgentMessage) -> None:
        writer.write(encode_message(message))
        await writer.drain()

    async def _serve(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        try:
            while True:
                try:
                    line = await reader.readline()
                except ValueError:
                    await self._send(writer, error(f"line exceeds {MAX_LINE_SIZE} octets"))
                    break
                if not line:
                    break
                if not line.strip():
                    continue

                try:
                    request = decode_message(line)
                except AgentProtocolError as e:
                    self.log.warning(f"Malformed agent request: {e.detail}")
                    await self._send(writer, error(e.detail))
                    continue

                reply = await self.handle(request, writer)
                await self._send(writer, reply)
        except ConnectionError:
            pass
        finally:
            if self._erds_writer is writer:
                self.log.info("ERDS disconnected")
                self._erds_writer = None
            writer.close()

    async def handle(self, request: AgentMessage, writer: Optional[asyncio.StreamWriter] = None) -> AgentMessage:
        """
        Execute one request and build its reply.

        Args:
            request: Parsed request
            writer: Connection the request came from, needed for ``hello``

        Returns:
            An ok or error reply echoing the request id
        """
        handlers = {
            AgentOp.HELLO: self._hello,
            AgentOp.REGISTER: self._register,
            AgentOp.DEREGISTER: self._deregister,
            AgentOp.FIB_SET: self._fib_set,
            AgentOp.FIB_DEL: self._fib_del,
            AgentOp.FIB_GET: self._fib_get,
            AgentOp.BUNDLE_SEND: self._bundle_send,
            AgentOp.BUNDLE_RECV: self._bundle_recv,
        }
        handler = handlers.get(request.op)
        if handler is None:
            return error(f"unexpected op '{request.op.value}'", request)
        try:
            return await handler(request, writer)
        except (AgentProtocolError, InvariantViolation) as e:
            return error(e.detail, request)

    async def _hello(self, request: AgentMessage, writer) -> AgentMessage:
        if request.role == AgentRole.ERDS:
            if self._erds_writer is not None and self._erds_writer is not writer:
                self.log.info("Replacing previous ERDS connection")
            self._erds_writer = writer
            self.log.info(f"ERDS attached, {len(self.registrations)} registrations")
        return ok(request, registrations=[r.to_model() for r in self.registrations.values()])

    def _parse_eid(self, text: Optional[str]) -> EndpointId:
        if not text:
            raise AgentProtocolError("missing eid")
        return EndpointId.parse(text)

    async def _relay(self, message: AgentMessage) -> None:
        if self._erds_writer is None:
            return
        try:
            await self._send(self._erds_writer, message)
        except ConnectionError:
            self._erds_writer = None

    async def _register(self, request: AgentMessage, writer) -> AgentMessage:
        eid = self._parse_eid(request.eid)
        if not request.cla:
            raise AgentProtocolError("missing cla")
        if self.clas and request.cla not in self.clas:
            raise AgentProtocolError(f"unknown CLA '{request.cla}'")
        registration = Registration(eid, request.cla, tuple(a.to_attribute() for a in request.attributes))

        if self.registrations.get(eid) != registration:
            self.registrations[eid] = registration
            self.log.info(f"register {eid} via {request.cla}")
            await self._relay(AgentMessage(op=AgentOp.REGISTER, eid=eid.uri_text, cla=request.cla, attributes=request.attributes))
        return ok(request)

    async def _deregister(self, request: AgentMessage, writer) -> AgentMessage:
        eid = self._parse_eid(request.eid)
        registration = self.registrations.pop(eid, None)
        if registration is not None:
            self.log.info(f"deregister {eid}")
            await self._relay(AgentMessage(op=AgentOp.DEREGISTER, eid=eid.uri_text, cla=registration.cla))
        return ok(request)

    async def _fib_set(self, request: AgentMessage, writer) -> AgentMessage:
        # all entries must convert before any is applied
        routes = [(self._parse_eid(entry.eid), entry.to_endpoint()) for entry in request.entries]
        for eid, endpoint in routes:
            self.fib.set(eid, endpoint)
        self.log.debug(f"fib_set {len(request.entries)} entries, table size {len(self.fib)}")
        return ok(request)

    async def _fib_del(self, request: AgentMessage, writer) -> AgentMessage:
        eids = list(request.eids) + ([request.eid] if request.eid else [])
        for eid in [self._parse_eid(text) for text in eids]:
            self.fib.delete(eid)
        self.log.debug(f"fib_del {len(eids)} entries, table size {len(self.fib)}")
        return ok(request)

    async def _fib_get(self, request: AgentMessage, writer) -> AgentMessage:
        return ok(request, entries=[FibEntryModel.from_endpoint(eid.uri_text, ep) for eid, ep in self.fib.items()])

    async def _bundle_send(self, request: AgentMessage, writer) -> AgentMessage:
        eid = self._parse_eid(request.eid)
        try:
            payload = base64.b64decode(request.payload_b64 or "", validate=True)
        except binascii.Error as e:
            raise AgentProtocolError(f"payload_b64 is not base64: {e}")

        endpoint = self.fib.get(eid)
        if endpoint is None:
            return error(f"no route to {eid}", request)
        try:
            report = await cla_probe(endpoint, payload)
        except (ClaProbeError, UnsupportedSafi) as e:
            return error(str(e), request)
        self.log.info(f"bundle_send {eid} via {endpoint}: {len(payload)} bytes in {report.rtt * 1000:.1f} ms")
        return ok(
            request,
            report={"eid": eid.uri_text, "target": report.target, "success": report.success, "size": report.size, "rtt": report.rtt},
        )

    async def _bundle_recv(self, request: AgentMessage, writer) -> AgentMessage:
        return ok(request, bundles=[b.to_model() for b in self.received])

    def fib_snapshot(self) -> Dict[str, str]:
        return self.fib.as_dict()

    def registered_eids(self) -> Iterable[EndpointId]:
        return list(self.registrations)
