"""
Clients for the BP agent protocol.
"""

import asyncio
import base64
import itertools
from typing import Dict, List, Optional, Sequence

from app.config import get_settings
from app.core.exceptions import AdapterError, AgentProtocolError
from app.core.logging import logger
from app.services.bp.protocol import (
    MAX_LINE_SIZE,
    AgentMessage,
    AgentOp,
    AgentRole,
    AttributeModel,
    FibEntryModel,
    ReceivedBundleModel,
    decode_message,
    encode_message,
)
from app.services.nlri.models import EidAttribute

settings = get_settings()


class AgentConnection:
    """
    Persistent agent protocol connection.

    Replies are matched to requests by ``id``; lines the agent pushes on its
    own (register/deregister relays) are queued for ``next_event``.
    """

    def __init__(self, host: str, port: int, role: AgentRole = AgentRole.CONTROL, timeout: float = 5.0, log=None):
        self.host = host
        self.port = port
        self.role = role
        self.timeout = timeout
        self.log = log or logger

        self._reader: Optional[asyncio.StreamReader] = None
        self._writer: Optional[asyncio.StreamWriter] = None
        self._pending: Dict[int, asyncio.Future] = {}
        self._events: asyncio.Queue = asyncio.Queue()
        self._ids = itertools.count(1)
        self._read_task: Optional[asyncio.Task] = None

    @property
    def closed(self) -> bool:
        return self._read_task is None or self._read_task.done()

    async def connect(self) -> AgentMessage:
        """
        Open the connection and introduce ourselves.

        Returns:
            The hello reply, carrying the agent's current registrations

        Raises:
            AdapterError: If the agent is unreachable
        """
        try:
            self._reader, self._writer = await asyncio.open_connection(self.host, self.port, limit=MAX_LINE_SIZE)
        except OSError as e:
            raise AdapterError("bp", f"cannot reach agent at {self.host}:{self.port}: {e}")
        self._read_task = asyncio.ensure_future(self._read_loop())
        return await self.request(AgentMessage(op=AgentOp.HELLO, role=self.role))

    async def _read_loop(self) -> None:
        try:
            while True:
                line = await self._reader.readline()
                if not line:
                    break
                try:
                    message = decode_message(line)
                except AgentProtocolError as e:
                    self.log.warning(f"Ignoring malformed line from agent: {e.detail}")
                    continue

                future = self._pending.pop(message.id, None) if message.is_reply else None
                if future is not None:
                    if not future.done():
                        future.set_result(message)
                else:
                    await self._events.put(message)
        except (ConnectionError, ValueError) as e:
            self.log.warning(f"Agent connection failed: {e}")
        finally:
            for future in self._pending.values():
                if not future.done():
                    future.set_exception(AdapterError("bp", "agent connection closed"))
            self._pending.clear()
            await self._events.put(None)

    async def request(self, message: AgentMessage) -> AgentMessage:
        """
        Send a request and wait for its reply.

        Raises:
            AgentProtocolError: If the agent answers with an error
            AdapterError: If the connection is lost or the reply times out
        """
        if self._writer is None or self.closed:
            raise AdapterError("bp", "not connected")

        request_id = next(self._ids)
        future = asyncio.get_running_loop().create_future()
        self._pending[request_id] = future
        try:
            self._writer.write(encode_message(message.copy(update={"id": request_id})))
            await self._writer.drain()
            reply = await asyncio.wait_for(future, timeout=self.timeout)
        except asyncio.TimeoutError:
            raise AdapterError("bp", f"no reply to {message.op.value} within {self.timeout}s")
        except ConnectionError as e:
            raise AdapterError("bp", str(e))
        finally:
            self._pending.pop(request_id, None)

        if reply.op == AgentOp.ERROR:
            raise AgentProtocolError(reply.reason or "unspecified error")
        return reply

    async def next_event(self) -> Optional[AgentMessage]:
        """Next pushed message, or None once the connection has closed."""
        return await self._events.get()

    async def close(self) -> None:
        if self._writer is not None:
            self._writer.close()
        if self._read_task is not None:
            self._read_task.cancel()
            await asyncio.gather(self._read_task, return_exceptions=True)


class AgentClient:
    """
    Client for one-shot control requests to a BP agent.
    Each call opens its own connection.
    """

    def __init__(self, host: str, port: int, timeout: Optional[float] = None):
        self.host = host
        self.port = port
        # bundle_send waits for a CLA probe, so allow for its timeout
        self.timeout = timeout if timeout is not None else settings.PROBE_TIMEOUT_SECONDS + 2.0

    async def _call(self, message: AgentMessage) -> AgentMessage:
        connection = AgentConnection(self.host, self.port, AgentRole.CONTROL, timeout=self.timeout)
        try:
            await connection.connect()
            return await connection.request(message)
        finally:
            await connection.close()

    async def register(self, eid: str, cla: str, attributes: Sequence[EidAttribute] = ()) -> None:
        """
        Register a local EID served by one of the node's CLAs.

        Args:
            eid: EID text, e.g. "ipn:5.1"
            cla: Name of the local CLA
            attributes: EID attributes to advertise

        Raises:
            AgentProtocolError: If the agent rejects the registration
        """
        await self._call(AgentMessage(
            op=AgentOp.REGISTER,
            eid=eid,
            cla=cla,
            attributes=[AttributeModel.from_attribute(a) for a in attributes],
        ))

    async def deregister(self, eid: str) -> None:
        await self._call(AgentMessage(op=AgentOp.DEREGISTER, eid=eid))

    async def fib_get(self) -> List[FibEntryModel]:
        reply = await self._call(AgentMessage(op=AgentOp.FIB_GET))
        return reply.entries

    async def bundle_send(self, eid: str, payload: bytes) -> Dict:
        """
        Ask the agent to forward a payload toward an EID via its FIB.

        Returns:
            The delivery report
        """
        reply = await self._call(AgentMessage(
            op=AgentOp.BUNDLE_SEND,
            eid=eid,
            payload_b64=base64.b64encode(payload).decode("ascii"),
        ))
        return reply.report or {}

    async def bundle_recv(self) -> List[ReceivedBundleModel]:
        reply = await self._call(AgentMessage(op=AgentOp.BUNDLE_RECV))
        return reply.bundles
