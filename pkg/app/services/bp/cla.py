"""
Minimal stream convergence layer: a listener that accepts length-prefixed
payloads and a probe that sends one.

Wire format: 4-octet big-endian length followed by the payload. The listener
acknowledges each payload by echoing its length prefix.
"""

import asyncio
import struct
import time
from dataclasses import dataclass
from typing import Callable, List, Optional

from app.config import get_settings
from app.core.exceptions import ProbeConnectionRefused, ProbeTimeout, UnsupportedSafi
from app.core.logging import logger
from app.services.nlri.models import ClaEndpoint, ClaSafi

settings = get_settings()

LENGTH_PREFIX = struct.Struct("!I")

# SAFIs whose next hop this simulator can reach with the length-prefixed framing
PROBE_SAFIS = frozenset({int(ClaSafi.MTCP), int(ClaSafi.TCPCL_V3)})


@dataclass(frozen=True)
class DeliveryReport:
    target: str
    success: bool
    size: int
    rtt: float


class ClaListener:
    """
    Stream CLA listener that hands every received payload to a callback.

    Args:
        host: Address to bind
        port: Port to bind, 0 for an ephemeral port
        on_payload: Called with (payload, remote address text)
        max_payload: Largest accepted payload; a larger length prefix drops the connection
    """

    def __init__(
        self,
        host: str,
        port: int,
        on_payload: Callable[[bytes, str], None],
        log=None,
        max_payload: Optional[int] = None,
    ):
        self.host = host
        self.port = port
        self.on_payload = on_payload
        self.max_payload = settings.MAX_BUNDLE_SIZE if max_payload is None else max_payload
        self.log = log or logger
        self._server: Optional[asyncio.AbstractServer] = None
        self._tasks: List[asyncio.Task] = []

    @property
    def bound_port(self) -> Optional[int]:
        if self._server is None or not self._server.sockets:
            return None
        return self._server.sockets[0].getsockname()[1]

    async def start(self) -> None:
        self._server = await asyncio.start_server(self._accept, self.host, self.port)
        self.log.info(f"CLA listener on {self.host}:{self.bound_port}")

    async def stop(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
            self._server = None
        for task in list(self._tasks):
            task.cancel()
        await asyncio.gather(*self._tasks, return_exceptions=True)

    def _accept(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        task = asyncio.ensure_future(self._serve(reader, writer))
        self._tasks.append(task)
        task.add_done_callback(self._tasks.remove)

    async def _serve(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        peer = writer.get_extra_info("peername")
        remote = f"{peer[0]}:{peer[1]}" if peer else "unknown"
        try:
            while True:
                header = await reader.readexactly(LENGTH_PREFIX.size)
                (length,) = LENGTH_PREFIX.unpack(header)
                if length > self.max_payload:
                    self.log.warning(f"Dropping CLA connection from {remote}: payload of {length} octets exceeds {self.max_payload}")
                    break
                payload = await reader.readexactly(length)
                self.on_payload(payload, remote)
                writer.write(header)
                await writer.drain()
        except (asyncio.IncompleteReadError, ConnectionError):
            pass
        finally:
            writer.close()


async def cla_probe(target: ClaEndpoint, payload: bytes, timeout: Optional[float] = None) -> DeliveryReport:
    """
    Deliver one payload to a CLA endpoint and wait for its acknowledgement.

    Args:
        target: Next-hop CLA endpoint, normally taken from the FIB
        payload: Opaque bundle payload
        timeout: Seconds to wait for connect plus acknowledgement

    Returns:
        Delivery report with the round-trip time

    Raises:
        UnsupportedSafi: If the target's SAFI is not a stream CLA this probe speaks
        ProbeConnectionRefused: If nothing listens on the target
        ProbeTimeout: If the exchange does not complete in time
    """
    if target.safi not in PROBE_SAFIS:
        raise UnsupportedSafi(target.safi)

    timeout = settings.PROBE_TIMEOUT_SECONDS if timeout is None else timeout
    started = time.monotonic()

    async def exchange() -> bytes:
        reader, writer = await asyncio.open_connection(target.host, target.port)
        try:
            header = LENGTH_PREFIX.pack(len(payload))
            writer.write(header + payload)
            await writer.drain()
            return await reader.readexactly(LENGTH_PREFIX.size)
        finally:
            writer.close()

    try:
        ack = await asyncio.wait_for(exchange(), timeout=timeout)
    except asyncio.TimeoutError:
        logger.error(f"CLA probe to {target} timed out after {timeout}s")
        raise ProbeTimeout(str(target), timeout)
    except (OSError, asyncio.IncompleteReadError) as e:
        logger.error(f"CLA probe to {target} failed: {e}")
        raise ProbeConnectionRefused(str(target))

    (acked,) = LENGTH_PREFIX.unpack(ack)
    return DeliveryReport(
        target=str(target),
        success=acked == len(payload),
        size=len(payload),
        rtt=time.monotonic() - started,
    )
