"""
Embedded BGP speaker: one runner per configured peer, an inbound listener,
collision resolution and fixed-backoff reconnects.
"""

import asyncio
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from tenacity import AsyncRetrying, retry_if_exception_type, wait_fixed

from app.config import PeerSection, get_settings
from app.core.exceptions import BgpError
from app.core.logging import get_node_logger
from app.services.bgp.messages import (
    ADMINISTRATIVE_SHUTDOWN,
    BAD_PEER_AS,
    CONNECTION_COLLISION_RESOLUTION,
    NotificationCode,
    NotificationMessage,
    OpenMessage,
    UpdateMessage,
    frame_message,
    parse_message,
    read_frame,
)
from app.services.bgp.session import (
    CloseRequest,
    FrameTap,
    LocalIdentity,
    OutboundBatch,
    PeerSession,
    SessionHandler,
    SessionState,
    run_session,
)

settings = get_settings()


class SpeakerListener:
    """Receives session-level events from the speaker."""

    async def on_peer_up(self, peer_id: str, session: PeerSession) -> None:
        pass

    async def on_peer_down(self, peer_id: str, reason: str) -> None:
        pass

    async def on_update(self, peer_id: str, session: PeerSession, update: UpdateMessage) -> None:
        pass


@dataclass
class _Connection:
    session: PeerSession
    queue: asyncio.Queue
    task: Optional[asyncio.Task] = None
    inbound: bool = False


class _ConnectionHandler(SessionHandler):
    def __init__(self, runner: "PeerRunner", connection: _Connection):
        self.runner = runner
        self.connection = connection

    async def on_established(self, session: PeerSession) -> None:
        if self.runner.current is self.connection:
            await self.runner.speaker.listener.on_peer_up(self.runner.peer_id, session)

    async def on_update(self, session: PeerSession, update: UpdateMessage) -> None:
        if self.runner.current is self.connection:
            await self.runner.speaker.listener.on_update(self.runner.peer_id, session, update)

    async def on_closed(self, session: PeerSession, reason: str, was_established: bool) -> None:
        self.runner.sessions_closed += 1
        self.runner.closed_updates_sent += session.updates_sent
        self.runner.closed_updates_received += session.updates_received
        self.runner.last_error = reason
        if self.runner.current is self.connection:
            self.runner.current = None
            if was_established:
                await self.runner.speaker.listener.on_peer_down(self.runner.peer_id, reason)


class PeerRunner:
    """Owns the lifecycle of the session toward one configured peer."""

    def __init__(self, speaker: "BgpSpeaker", config: PeerSection):
        self.speaker = speaker
        self.config = config
        self.peer_id = config.peer_id
        self.enabled = True
        self.current: Optional[_Connection] = None
        self.connect_task: Optional[asyncio.Task] = None

        self.sessions_closed = 0
        self.closed_updates_sent = 0
        self.closed_updates_received = 0
        self.last_error: Optional[str] = None

    @property
    def updates_sent(self) -> int:
        live = self.current.session.updates_sent if self.current else 0
        return self.closed_updates_sent + live

    @property
    def updates_received(self) -> int:
        live = self.current.session.updates_received if self.current else 0
        return self.closed_updates_received + live

    @property
    def state(self) -> SessionState:
        return self.current.session.state if self.current else SessionState.IDLE

    def new_session(self) -> PeerSession:
        return PeerSession(
            self.peer_id,
            self.speaker.local,
            expected_asn=self.config.remote_asn,
            advertise_dtn=self.config.advertise_dtn,
            log=self.speaker.log,
        )

    def attach(self, session: PeerSession, reader, writer, first_message=None, inbound: bool = False) -> _Connection:
        """Make a transport the current connection of this peer and start driving it."""
        connection = _Connection(session=session, queue=asyncio.Queue(), inbound=inbound)
        self.current = connection
        session.start()
        connection.task = asyncio.ensure_future(
            run_session(
                session,
                reader,
                writer,
                connection.queue,
                _ConnectionHandler(self, connection),
                first_message=first_message,
                frame_tap=self.speaker.tap_frame,
            )
        )
        return connection

    def start(self) -> None:
        if self.config.mode == "active" and self.connect_task is None:
            self.connect_task = asyncio.ensure_future(self._connect_loop())

    async def _connect(self):
        async for attempt in AsyncRetrying(
            wait=wait_fixed(self.speaker.connect_retry),
            retry=retry_if_exception_type(OSError),
            reraise=True,
        ):
            with attempt:
                if attempt.retry_state.attempt_number > 1:
                    self.speaker.log.debug(f"Retrying connection to {self.peer_id}")
                return await asyncio.open_connection(self.config.host, self.config.port)

    async def _connect_loop(self) -> None:
        while self.enabled:
            if self.current is not None:
                await asyncio.wait([self.current.task])
                await asyncio.sleep(self.speaker.connect_retry)
                continue

            reader, writer = await self._connect()
            if self.current is not None or not self.enabled:
                # an inbound connection won the race
                writer.close()
                continue
            self.speaker.log.info(f"Connected to {self.peer_id} at {self.config.host}:{self.config.port}")
            self.attach(self.new_session(), reader, writer)

    def send(self, batch: OutboundBatch) -> bool:
        if self.current is None or not self.current.session.can_send_dtn:
            return False
        self.current.queue.put_nowait(batch)
        return True

    async def kill(self, mode: str) -> None:
        self.enabled = False
        if self.connect_task is not None:
            self.connect_task.cancel()
            await asyncio.gather(self.connect_task, return_exceptions=True)
            self.connect_task = None
        if self.current is not None:
            self.current.queue.put_nowait(CloseRequest("peer killed", silent=(mode == "silent")))

    def enable(self) -> None:
        self.enabled = True
        self.start()

    async def stop(self) -> None:
        self.enabled = False
        tasks = [t for t in (self.connect_task, self.current.task if self.current else None) if t is not None]
        for task in tasks:
            task.cancel()
        await asyncio.gather(*tasks, return_exceptions=True)
        self.connect_task = None

    def status(self) -> Dict:
        session = self.current.session if self.current else None
        params = session.params if session else None
        return {
            "peer_id": self.peer_id,
            "host": self.config.host,
            "port": self.config.port,
            "remote_asn": self.config.remote_asn,
            "mode": self.config.mode,
            "enabled": self.enabled,
            "state": self.state.value,
            "hold_time": params.hold_time if params else None,
            "dtn_capable": bool(params and params.dtn_capable),
            "safis": sorted(params.safis) if params else [],
            "updates_sent": self.updates_sent,
            "updates_received": self.updates_received,
            "last_error": self.last_error,
        }


class BgpSpeaker:
    """
    BGP speaker for one node.

    Sessions are matched to configured peers by the ASN in the peer's OPEN,
    so several peers may share one host.
    """

    def __init__(
        self,
        node_name: str,
        local: LocalIdentity,
        peers: Sequence[PeerSection],
        listen: Tuple[str, int],
        listener: Optional[SpeakerListener] = None,
        connect_retry: Optional[float] = None,
    ):
        self.node_name = node_name
        self.local = local
        self.listen = listen
        self.listener = listener or SpeakerListener()
        self.connect_retry = connect_retry if connect_retry is not None else settings.CONNECT_RETRY_SECONDS
        self.log = get_node_logger(node_name, "bgp")

        self.runners: Dict[str, PeerRunner] = {p.peer_id: PeerRunner(self, p) for p in peers}
        self._by_asn: Dict[int, PeerRunner] = {r.config.remote_asn: r for r in self.runners.values()}
        self._frame_taps: List[FrameTap] = []
        self._server: Optional[asyncio.AbstractServer] = None
        self._inbound_tasks: List[asyncio.Task] = []
        self.bound_port: Optional[int] = None

    def add_frame_tap(self, tap: Callable[[str, bytes], None]) -> None:
        """Observe every frame written to any peer."""
        self._frame_taps.append(tap)

    def tap_frame(self, peer_id: str, frame: bytes) -> None:
        for tap in self._frame_taps:
            tap(peer_id, frame)

    async def start(self) -> None:
        """Bind the listener and start connecting to active peers."""
        host, port = self.listen
        self._server = await asyncio.start_server(self._accept, host, port)
        self.bound_port = self._server.sockets[0].getsockname()[1]
        self.log.info(f"BGP speaker AS{self.local.asn} listening on {host}:{self.bound_port}")
        for runner in self.runners.values():
            runner.start()

    async def stop(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
            self._server = None
        for runner in self.runners.values():
            await runner.stop()
        for task in self._inbound_tasks:
            task.cancel()
        await asyncio.gather(*self._inbound_tasks, return_exceptions=True)
        self._inbound_tasks.clear()

    def _accept(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        task = asyncio.ensure_future(self._handle_inbound(reader, writer))
        self._inbound_tasks.append(task)
        task.add_done_callback(self._inbound_tasks.remove)

    async def _reject(self, writer: asyncio.StreamWriter, code: int, subcode: int, reason: str) -> None:
        self.log.info(f"Rejecting inbound connection: {reason}")
        try:
            writer.write(frame_message(NotificationMessage(code, subcode)))
            await writer.drain()
        except (ConnectionError, OSError):
            pass
        writer.close()

    async def _handle_inbound(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        try:
            frame = await asyncio.wait_for(read_frame(reader), timeout=settings.OPEN_HOLD_TIME)
            message = parse_message(frame)
        except (asyncio.IncompleteReadError, asyncio.TimeoutError, ConnectionError):
            writer.close()
            return
        except BgpError as e:
            await self._reject(writer, e.code, e.subcode, str(e))
            return

        if not isinstance(message, OpenMessage):
            await self._reject(writer, NotificationCode.FSM_ERROR, 0, f"expected OPEN, got {type(message).__name__}")
            return

        runner = self._by_asn.get(message.asn)
        if runner is None:
            await self._reject(writer, NotificationCode.OPEN_MESSAGE_ERROR, BAD_PEER_AS, f"no peer configured for AS{message.asn}")
            return
        if not runner.enabled:
            await self._reject(writer, NotificationCode.CEASE, ADMINISTRATIVE_SHUTDOWN, f"peer {runner.peer_id} is disabled")
            return

        existing = runner.current
        if existing is not None:
            if existing.session.state == SessionState.ESTABLISHED or self.local.bgp_id > message.bgp_id:
                await self._reject(
                    writer,
                    NotificationCode.CEASE,
                    CONNECTION_COLLISION_RESOLUTION,
                    f"collision with {runner.peer_id}, keeping existing connection",
                )
                return
            self.log.info(f"Collision with {runner.peer_id}: peer has the higher BGP identifier, keeping its connection")
            runner.current = None
            existing.task.cancel()
            await asyncio.gather(existing.task, return_exceptions=True)

        self.log.info(f"Accepted inbound session from {runner.peer_id} (AS{message.asn})")
        connection = runner.attach(runner.new_session(), reader, writer, first_message=message, inbound=True)
        await asyncio.gather(connection.task, return_exceptions=True)

    def send(self, peer_id: str, batch: OutboundBatch) -> bool:
        """
        Queue reachability for one peer.

        Returns:
            False when the peer has no Established DTN-capable session
        """
        runner = self.runners.get(peer_id)
        return runner.send(batch) if runner else False

    def established_peers(self) -> List[PeerSession]:
        return [
            r.current.session
            for r in self.runners.values()
            if r.current is not None and r.current.session.state == SessionState.ESTABLISHED
        ]

    async def kill_peer(self, peer_id: str, mode: str = "shutdown") -> None:
        """
        Take a peer down and keep it down until ``enable_peer``.

        Args:
            peer_id: Configured peer id
            mode: "shutdown" sends Cease and closes; "silent" stops transmitting
        """
        if mode not in ("shutdown", "silent"):
            raise ValueError(f"unknown kill mode '{mode}'")
        runner = self.runners.get(peer_id)
        if runner is None:
            raise KeyError(peer_id)
        self.log.info(f"Killing peer {peer_id} ({mode})")
        await runner.kill(mode)

    def enable_peer(self, peer_id: str) -> None:
        self.runners[peer_id].enable()

    @property
    def total_updates_sent(self) -> int:
        return sum(r.updates_sent for r in self.runners.values())

    @property
    def total_updates_received(self) -> int:
        return sum(r.updates_received for r in self.runners.values())

    def peer_status(self) -> List[Dict]:
        return [self.runners[p].status() for p in sorted(self.runners)]
