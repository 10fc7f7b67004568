"""
BGP peer session: capability negotiation, finite state machine and the
asyncio driver that runs it over a stream transport.

``PeerSession`` is transport-free. Every input (a connection, a message, the
clock) returns a ``SessionStep`` describing what to transmit and what to
deliver, so tests can drive two sessions against each other with a fake
clock. ``run_session`` binds a session to a reader/writer pair.
"""

import asyncio
import struct
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, FrozenSet, List, Optional, Sequence, Tuple, Union

from app.config import get_settings
from app.core.exceptions import BgpAttributeError, BgpError, NotificationSent, UnsupportedSafi
from app.core.logging import logger as default_logger
from app.services.bgp.chunking import chunk_updates, chunk_withdrawals, split_oversize
from app.services.bgp.messages import (
    ADMINISTRATIVE_SHUTDOWN,
    BAD_PEER_AS,
    BGP_VERSION,
    MALFORMED_AS_PATH,
    UNACCEPTABLE_HOLD_TIME,
    UNSUPPORTED_VERSION_NUMBER,
    BgpMessage,
    KeepaliveMessage,
    NotificationCode,
    NotificationMessage,
    OpenMessage,
    UpdateMessage,
    frame_message,
    parse_message,
    read_frame,
)
from app.services.nlri.models import AFI_DTN, ReachabilityAnnouncement, ReachabilityWithdrawal

settings = get_settings()


class SessionState(str, Enum):
    IDLE = "Idle"
    CONNECT = "Connect"
    OPEN_SENT = "OpenSent"
    OPEN_CONFIRM = "OpenConfirm"
    ESTABLISHED = "Established"


@dataclass(frozen=True)
class LocalIdentity:
    """What this node says about itself in OPEN."""
    asn: int
    bgp_id: int
    hold_time: int
    safis: Tuple[int, ...] = (0,)


@dataclass(frozen=True)
class SessionParameters:
    """Outcome of OPEN negotiation."""
    hold_time: int
    keepalive_interval: int
    dtn_capable: bool
    safis: FrozenSet[int]
    remote_asn: int
    remote_bgp_id: int


@dataclass
class SessionStep:
    """Effects of feeding one input to a session."""
    outbound: List[BgpMessage] = field(default_factory=list)
    updates: List[UpdateMessage] = field(default_factory=list)
    established: bool = False
    closed: bool = False
    reason: str = ""


@dataclass(frozen=True)
class OutboundBatch:
    """Reachability to send on one session; announcements are paired with the route's AS path."""
    announcements: Tuple[Tuple[Tuple[int, ...], ReachabilityAnnouncement], ...] = ()
    withdrawals: Tuple[ReachabilityWithdrawal, ...] = ()


@dataclass(frozen=True)
class CloseRequest:
    """Administrative request to end a session; ``silent`` stops transmitting instead."""
    reason: str
    silent: bool = False


def build_open(local: LocalIdentity, advertise_dtn: bool = True) -> OpenMessage:
    """
    Build the OPEN this node sends.

    Args:
        local: Local identity
        advertise_dtn: Whether to include the DTN multiprotocol capabilities

    Returns:
        OPEN message advertising (23042, safi) for every local SAFI
    """
    capabilities = tuple((AFI_DTN, safi) for safi in sorted(set(local.safis))) if advertise_dtn else ()
    return OpenMessage(local.asn, local.hold_time, local.bgp_id, capabilities)


def negotiate(open_sent: OpenMessage, open_received: OpenMessage, expected_asn: Optional[int] = None) -> SessionParameters:
    """
    Negotiate session parameters from the two OPEN messages.

    Args:
        open_sent: OPEN this node sent
        open_received: OPEN the peer sent
        expected_asn: Configured remote ASN, if any

    Returns:
        Negotiated parameters; hold time is the smaller of both, zero disables timers

    Raises:
        NotificationSent: Unsupported version, bad peer AS or unacceptable hold time
    """
    if open_received.version != BGP_VERSION:
        raise NotificationSent(
            NotificationCode.OPEN_MESSAGE_ERROR,
            UNSUPPORTED_VERSION_NUMBER,
            f"peer speaks BGP version {open_received.version}",
            data=struct.pack("!H", BGP_VERSION),
        )
    if expected_asn is not None and open_received.asn != expected_asn:
        raise NotificationSent(
            NotificationCode.OPEN_MESSAGE_ERROR,
            BAD_PEER_AS,
            f"peer AS {open_received.asn} is not the configured AS {expected_asn}",
        )
    if open_received.hold_time in (1, 2):
        raise NotificationSent(
            NotificationCode.OPEN_MESSAGE_ERROR,
            UNACCEPTABLE_HOLD_TIME,
            f"hold time {open_received.hold_time} is unacceptable",
        )

    hold_time = min(open_sent.hold_time, open_received.hold_time)
    local_safis = {safi for afi, safi in open_sent.capabilities if afi == AFI_DTN}
    remote_safis = {safi for afi, safi in open_received.capabilities if afi == AFI_DTN}
    safis = frozenset(local_safis & remote_safis)

    return SessionParameters(
        hold_time=hold_time,
        keepalive_interval=hold_time // 3,
        dtn_capable=bool(safis),
        safis=safis,
        remote_asn=open_received.asn,
        remote_bgp_id=open_received.bgp_id,
    )


class PeerSession:
    """
    State machine of one BGP session.

    Only Idle, Connect, OpenSent, OpenConfirm and Established are modelled;
    the transport is always opened before the session sees it, so Active
    collapses into Connect.
    """

    def __init__(
        self,
        peer_id: str,
        local: LocalIdentity,
        expected_asn: Optional[int] = None,
        advertise_dtn: bool = True,
        log=None,
    ):
        self.peer_id = peer_id
        self.local = local
        self.expected_asn = expected_asn
        self.advertise_dtn = advertise_dtn
        self.log = log or default_logger

        self.state = SessionState.IDLE
        self.params: Optional[SessionParameters] = None
        self.open_sent: Optional[OpenMessage] = None
        self.hold_deadline: Optional[float] = None
        self.keepalive_deadline: Optional[float] = None
        self.silenced = False

        self.updates_sent = 0
        self.updates_received = 0
        self.keepalives_sent = 0
        self.oversize_skipped = 0
        self.unsupported_safi_skipped = 0

    @property
    def dtn_capable(self) -> bool:
        return self.params is not None and self.params.dtn_capable

    @property
    def can_send_dtn(self) -> bool:
        return self.state == SessionState.ESTABLISHED and self.dtn_capable and not self.silenced

    @property
    def remote_asn(self) -> Optional[int]:
        return self.params.remote_asn if self.params else None

    @property
    def remote_bgp_id(self) -> Optional[int]:
        return self.params.remote_bgp_id if self.params else None

    def start(self) -> None:
        self.state = SessionState.CONNECT

    def connection_made(self, now: float) -> SessionStep:
        """Transport is up: send OPEN and wait for the peer's."""
        self.open_sent = build_open(self.local, self.advertise_dtn)
        self.state = SessionState.OPEN_SENT
        self.hold_deadline = now + settings.OPEN_HOLD_TIME
        return SessionStep(outbound=[self.open_sent])

    def _close(self, reason: str, notification: Optional[NotificationMessage] = None) -> SessionStep:
        self.log.info(f"Session {self.peer_id} closing in state {self.state.value}: {reason}")
        outbound = [notification] if notification is not None else []
        return SessionStep(outbound=outbound, closed=True, reason=reason)

    def _fsm_error(self, message: BgpMessage) -> SessionStep:
        return self._close(
            f"unexpected {type(message).__name__} in {self.state.value}",
            NotificationMessage(NotificationCode.FSM_ERROR, 0),
        )

    def _restart_hold_timer(self, now: float) -> None:
        if self.params is not None and self.params.hold_time > 0:
            self.hold_deadline = now + self.params.hold_time

    def handle_message(self, message: BgpMessage, now: float) -> SessionStep:
        """
        Feed one received message to the state machine.

        Args:
            message: Parsed message
            now: Monotonic time of receipt

        Returns:
            Effects: replies, updates to deliver, establishment or closure
        """
        if isinstance(message, NotificationMessage):
            return self._close(f"peer sent NOTIFICATION {message.code}/{message.subcode}")

        if self.state == SessionState.OPEN_SENT:
            if not isinstance(message, OpenMessage):
                return self._fsm_error(message)
            try:
                self.params = negotiate(self.open_sent, message, self.expected_asn)
            except NotificationSent as e:
                self.log.warning(f"Rejecting OPEN from {self.peer_id}: {e.detail}")
                return self._close(e.detail, NotificationMessage(e.code, e.subcode, e.data))

            self.state = SessionState.OPEN_CONFIRM
            if self.params.hold_time > 0:
                self.hold_deadline = now + self.params.hold_time
                self.keepalive_deadline = now + self.params.keepalive_interval
            else:
                self.hold_deadline = None
                self.keepalive_deadline = None
            if not self.params.dtn_capable:
                self.log.info(f"Peer {self.peer_id} did not negotiate the DTN address family")
            return SessionStep(outbound=[KeepaliveMessage()])

        if self.state == SessionState.OPEN_CONFIRM:
            if not isinstance(message, KeepaliveMessage):
                return self._fsm_error(message)
            self.state = SessionState.ESTABLISHED
            self._restart_hold_timer(now)
            self.log.info(
                f"Session {self.peer_id} established (hold {self.params.hold_time}s, "
                f"dtn_capable={self.params.dtn_capable}, safis={sorted(self.params.safis)})"
            )
            return SessionStep(established=True)

        if self.state == SessionState.ESTABLISHED:
            self._restart_hold_timer(now)
            if isinstance(message, KeepaliveMessage):
                return SessionStep()
            if isinstance(message, UpdateMessage):
                return self._receive_update(message)
            return self._fsm_error(message)

        return self._fsm_error(message)

    def _receive_update(self, update: UpdateMessage) -> SessionStep:
        self.updates_received += 1
        if update.mp_reach is not None and (not update.as_path or update.as_path[0] != self.params.remote_asn):
            return self._close(
                f"AS path {list(update.as_path)} does not start with peer AS {self.params.remote_asn}",
                NotificationMessage(NotificationCode.UPDATE_MESSAGE_ERROR, MALFORMED_AS_PATH),
            )
        if not self.params.dtn_capable:
            self.log.warning(f"Ignoring DTN UPDATE from {self.peer_id}: address family not negotiated")
            return SessionStep()
        return SessionStep(updates=[update])

    def handle_error(self, error: BgpError, now: Optional[float] = None) -> SessionStep:
        """
        Answer a protocol error detected while parsing with a NOTIFICATION.

        An Established UPDATE whose DTN attribute names an unsupported SAFI is
        logged and skipped instead; the session stays up.
        """
        if (
            self.state == SessionState.ESTABLISHED
            and isinstance(error, BgpAttributeError)
            and isinstance(error.cause, UnsupportedSafi)
        ):
            if now is not None:
                self._restart_hold_timer(now)
            self.updates_received += 1
            self.unsupported_safi_skipped += 1
            self.log.warning(f"Skipping UPDATE from {self.peer_id}: unsupported SAFI {error.cause.safi}")
            return SessionStep()
        return self._close(str(error), NotificationMessage(error.code, error.subcode))

    def tick(self, now: float) -> SessionStep:
        """
        Advance the timers.

        Returns:
            A KEEPALIVE when due, or a HOLD_TIMER_EXPIRED closure
        """
        if self.hold_deadline is not None and now >= self.hold_deadline:
            return self._close("hold timer expired", NotificationMessage(NotificationCode.HOLD_TIMER_EXPIRED, 0))

        step = SessionStep()
        if (
            self.state in (SessionState.OPEN_CONFIRM, SessionState.ESTABLISHED)
            and self.keepalive_deadline is not None
            and now >= self.keepalive_deadline
            and not self.silenced
        ):
            step.outbound.append(KeepaliveMessage())
            self.keepalive_deadline = now + self.params.keepalive_interval
        return step

    def prepare_updates(
        self,
        announcements: Sequence[Tuple[Tuple[int, ...], ReachabilityAnnouncement]],
        withdrawals: Sequence[ReachabilityWithdrawal],
    ) -> List[UpdateMessage]:
        """
        Turn reachability into UPDATEs for this peer, prepending the local AS.

        Nothing is produced unless the session is Established and DTN capable;
        announcements for SAFIs outside the negotiated set are dropped, and
        entries too large for a single UPDATE are logged and skipped.

        Returns:
            UPDATE messages in send order: withdrawals first, then announcements
        """
        if not self.can_send_dtn:
            if announcements or withdrawals:
                self.log.debug(f"Not sending DTN reachability to {self.peer_id} in state {self.state.value}")
            return []

        updates: List[UpdateMessage] = []
        for withdrawal in withdrawals:
            updates.extend(chunk_withdrawals(withdrawal.safi, withdrawal.entries, (self.local.asn,)))
        for as_path, announcement in announcements:
            if announcement.safi not in self.params.safis:
                self.log.debug(f"SAFI {announcement.safi} not negotiated with {self.peer_id}, skipping")
                continue
            path = (self.local.asn,) + tuple(as_path)
            entries, oversize = split_oversize(announcement.next_hop, announcement.entries, path)
            for entry in oversize:
                self.oversize_skipped += 1
                self.log.warning(f"Not announcing {entry.eid} to {self.peer_id}: entry does not fit one UPDATE")
            updates.extend(chunk_updates(announcement.next_hop, entries, path))
        return updates

    def shutdown(self) -> SessionStep:
        return self._close(
            "administrative shutdown",
            NotificationMessage(NotificationCode.CEASE, ADMINISTRATIVE_SHUTDOWN),
        )

    def record_sent(self, message: BgpMessage) -> None:
        if isinstance(message, UpdateMessage):
            self.updates_sent += 1
        elif isinstance(message, KeepaliveMessage):
            self.keepalives_sent += 1

    def connection_lost(self) -> None:
        self.state = SessionState.IDLE
        self.hold_deadline = None
        self.keepalive_deadline = None


class SessionHandler:
    """Callbacks a session driver reports to; the speaker implements them."""

    async def on_established(self, session: PeerSession) -> None:
        pass

    async def on_update(self, session: PeerSession, update: UpdateMessage) -> None:
        pass

    async def on_closed(self, session: PeerSession, reason: str, was_established: bool) -> None:
        pass


class _SessionClosed(Exception):
    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


FrameTap = Callable[[str, bytes], None]


async def run_session(
    session: PeerSession,
    reader: asyncio.StreamReader,
    writer: asyncio.StreamWriter,
    outbound: "asyncio.Queue[Union[OutboundBatch, CloseRequest]]",
    handler: SessionHandler,
    first_message: Optional[BgpMessage] = None,
    clock: Callable[[], float] = time.monotonic,
    frame_tap: Optional[FrameTap] = None,
) -> str:
    """
    Drive a session over an open transport until it closes.

    Args:
        session: Session in Connect state
        reader: Transport reader
        writer: Transport writer, owned exclusively by this session
        outbound: Queue of batches to send and close requests
        handler: Receives establishment, updates (in arrival order) and closure
        first_message: A message already read from the transport (inbound OPEN)
        clock: Monotonic clock
        frame_tap: Called with every frame written, for traffic inspection

    Returns:
        The reason the session ended
    """

    async def write(messages: Sequence[BgpMessage]) -> None:
        if session.silenced or not messages:
            return
        for message in messages:
            frame = frame_message(message)
            session.record_sent(message)
            if frame_tap is not None:
                frame_tap(session.peer_id, frame)
            writer.write(frame)
        await writer.drain()

    async def apply(step: SessionStep) -> None:
        await write(step.outbound)
        if step.established:
            await handler.on_established(session)
        for update in step.updates:
            await handler.on_update(session, update)
        if step.closed:
            raise _SessionClosed(step.reason)

    async def receive_loop() -> None:
        if first_message is not None:
            await apply(session.handle_message(first_message, clock()))
        while True:
            try:
                message = parse_message(await read_frame(reader))
            except (asyncio.IncompleteReadError, ConnectionError):
                raise _SessionClosed("peer closed the transport")
            except BgpError as e:
                await apply(session.handle_error(e, clock()))
                continue
            await apply(session.handle_message(message, clock()))

    async def timer_loop() -> None:
        while True:
            await asyncio.sleep(settings.TIMER_RESOLUTION)
            await apply(session.tick(clock()))

    async def send_loop() -> None:
        while True:
            item = await outbound.get()
            if isinstance(item, CloseRequest):
                if item.silent:
                    session.log.info(f"Silencing session {session.peer_id}: {item.reason}")
                    session.silenced = True
                    continue
                await apply(session.shutdown())
            else:
                await write(session.prepare_updates(item.announcements, item.withdrawals))

    reason = "session ended"
    tasks: List[asyncio.Task] = []
    try:
        await apply(session.connection_made(clock()))
        tasks = [
            asyncio.ensure_future(receive_loop()),
            asyncio.ensure_future(timer_loop()),
            asyncio.ensure_future(send_loop()),
        ]
        done, _ = await asyncio.wait(tasks, return_when=asyncio.FIRST_EXCEPTION)
        for task in done:
            exc = task.exception()
            if isinstance(exc, _SessionClosed):
                reason = exc.reason
            elif exc is not None:
                session.log.error(f"Session {session.peer_id} failed: {exc!r}")
                reason = f"internal error: {exc}"
    except _SessionClosed as e:
        reason = e.reason
    except (ConnectionError, OSError) as e:
        reason = f"transport error: {e}"
    finally:
        for task in tasks:
            task.cancel()
        await asyncio.gather(*tasks, return_exceptions=True)

        was_established = session.state == SessionState.ESTABLISHED
        session.connection_lost()
        writer.close()
        try:
            await writer.wait_closed()
        except (ConnectionError, OSError):
            pass
        try:
            await handler.on_closed(session, reason, was_established)
        except Exception as e:
            session.log.error(f"Error reporting closure of {session.peer_id}: {e}")

    return reason
