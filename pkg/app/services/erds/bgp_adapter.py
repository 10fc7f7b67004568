"""
BGP-side adapter embedding the in-process BGP speaker.
"""

import asyncio
from typing import AsyncIterator, List, Optional, Sequence, Tuple

from app.config import PeerSection
from app.core.logging import get_node_logger
from app.services.bgp.messages import UpdateMessage
from app.services.bgp.session import LocalIdentity, OutboundBatch, PeerSession, SessionState
from app.services.bgp.speaker import BgpSpeaker, SpeakerListener
from app.services.erds.adapters import Adapter
from app.services.erds.events import Announce, PeerDown, PeerUp, ReachabilityEvent, Withdraw
from app.services.rib.models import PeerSource


class BgpSpeakerAdapter(Adapter, SpeakerListener):
    """
    Adapter turning speaker callbacks into reachability events and
    outbound events into per-peer UPDATE batches.
    """

    name = "bgp"

    def __init__(
        self,
        node_name: str,
        local: LocalIdentity,
        peers: Sequence[PeerSection],
        listen: Tuple[str, int],
        connect_retry: Optional[float] = None,
    ):
        self.log = get_node_logger(node_name, "erds.bgp")
        self.speaker = BgpSpeaker(node_name, local, peers, listen, listener=self, connect_retry=connect_retry)
        self._events: asyncio.Queue = asyncio.Queue()

    async def start(self) -> None:
        await self.speaker.start()

    async def stop(self) -> None:
        await self.speaker.stop()

    async def on_peer_up(self, peer_id: str, session: PeerSession) -> None:
        await self._events.put(PeerUp(peer_id))

    async def on_peer_down(self, peer_id: str, reason: str) -> None:
        self.log.info(f"Peer {peer_id} down: {reason}")
        await self._events.put(PeerDown(peer_id, reason))

    async def on_update(self, peer_id: str, session: PeerSession, update: UpdateMessage) -> None:
        source = PeerSource(peer_id, session.remote_bgp_id, update.as_path)
        # an UPDATE may replace routes it also withdraws, so removals go first
        if update.mp_unreach is not None:
            await self._events.put(Withdraw(update.mp_unreach, source))
        if update.mp_reach is not None:
            await self._events.put(Announce(update.mp_reach, source))

    async def listen(self) -> AsyncIterator[ReachabilityEvent]:
        while True:
            yield await self._events.get()

    async def send(self, event: ReachabilityEvent) -> None:
        if isinstance(event, Announce):
            batch = OutboundBatch(announcements=((event.as_path, event.record),))
        elif isinstance(event, Withdraw):
            batch = OutboundBatch(withdrawals=(event.record,))
        else:
            self.log.warning(f"Cannot send {type(event).__name__} over BGP")
            return
        if event.peer_id is None or not self.speaker.send(event.peer_id, batch):
            self.log.debug(f"Dropping {type(event).__name__} for {event.peer_id}: no DTN-capable session")

    def established_peer_ids(self) -> List[str]:
        return [
            peer_id
            for peer_id, runner in self.speaker.runners.items()
            if runner.state == SessionState.ESTABLISHED
        ]
