"""
EID Reachability Distribution Service: owns one BP adapter, one BGP adapter
and the RIB, and moves reachability between them.
"""

import asyncio
import os
from collections import OrderedDict
from typing import Dict, List, Mapping, Optional

from app.config import ErdsConfig, get_settings
from app.core.exceptions import LoopDetected
from app.core.logging import get_node_logger
from app.services.erds.adapters import Adapter
from app.services.erds.bgp_adapter import BgpSpeakerAdapter
from app.services.erds.events import Announce, PeerDown, PeerUp, ReachabilityEvent, Resync, Withdraw
from app.services.nlri.models import (
    MAX_ENTRIES,
    ClaEndpoint,
    EidEntry,
    ReachabilityAnnouncement,
    ReachabilityWithdrawal,
)
from app.services.rib.models import LOCAL, LocalSource, RemovedRoute, RibDelta
from app.services.rib.rib_service import ReachabilityRib

settings = get_settings()


def local_clas_by_name(config: ErdsConfig) -> Dict[str, ClaEndpoint]:
    return {c.name: ClaEndpoint.from_host(c.safi, c.host, c.port) for c in config.cla}


def local_clas_by_safi(config: ErdsConfig) -> Dict[int, ClaEndpoint]:
    """First configured CLA of each SAFI; it is the next hop advertised for that SAFI."""
    by_safi: Dict[int, ClaEndpoint] = {}
    for endpoint in local_clas_by_name(config).values():
        by_safi.setdefault(endpoint.safi, endpoint)
    return by_safi


class ErdsService:
    """
    Orchestrator of one node.

    Events from both adapters go through a single queue and are applied to
    the RIB by one task, so RIB mutations and the deltas they produce are
    totally ordered. Every delta is pushed to the BP agent's FIB and exported
    to each Established peer.
    """

    def __init__(
        self,
        config: ErdsConfig,
        bp_adapter: Adapter,
        bgp_adapter: BgpSpeakerAdapter,
        rib: Optional[ReachabilityRib] = None,
    ):
        self.config = config
        self.bp_adapter = bp_adapter
        self.bgp_adapter = bgp_adapter
        self.rib = rib or ReachabilityRib(config.node.asn, config.node_name)
        self.local_clas = local_clas_by_safi(config)
        self.log = get_node_logger(config.node_name, "erds")

        self.events_processed = 0
        self.errors = 0
        self._queue: asyncio.Queue = asyncio.Queue()
        self._tasks: List[asyncio.Task] = []
        self._idle = asyncio.Event()
        self._idle.set()

    @property
    def loops_detected(self) -> int:
        return self.rib.loops_detected

    async def start(self) -> None:
        await self.bp_adapter.start()
        await self.bgp_adapter.start()
        self._tasks = [
            asyncio.ensure_future(self._process()),
            asyncio.ensure_future(self._pump(self.bp_adapter)),
            asyncio.ensure_future(self._pump(self.bgp_adapter)),
        ]
        self.log.info(
            f"ERDS AS{self.config.node.asn} started with {len(self.config.peer)} peers "
            f"and CLAs {', '.join(f'{c.name}={c.host}:{c.port}/{c.safi}' for c in self.config.cla) or 'none'}"
        )

    async def stop(self) -> None:
        for task in self._tasks:
            task.cancel()
        await asyncio.gather(*self._tasks, return_exceptions=True)
        self._tasks = []
        await self.bgp_adapter.stop()
        await self.bp_adapter.stop()

    async def run(self) -> None:
        """Run until cancelled."""
        await self.start()
        try:
            await asyncio.gather(*self._tasks)
        finally:
            await self.stop()

    async def _pump(self, adapter: Adapter) -> None:
        while True:
            try:
                async for event in adapter.listen():
                    self._idle.clear()
                    await self._queue.put(event)
            except asyncio.CancelledError:
                raise
            except Exception as e:
                self.log.error(f"Adapter {adapter.name} failed: {e!r}, restarting")
            await asyncio.sleep(settings.ADAPTER_RETRY_SECONDS)

    async def _process(self) -> None:
        while True:
            event = await self._queue.get()
            try:
                await self.handle_event(event)
            except Exception as e:
                self.errors += 1
                self.log.exception(f"Error handling {type(event).__name__}: {e}")
            if self._queue.empty():
                self._idle.set()

    async def wait_idle(self) -> None:
        await self._idle.wait()

    async def handle_event(self, event: ReachabilityEvent) -> RibDelta:
        """
        Apply one event to the RIB and propagate the resulting delta.

        Args:
            event: Event from either adapter

        Returns:
            The delta that was propagated
        """
        self.events_processed += 1

        if isinstance(event, Announce):
            try:
                delta = self.rib.apply_announcement(event.source, event.record)
            except LoopDetected as e:
                delta = e.delta or RibDelta()
        elif isinstance(event, Withdraw):
            delta = self.rib.apply_withdrawal(event.source, event.record)
        elif isinstance(event, PeerDown):
            delta = self.rib.drop_peer(event.peer_id)
        elif isinstance(event, PeerUp):
            await self._send_full_table(event.peer_id)
            delta = RibDelta()
        elif isinstance(event, Resync):
            delta = await self._resync(event)
        else:
            self.log.warning(f"Ignoring unknown event {event!r}")
            delta = RibDelta()

        await self.propagate(delta)
        self._write_dump()
        return delta

    async def _resync(self, event: Resync) -> RibDelta:
        registered = {entry.eid for a in event.announcements for entry in a.record.entries}
        stale = [
            (eid, entry.routes[LOCAL.key].safi)
            for eid, entry in self.rib.entries.items()
            if LOCAL.key in entry.routes and eid not in registered
        ]
        delta = RibDelta()
        for eid, safi in stale:
            delta = delta.merge(self.rib.apply_withdrawal(LOCAL, ReachabilityWithdrawal(safi, (EidEntry(eid),))))
        for announcement in event.announcements:
            delta = delta.merge(self.rib.apply_announcement(LOCAL, announcement.record))
        self.log.info(f"BP resync: {len(registered)} registered, {len(stale)} stale local routes withdrawn")

        # whatever the agent holds that the RIB does not want goes away
        wanted = {eid for eid, route in self.rib.selected_routes().items() if not isinstance(route.source, LocalSource)}
        extra = [eid for eid in event.installed if eid not in wanted]
        for start in range(0, len(extra), MAX_ENTRIES):
            batch = tuple(EidEntry(eid) for eid in extra[start:start + MAX_ENTRIES])
            await self.bp_adapter.send(Withdraw(ReachabilityWithdrawal(0, batch)))
        await self._push_fib(self.rib.full_delta())
        return delta

    async def propagate(self, delta: RibDelta) -> None:
        if delta.is_empty:
            return
        await self._push_fib(delta)
        for peer_id in self.bgp_adapter.established_peer_ids():
            announcements, withdrawals = self.rib.export_for_peer(peer_id, delta, self.local_clas)
            for withdrawal in withdrawals:
                await self.bgp_adapter.send(Withdraw(withdrawal, peer_id=peer_id))
            for as_path, announcement in announcements:
                await self.bgp_adapter.send(Announce(announcement, peer_id=peer_id, as_path=as_path))

    async def _send_full_table(self, peer_id: str) -> None:
        announcements, _ = self.rib.export_for_peer(peer_id, self.rib.full_delta(), self.local_clas)
        self.log.info(f"Peer {peer_id} up, sending {sum(len(a.entries) for _, a in announcements)} EIDs")
        for as_path, announcement in announcements:
            await self.bgp_adapter.send(Announce(announcement, peer_id=peer_id, as_path=as_path))

    async def _push_fib(self, delta: RibDelta) -> None:
        """Install peer-learned selected routes in the BP agent; local ones need no FIB entry."""
        installs: Dict[ClaEndpoint, List[EidEntry]] = OrderedDict()
        removals: List[RemovedRoute] = list(delta.removed)
        for update in delta.updated:
            if isinstance(update.source, LocalSource):
                removals.append(RemovedRoute(update.eid, update.safi))
            else:
                installs.setdefault(update.next_hop, []).append(EidEntry(update.eid))

        for next_hop, entries in installs.items():
            for start in range(0, len(entries), MAX_ENTRIES):
                record = ReachabilityAnnouncement(next_hop, tuple(entries[start:start + MAX_ENTRIES]))
                await self.bp_adapter.send(Announce(record))
        for start in range(0, len(removals), MAX_ENTRIES):
            batch = removals[start:start + MAX_ENTRIES]
            record = ReachabilityWithdrawal(batch[0].safi, tuple(EidEntry(r.eid) for r in batch))
            await self.bp_adapter.send(Withdraw(record))

    def _write_dump(self) -> None:
        path = self.config.node.rib_dump_path
        if not path:
            return
        try:
            os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
            tmp = f"{path}.tmp"
            with open(tmp, "w") as f:
                f.write(self.rib.dump() + "\n" if len(self.rib) else "")
            os.replace(tmp, path)
        except OSError as e:
            self.log.error(f"Could not write RIB dump to {path}: {e}")

    def status(self) -> Mapping:
        return {
            "node": self.config.node_name,
            "asn": self.config.node.asn,
            "rib_size": len(self.rib),
            "events_processed": self.events_processed,
            "loops_detected": self.loops_detected,
            "errors": self.errors,
            "bp_connected": getattr(self.bp_adapter, "connected", False),
        }
