"""
Reachability RIB: per-EID route storage, best-route selection, loop
prevention and per-peer export with next-hop-self.

The RIB is not thread-safe and has no locking; the ERDS service is its only
writer.
"""

import json
import time
from collections import OrderedDict
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Tuple

from app.core.exceptions import LoopDetected
from app.core.logging import get_node_logger
from app.services.nlri.models import (
    MAX_ENTRIES,
    ClaEndpoint,
    EidEntry,
    EndpointId,
    ReachabilityAnnouncement,
    ReachabilityWithdrawal,
)
from app.services.rib.models import (
    PeerSource,
    RemovedRoute,
    RibDelta,
    RibEntry,
    RibUpdate,
    Route,
    RouteSource,
)
from app.utils.format_utils import format_as_path

Export = Tuple[List[Tuple[Tuple[int, ...], ReachabilityAnnouncement]], List[ReachabilityWithdrawal]]


def select_best(routes: Iterable[Route]) -> Optional[Route]:
    """
    Pick the preferred route: local over peer, then shorter AS path,
    lower BGP identifier, earlier learned.

    Args:
        routes: Candidate routes for one EID

    Returns:
        The selected route, or None if there are none
    """
    return min(routes, key=Route.preference, default=None)


def _batches(items: List, size: int = MAX_ENTRIES) -> Iterable[List]:
    for start in range(0, len(items), size):
        yield items[start:start + size]


class ReachabilityRib:
    """Routing information base keyed by EID."""

    def __init__(self, local_asn: int, node_name: str = "rib", clock: Callable[[], float] = time.monotonic):
        self.local_asn = local_asn
        self.clock = clock
        self.log = get_node_logger(node_name, "rib")
        self.entries: Dict[EndpointId, RibEntry] = {}
        self.loops_detected = 0

    def apply_announcement(self, source: RouteSource, announcement: ReachabilityAnnouncement) -> RibDelta:
        """
        Insert or replace this source's routes for the announced EIDs.

        Args:
            source: Local or the announcing peer
            announcement: Decoded announcement

        Returns:
            Changes to selected routes

        Raises:
            LoopDetected: If the AS path contains the local ASN; the peer's
                earlier routes for these EIDs are removed first and the
                resulting delta travels on the exception
        """
        if isinstance(source, PeerSource) and self.local_asn in source.as_path:
            delta = self._remove(source.key, announcement.eids)
            self.loops_detected += 1
            self.log.debug(f"Loop from {source.peer_id}: AS path {list(source.as_path)} contains AS{self.local_asn}")
            raise LoopDetected(source.peer_id, self.local_asn, source.as_path, delta)

        learned_at = self.clock()
        touched = []
        for entry in announcement.entries:
            rib_entry = self.entries.get(entry.eid)
            if rib_entry is None:
                rib_entry = self.entries[entry.eid] = RibEntry(entry.eid)
            previous = rib_entry.routes.get(source.key)
            route = Route(source, announcement.next_hop, entry.attributes, learned_at)
            if previous is not None and previous.advertised == route.advertised:
                continue
            rib_entry.routes[source.key] = route
            touched.append(entry.eid)
        return self._reselect(touched)

    def apply_withdrawal(self, source: RouteSource, withdrawal: ReachabilityWithdrawal) -> RibDelta:
        """
        Remove this source's routes for the withdrawn EIDs.

        Withdrawing an unknown EID is a no-op.
        """
        return self._remove(source.key, withdrawal.eids)

    def drop_peer(self, peer_id: str) -> RibDelta:
        """Remove every route learned from a peer."""
        key = PeerSource(peer_id, 0, ()).key
        eids = [eid for eid, entry in self.entries.items() if key in entry.routes]
        delta = self._remove(key, eids)
        if eids:
            self.log.info(f"Dropped {len(eids)} routes learned from {peer_id}")
        return delta

    def _remove(self, key: str, eids: Iterable[EndpointId]) -> RibDelta:
        touched = []
        for eid in eids:
            entry = self.entries.get(eid)
            if entry is not None and entry.routes.pop(key, None) is not None:
                touched.append(eid)
        return self._reselect(touched)

    def _reselect(self, eids: Iterable[EndpointId]) -> RibDelta:
        delta = RibDelta()
        for eid in OrderedDict.fromkeys(eids):
            entry = self.entries[eid]
            old = entry.selected
            new = select_best(entry.routes.values())
            entry.selected = new

            if new is None:
                del self.entries[eid]
                if old is not None:
                    delta.removed.append(RemovedRoute(eid, old.safi))
            elif old is None or old.advertised != new.advertised:
                delta.updated.append(RibUpdate(eid, new.next_hop, new.attributes, new.source))
        return delta

    def full_delta(self) -> RibDelta:
        """Every selected route as an update, sorted by EID text."""
        return RibDelta(updated=[
            RibUpdate(entry.eid, entry.selected.next_hop, entry.selected.attributes, entry.selected.source)
            for entry in self._sorted_entries()
        ])

    def export_for_peer(self, peer_id: str, delta: RibDelta, local_clas: Mapping[int, ClaEndpoint]) -> Export:
        """
        Compute what one peer should be told about a delta.

        Routes learned from the peer itself, or whose SAFI has no local CLA,
        turn into withdrawals. Exported routes carry the local CLA endpoint of
        their SAFI as next hop and keep their attributes.

        Args:
            peer_id: Receiving peer
            delta: Changes to export
            local_clas: Local CLA endpoint per SAFI

        Returns:
            Tuple of ([(as_path, announcement)], [withdrawal]); the session
            prepends the local ASN when sending
        """
        groups: Dict[Tuple[Tuple[int, ...], ClaEndpoint], List[EidEntry]] = OrderedDict()
        withdrawn: Dict[int, List[EidEntry]] = OrderedDict()

        for update in delta.updated:
            learned_from_peer = isinstance(update.source, PeerSource) and update.source.peer_id == peer_id
            next_hop = local_clas.get(update.safi)
            if learned_from_peer or next_hop is None:
                withdrawn.setdefault(update.safi, []).append(EidEntry(update.eid))
                continue
            groups.setdefault((update.source.as_path, next_hop), []).append(EidEntry(update.eid, update.attributes))

        for removed in delta.removed:
            withdrawn.setdefault(removed.safi, []).append(EidEntry(removed.eid))

        announcements = [
            (as_path, ReachabilityAnnouncement(next_hop, tuple(batch)))
            for (as_path, next_hop), entries in groups.items()
            for batch in _batches(entries)
        ]
        withdrawals = [
            ReachabilityWithdrawal(safi, tuple(batch))
            for safi, entries in withdrawn.items()
            for batch in _batches(entries)
        ]
        return announcements, withdrawals

    def _sorted_entries(self) -> List[RibEntry]:
        return sorted(self.entries.values(), key=lambda e: e.eid.uri_text)

    def lookup(self, eid: EndpointId) -> Optional[Route]:
        entry = self.entries.get(eid)
        return entry.selected if entry else None

    def selected_routes(self) -> Dict[EndpointId, Route]:
        return {eid: entry.selected for eid, entry in self.entries.items()}

    def has_loop_paths(self) -> bool:
        return any(self.local_asn in entry.selected.as_path for entry in self.entries.values())

    def snapshot(self) -> List[Dict]:
        """Selected routes as plain dicts, sorted by EID."""
        return [
            {
                "eid": entry.eid.uri_text,
                "next_hop": str(entry.selected.next_hop),
                "safi": entry.selected.safi,
                "as_path": list(entry.selected.as_path),
                "source": str(entry.selected.source),
                "attr_count": len(entry.selected.attributes),
                "routes": len(entry.routes),
            }
            for entry in self._sorted_entries()
        ]

    def dump(self) -> str:
        """
        Human-readable table, one line per EID:
        ``eid | next_hop | safi | as_path | source | attr_count``.
        """
        lines = []
        for row in self.snapshot():
            as_path = format_as_path(row["as_path"])
            lines.append(
                f"{row['eid']} | {row['next_hop']} | {row['safi']} | {as_path} | {row['source']} | {row['attr_count']}"
            )
        return "\n".join(lines)

    def dump_json(self) -> str:
        return json.dumps(self.snapshot(), indent=2, sort_keys=True)

    def __len__(self) -> int:
        return len(self.entries)
