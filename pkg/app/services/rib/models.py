"""
Route, entry and delta types of the reachability RIB.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

from app.services.nlri.models import ClaEndpoint, EidAttribute, EndpointId


@dataclass(frozen=True)
class LocalSource:
    """Route originated by the local BP agent."""

    @property
    def key(self) -> str:
        return "local"

    @property
    def as_path(self) -> Tuple[int, ...]:
        return ()

    def __str__(self) -> str:
        return "local"


@dataclass(frozen=True)
class PeerSource:
    """Route learned from a BGP peer."""
    peer_id: str
    bgp_id: int
    as_path: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "as_path", tuple(self.as_path))

    @property
    def key(self) -> str:
        return f"peer:{self.peer_id}"

    def __str__(self) -> str:
        return self.key


RouteSource = Union[LocalSource, PeerSource]

LOCAL = LocalSource()


@dataclass(frozen=True)
class Route:
    source: RouteSource
    next_hop: ClaEndpoint
    attributes: Tuple[EidAttribute, ...]
    learned_at: float

    @property
    def safi(self) -> int:
        return self.next_hop.safi

    @property
    def as_path(self) -> Tuple[int, ...]:
        return self.source.as_path

    @property
    def advertised(self) -> Tuple:
        """What a neighbour would see of this route, ignoring when it was learned."""
        return self.source, self.next_hop, self.attributes

    def preference(self) -> Tuple:
        # local first, then shorter path, lower BGP id, earlier learned
        if isinstance(self.source, LocalSource):
            return (0, 0, 0, self.learned_at, "")
        return (1, len(self.source.as_path), self.source.bgp_id, self.learned_at, self.source.peer_id)


@dataclass
class RibEntry:
    eid: EndpointId
    routes: Dict[str, Route] = field(default_factory=dict)
    selected: Optional[Route] = None


@dataclass(frozen=True)
class RibUpdate:
    """An EID whose selected route was added or changed."""
    eid: EndpointId
    next_hop: ClaEndpoint
    attributes: Tuple[EidAttribute, ...]
    source: RouteSource

    @property
    def safi(self) -> int:
        return self.next_hop.safi


@dataclass(frozen=True)
class RemovedRoute:
    """An EID left without routes, with the SAFI it was last selected under."""
    eid: EndpointId
    safi: int


@dataclass
class RibDelta:
    """
    Changes to selected routes caused by one or more mutations.

    ``updated`` and ``removed`` never share an EID.
    """
    updated: List[RibUpdate] = field(default_factory=list)
    removed: List[RemovedRoute] = field(default_factory=list)

    @property
    def is_empty(self) -> bool:
        return not self.updated and not self.removed

    @property
    def removed_eids(self) -> List[EndpointId]:
        return [r.eid for r in self.removed]

    def merge(self, later: "RibDelta") -> "RibDelta":
        """
        Compose this delta with one produced after it.

        The last change per EID wins; EID order follows first appearance.
        """
        changes: Dict[EndpointId, Union[RibUpdate, RemovedRoute]] = {}
        for item in [*self.updated, *self.removed, *later.updated, *later.removed]:
            changes[item.eid] = item
        return RibDelta(
            updated=[c for c in changes.values() if isinstance(c, RibUpdate)],
            removed=[c for c in changes.values() if isinstance(c, RemovedRoute)],
        )

    def __bool__(self) -> bool:
        return not self.is_empty
