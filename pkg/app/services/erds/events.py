"""
Events flowing between the ERDS adapters and the RIB.

Reachability travels as the codec's own record types; the other events
describe session and agent lifecycle.
"""

from dataclasses import dataclass
from typing import Optional, Tuple, Union

from app.services.nlri.models import EndpointId, ReachabilityAnnouncement, ReachabilityWithdrawal
from app.services.rib.models import LOCAL, RouteSource


@dataclass(frozen=True)
class Announce:
    """
    Reachability announcement.

    Inbound, ``source`` says where it was learned. Outbound toward BGP,
    ``peer_id`` names the receiving peer and ``as_path`` is the selected
    route's path, which the session extends with the local AS.
    """
    record: ReachabilityAnnouncement
    source: RouteSource = LOCAL
    peer_id: Optional[str] = None
    as_path: Tuple[int, ...] = ()


@dataclass(frozen=True)
class Withdraw:
    record: ReachabilityWithdrawal
    source: RouteSource = LOCAL
    peer_id: Optional[str] = None


@dataclass(frozen=True)
class PeerUp:
    peer_id: str


@dataclass(frozen=True)
class PeerDown:
    peer_id: str
    reason: str = ""


@dataclass(frozen=True)
class Resync:
    """
    The BP agent (re)connected.

    ``announcements`` is its full registration set, ``installed`` the EIDs its
    FIB currently holds.
    """
    announcements: Tuple[Announce, ...] = ()
    installed: Tuple[EndpointId, ...] = ()


ReachabilityEvent = Union[Announce, Withdraw, PeerUp, PeerDown, Resync]
