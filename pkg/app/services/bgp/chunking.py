"""
Split reachability records into UPDATEs that respect the 4096-octet frame ceiling
and the one-octet NLRI count.
"""

from typing import Iterable, List, Sequence, Tuple

from app.core.exceptions import OversizeEntry
from app.services.bgp.messages import HEADER_SIZE, MAX_MESSAGE_SIZE, UpdateMessage, attribute_size, encode_as_path
from app.services.nlri.codec import encode_eid_entry, encode_nhna
from app.services.nlri.models import (
    MAX_ENTRIES,
    ClaEndpoint,
    EidEntry,
    ReachabilityAnnouncement,
    ReachabilityWithdrawal,
)

# AFI (2) + SAFI (1) + NHNA length (1) + count (1)
_REACH_FIXED = 5
# AFI (2) + SAFI (1) + count (1)
_UNREACH_FIXED = 4


def _frame_overhead(as_path: Tuple[int, ...]) -> int:
    # header, withdrawn routes length, path attribute length, ORIGIN, AS_PATH
    return HEADER_SIZE + 4 + attribute_size(1) + attribute_size(len(encode_as_path(as_path)))


def _split(entries: Sequence[EidEntry], fixed: int, as_path: Tuple[int, ...]) -> List[List[EidEntry]]:
    overhead = _frame_overhead(as_path)
    chunks: List[List[EidEntry]] = []
    current: List[EidEntry] = []
    current_size = fixed

    for entry in entries:
        size = len(encode_eid_entry(entry))
        if overhead + attribute_size(fixed + size) > MAX_MESSAGE_SIZE:
            raise OversizeEntry(str(entry.eid), overhead + attribute_size(fixed + size), MAX_MESSAGE_SIZE)

        fits = overhead + attribute_size(current_size + size) <= MAX_MESSAGE_SIZE
        if current and (len(current) == MAX_ENTRIES or not fits):
            chunks.append(current)
            current, current_size = [], fixed
        current.append(entry)
        current_size += size

    if current:
        chunks.append(current)
    return chunks


def split_oversize(
    next_hop: ClaEndpoint, entries: Iterable[EidEntry], as_path: Tuple[int, ...] = ()
) -> Tuple[List[EidEntry], List[EidEntry]]:
    """
    Separate the entries that can be announced from those too large for any UPDATE.

    Returns:
        Tuple of (fitting entries, oversize entries), each in input order
    """
    _, nhna = encode_nhna(next_hop)
    limit = MAX_MESSAGE_SIZE - _frame_overhead(tuple(as_path))
    fixed = _REACH_FIXED + len(nhna)
    fitting: List[EidEntry] = []
    oversize: List[EidEntry] = []
    for entry in entries:
        if attribute_size(fixed + len(encode_eid_entry(entry))) > limit:
            oversize.append(entry)
        else:
            fitting.append(entry)
    return fitting, oversize


def chunk_updates(next_hop: ClaEndpoint, entries: Iterable[EidEntry], as_path: Tuple[int, ...] = ()) -> List[UpdateMessage]:
    """
    Build the UPDATEs announcing any number of EIDs via one next hop.

    Args:
        next_hop: CLA endpoint every entry is reachable through
        entries: EID entries, in the order they should be announced
        as_path: AS path the UPDATEs will carry

    Returns:
        UPDATE messages, each at most 4096 octets and 255 entries, preserving order

    Raises:
        OversizeEntry: If a single entry cannot fit one UPDATE
    """
    _, nhna = encode_nhna(next_hop)
    fixed = _REACH_FIXED + len(nhna)
    return [
        UpdateMessage(as_path=as_path, mp_reach=ReachabilityAnnouncement(next_hop, tuple(chunk)))
        for chunk in _split(list(entries), fixed, tuple(as_path))
    ]


def chunk_withdrawals(safi: int, entries: Iterable[EidEntry], as_path: Tuple[int, ...] = ()) -> List[UpdateMessage]:
    """
    Build the UPDATEs withdrawing any number of EIDs.

    Args:
        safi: SAFI the EIDs were announced under
        entries: Attribute-free EID entries
        as_path: AS path the UPDATEs will carry

    Returns:
        UPDATE messages carrying MP_UNREACH_NLRI, preserving order

    Raises:
        OversizeEntry: If a single entry cannot fit one UPDATE
    """
    return [
        UpdateMessage(as_path=as_path, mp_unreach=ReachabilityWithdrawal(safi, tuple(chunk)))
        for chunk in _split(list(entries), _UNREACH_FIXED, tuple(as_path))
    ]
