"""
Format conversion utilities for the EID Reachability Distribution Service.
"""

from typing import Any, Dict, Iterable, List, Sequence


def format_as_path(as_path: Sequence[int]) -> str:
    """
    Format an AS path the way the RIB dump does.

    Args:
        as_path: ASNs, nearest first

    Returns:
        Space separated ASNs, or "-" for a locally registered EID
    """
    return " ".join(str(asn) for asn in as_path) if as_path else "-"


def format_rtt(seconds: float) -> str:
    """
    Format a round-trip time in a human-readable way.

    Args:
        seconds: Round-trip time in seconds

    Returns:
        e.g. "850 us", "1.25 ms" or "2.10 s"
    """
    if seconds < 0.001:
        return f"{seconds * 1_000_000:.0f} us"
    if seconds < 1:
        return f"{seconds * 1000:.2f} ms"
    return f"{seconds:.2f} s"


def format_peer_table(peers: Iterable[Dict[str, Any]]) -> str:
    """One line per peer: ``peer | state | remote_asn | sent | received``."""
    lines: List[str] = []
    for peer in peers:
        lines.append(
            f"{peer['peer_id']} | {peer['state']} | {peer['remote_asn']} | "
            f"{peer['updates_sent']} | {peer['updates_received']}"
        )
    return "\n".join(lines)
