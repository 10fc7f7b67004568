"""
Pydantic models for the status API.
"""

from typing import List, Optional

from pydantic import BaseModel


class RibRoute(BaseModel):
    """Selected route of one EID."""
    eid: str
    next_hop: str
    safi: int
    as_path: List[int]
    source: str
    attr_count: int
    routes: int


class RibResponse(BaseModel):
    node: str
    asn: int
    loops_detected: int
    routes: List[RibRoute]


class FibEntry(BaseModel):
    eid: str
    safi: int
    host: str
    port: int


class FibResponse(BaseModel):
    node: str
    entries: List[FibEntry]


class PeerStatus(BaseModel):
    peer_id: str
    host: str
    port: int
    remote_asn: int
    mode: str
    enabled: bool
    state: str
    hold_time: Optional[int] = None
    dtn_capable: bool
    safis: List[int]
    updates_sent: int
    updates_received: int
    last_error: Optional[str] = None


class ReceivedBundle(BaseModel):
    seq: int
    size: int
    payload_b64: str
    peer: str


class HealthResponse(BaseModel):
    status: str
    service: str
    version: str
    node: Optional[str] = None
    bp_connected: Optional[bool] = None
    established_peers: Optional[int] = None


class ErrorResponse(BaseModel):
    """Error response model."""
    detail: str
