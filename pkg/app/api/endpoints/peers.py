"""
BGP peer status endpoint.
"""

from typing import List

from fastapi import APIRouter, Depends

from app.api.dependencies import get_node
from app.api.schemas import PeerStatus
from app.services.node.node_service import ErdsNode

router = APIRouter()


@router.get("", response_model=List[PeerStatus])
async def list_peers(node: ErdsNode = Depends(get_node)):
    """Session state, negotiated parameters and UPDATE counters per configured peer."""
    return node.peer_status()
