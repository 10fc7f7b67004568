"""
FIB inspection endpoint.
"""

from fastapi import APIRouter, Depends

from app.api.dependencies import get_node
from app.api.schemas import FibEntry, FibResponse
from app.services.node.node_service import ErdsNode

router = APIRouter()


@router.get("", response_model=FibResponse)
async def get_fib(node: ErdsNode = Depends(get_node)) -> FibResponse:
    """Forwarding table of the node's BP agent."""
    entries = [
        FibEntry(eid=eid.uri_text, safi=endpoint.safi, host=endpoint.host, port=endpoint.port)
        for eid, endpoint in node.agent.fib.items()
    ]
    return FibResponse(node=node.name, entries=entries)
