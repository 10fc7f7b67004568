"""
RIB inspection endpoint.
"""

from fastapi import APIRouter, Depends, Query
from fastapi.responses import PlainTextResponse

from app.api.dependencies import get_node
from app.api.schemas import RibResponse
from app.services.node.node_service import ErdsNode

router = APIRouter()


@router.get("", response_model=RibResponse)
async def get_rib(
    format: str = Query("json", regex="^(json|text)$", description="json or text"),
    node: ErdsNode = Depends(get_node),
):
    """
    Selected route of every EID, sorted by EID.
    ``format=text`` returns the ``eid | next_hop | safi | as_path | source | attr_count`` dump.
    """
    if format == "text":
        dump = node.rib_dump()
        return PlainTextResponse(dump + "\n" if dump else "")
    return RibResponse(
        node=node.name,
        asn=node.config.node.asn,
        loops_detected=node.rib.loops_detected,
        routes=node.rib.snapshot(),
    )
