"""
Received bundle log endpoint.
"""

from typing import List

from fastapi import APIRouter, Depends

from app.api.dependencies import get_node
from app.api.schemas import ReceivedBundle
from app.services.node.node_service import ErdsNode

router = APIRouter()


@router.get("", response_model=List[ReceivedBundle])
async def list_bundles(node: ErdsNode = Depends(get_node)):
    return [bundle.to_model().dict() for bundle in node.agent.received]
