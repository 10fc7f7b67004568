"""
Health check endpoint for the status API.
"""

from fastapi import APIRouter, Request

from app import __version__
from app.api.schemas import HealthResponse
from app.config import get_settings

settings = get_settings()
router = APIRouter()


@router.get("", response_model=HealthResponse)
async def health_check(request: Request) -> HealthResponse:
    """
    Basic health check endpoint.
    Reports node liveness without requiring the node to be started.
    """
    node = getattr(request.app.state, "node", None)
    if node is None or not node.started:
        return HealthResponse(status="starting", service=settings.PROJECT_NAME, version=__version__)
    return HealthResponse(
        status="ok",
        service=settings.PROJECT_NAME,
        version=__version__,
        node=node.name,
        bp_connected=node.erds.bp_adapter.connected,
        established_peers=len(node.bgp.established_peer_ids()),
    )
