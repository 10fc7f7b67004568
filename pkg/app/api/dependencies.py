"""
API dependencies for the status API.
"""

from fastapi import HTTPException, Request, status

from app.services.node.node_service import ErdsNode


async def get_node(request: Request) -> ErdsNode:
    """
    Dependency returning the node this API reports on.
    Responds 503 until the node has started.
    """
    node = getattr(request.app.state, "node", None)
    if node is None or not node.started:
        raise HTTPException(
            status_code=status.HTTP_503_SERVICE_UNAVAILABLE,
            detail="Node is not running",
        )
    return node
