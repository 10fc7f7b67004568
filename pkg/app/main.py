"""
FastAPI status API of one ERDS node.
"""

import time
from typing import TYPE_CHECKING, Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from app import __version__
from app.api.routes import api_router
from app.config import get_settings
from app.core.exceptions import ErdsException
from app.core.logging import logger

if TYPE_CHECKING:
    from app.services.node.node_service import ErdsNode

# Initialize settings
settings = get_settings()


def create_app(node: Optional["ErdsNode"] = None) -> FastAPI:
    """
    Build the status API for a node.

    Args:
        node: Node to report on; endpoints answer 503 while it is None or stopped

    Returns:
        FastAPI application
    """
    app = FastAPI(
        title=settings.PROJECT_NAME,
        description="Read-only status API of an EID reachability distribution node",
        version=__version__,
        openapi_url=f"{settings.API_V1_STR}/openapi.json",
        docs_url=f"{settings.API_V1_STR}/docs",
        redoc_url=None,
    )
    app.state.node = node

    # Add request processing time middleware
    @app.middleware("http")
    async def add_process_time_header(request: Request, call_next):
        start_time = time.time()
        response = await call_next(request)
        response.headers["X-Process-Time"] = str(time.time() - start_time)
        return response

    app.include_router(api_router, prefix=settings.API_V1_STR)

    @app.get("/health")
    async def health_check():
        return {
            "status": "healthy" if node is not None and node.started else "starting",
            "service": settings.PROJECT_NAME,
            "version": __version__,
        }

    @app.exception_handler(ErdsException)
    async def erds_exception_handler(request: Request, exc: ErdsException):
        logger.error(f"Request failed: {exc}")
        return JSONResponse(status_code=500, content={"detail": str(exc)})

    return app

