"""
Main router for the status API.
"""

from fastapi import APIRouter

from app.api.endpoints import bundles, fib, health, peers, rib

# Create main API router
api_router = APIRouter()

# Include all endpoint routers
api_router.include_router(health.router, prefix="/health", tags=["Health"])
api_router.include_router(rib.router, prefix="/rib", tags=["RIB"])
api_router.include_router(fib.router, prefix="/fib", tags=["FIB"])
api_router.include_router(peers.router, prefix="/peers", tags=["Peers"])
api_router.include_router(bundles.router, prefix="/bundles", tags=["Bundles"])
