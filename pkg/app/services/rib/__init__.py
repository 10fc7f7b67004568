from app.services.rib.models import (
    LOCAL,
    LocalSource,
    PeerSource,
    RemovedRoute,
    RibDelta,
    RibEntry,
    RibUpdate,
    Route,
)
from app.services.rib.rib_service import ReachabilityRib, select_best
