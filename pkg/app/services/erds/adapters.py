"""
Common interface of the BP-side and BGP-side adapters.
"""

from abc import ABC, abstractmethod
from typing import AsyncIterator

from app.services.erds.events import ReachabilityEvent


class Adapter(ABC):
    """
    One side of the ERDS.

    ``listen`` yields events in the order the backend produced them and keeps
    yielding across backend reconnects. ``send`` never blocks on the backend;
    adapters queue outbound events and deliver them from their own task.
    """

    name: str = "adapter"

    async def start(self) -> None:
        pass

    async def stop(self) -> None:
        pass

    @abstractmethod
    def listen(self) -> AsyncIterator[ReachabilityEvent]:
        ...

    @abstractmethod
    async def send(self, event: ReachabilityEvent) -> None:
        ...
