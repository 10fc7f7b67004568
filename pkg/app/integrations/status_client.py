"""
Client for a node's status API.
"""

from typing import Any, Dict, Optional

import httpx

from app.config import get_settings
from app.core.exceptions import AdapterError
from app.core.logging import logger

settings = get_settings()


class StatusClient:
    """
    Client for reading the RIB of a running node.
    """

    def __init__(self, host: str, port: int, timeout: float = 5.0):
        self.base_url = f"http://{host}:{port}{settings.API_V1_STR}"
        self.timeout = httpx.Timeout(timeout)

    async def _get(self, endpoint: str, params: Optional[Dict[str, str]] = None) -> httpx.Response:
        """
        Make a GET request to the status API.

        Args:
            endpoint: API endpoint
            params: Query parameters

        Returns:
            The response

        Raises:
            AdapterError: If the node cannot be reached or answers with an error
        """
        url = f"{self.base_url}/{endpoint.lstrip('/')}"
        try:
            async with httpx.AsyncClient(timeout=self.timeout) as client:
                response = await client.get(url, params=params)
                response.raise_for_status()
                return response
        except httpx.HTTPStatusError as e:
            logger.error(f"HTTP error when calling status API: {str(e)}")
            try:
                detail = e.response.json().get("detail", str(e))
            except Exception:
                detail = str(e)
            raise AdapterError("status", detail)
        except httpx.HTTPError as e:
            logger.error(f"Error calling status API at {url}: {str(e)}")
            raise AdapterError("status", str(e))

    async def rib_text(self) -> str:
        """RIB dump, one ``eid | next_hop | safi | as_path | source | attr_count`` line per EID."""
        return (await self._get("/rib", params={"format": "text"})).text

    async def rib(self) -> Dict[str, Any]:
        return (await self._get("/rib")).json()
