"""
Configuration settings for the EID Reachability Distribution Service.

Two layers live here: process-wide tunables read from the environment
(``Settings``) and the per-node TOML file describing one ERDS instance
(``ErdsConfig``).
"""

import ipaddress
import sys
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, BaseSettings, Field, ValidationError, root_validator, validator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from app.core.exceptions import ConfigError


class Settings(BaseSettings):
    PROJECT_NAME: str = "EID Reachability Distribution Service"
    API_V1_STR: str = "/api/v1"

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_DIR: str = "logs"

    # BGP settings
    DEFAULT_HOLD_TIME: int = 90
    OPEN_HOLD_TIME: int = 240
    DEFAULT_BGP_PORT: int = 179

    # Fixed backoffs, no jitter, so scenario runs stay deterministic
    CONNECT_RETRY_SECONDS: float = 1.0
    ADAPTER_RETRY_SECONDS: float = 1.0
    TIMER_RESOLUTION: float = 0.1

    # CLA probe
    PROBE_TIMEOUT_SECONDS: float = 5.0
    MAX_BUNDLE_SIZE: int = 1048576

    # Scenario harness
    EXPECT_POLL_INTERVAL: float = 0.1
    EXPECT_DEFAULT_TIMEOUT: float = 5.0

    class Config:
        case_sensitive = True
        env_prefix = "ERDS_"
        env_file = ".env"


@lru_cache()
def get_settings():
    return Settings()


settings = get_settings()


def parse_endpoint(value: str, default_port: Optional[int] = None) -> Tuple[str, int]:
    """
    Split a "host:port" string, accepting bracketed IPv6 literals.

    Args:
        value: Endpoint text such as "127.0.0.1:4556" or "[::1]:179"
        default_port: Port to use when the text carries none

    Returns:
        Tuple of (host, port)

    Raises:
        ValueError: If the text has no usable port
    """
    text = value.strip()
    if text.startswith("["):
        host, _, rest = text[1:].partition("]")
        port_text = rest[1:] if rest.startswith(":") else ""
    elif text.count(":") == 1:
        host, _, port_text = text.partition(":")
    else:
        host, port_text = text, ""

    if not port_text:
        if default_port is None:
            raise ValueError(f"endpoint '{value}' has no port")
        return host, default_port

    port = int(port_text)
    if not 0 <= port <= 65535:
        raise ValueError(f"port {port} out of range")
    return host, port


class NodeSection(BaseModel):
    """The [node] table: identity of this ERDS instance."""
    name: Optional[str] = None
    asn: int = Field(..., ge=1, le=65535)
    bgp_id: int
    rib_dump_path: Optional[str] = None
    api: Optional[str] = None

    @validator("bgp_id", pre=True)
    def parse_bgp_id(cls, v):
        if isinstance(v, str):
            return int(ipaddress.IPv4Address(v))
        if not 0 < int(v) < 2 ** 32:
            raise ValueError("bgp_id must be a non-zero 32-bit value")
        return int(v)

    @validator("api")
    def validate_api(cls, v):
        if v is not None:
            parse_endpoint(v)
        return v


class ClaSection(BaseModel):
    """One [[cla]] table: a local convergence layer endpoint."""
    name: str
    safi: int = Field(..., ge=0, le=255)
    host: str
    port: int = Field(..., ge=0, le=65535)

    @validator("host")
    def validate_host(cls, v):
        ipaddress.ip_address(v)
        return v


class BpSection(BaseModel):
    """The [bp] table: which BP adapter to use and where the agent listens."""
    adapter: str = "sim"
    listen: str

    @validator("adapter")
    def validate_adapter(cls, v):
        if v != "sim":
            raise ValueError(f"unknown BP adapter '{v}'")
        return v

    @validator("listen")
    def validate_listen(cls, v):
        parse_endpoint(v)
        return v


class BgpSection(BaseModel):
    """The [bgp] table: which BGP adapter to use and where the speaker listens."""
    adapter: str = "speaker"
    listen: str = f"0.0.0.0:{settings.DEFAULT_BGP_PORT}"

    @validator("adapter")
    def validate_adapter(cls, v):
        if v != "speaker":
            raise ValueError(f"unknown BGP adapter '{v}'")
        return v

    @validator("listen")
    def validate_listen(cls, v):
        parse_endpoint(v, default_port=settings.DEFAULT_BGP_PORT)
        return v


class PeerSection(BaseModel):
    """One [[peer]] table."""
    host: str
    port: int = Field(settings.DEFAULT_BGP_PORT, ge=1, le=65535)
    remote_asn: int = Field(..., ge=1, le=65535)
    mode: str = "active"
    name: Optional[str] = None
    advertise_dtn: bool = True

    @validator("mode")
    def validate_mode(cls, v):
        if v not in ("active", "passive"):
            raise ValueError("mode must be 'active' or 'passive'")
        return v

    @property
    def peer_id(self) -> str:
        return self.name or f"as{self.remote_asn}"


class TimersSection(BaseModel):
    """The [timers] table."""
    hold: int = Field(settings.DEFAULT_HOLD_TIME, ge=0, le=65535)
    connect_retry: float = Field(settings.CONNECT_RETRY_SECONDS, gt=0)

    @validator("hold")
    def validate_hold(cls, v):
        if v in (1, 2):
            raise ValueError("hold time must be 0 or at least 3 seconds")
        return v


class ErdsConfig(BaseModel):
    """Complete configuration of one node: exactly one BP and one BGP adapter."""
    node: NodeSection
    cla: List[ClaSection] = []
    bp: BpSection
    bgp: BgpSection = BgpSection()
    peer: List[PeerSection] = []
    timers: TimersSection = TimersSection()

    @root_validator(skip_on_failure=True)
    def validate_cross_references(cls, values):
        node = values["node"]
        names = [c.name for c in values.get("cla", [])]
        if len(names) != len(set(names)):
            raise ValueError("CLA names must be unique")

        peer_ids = [p.peer_id for p in values.get("peer", [])]
        if len(peer_ids) != len(set(peer_ids)):
            raise ValueError("peer names must be unique")

        for peer in values.get("peer", []):
            if peer.remote_asn == node.asn:
                raise ValueError(f"peer {peer.peer_id} uses the local ASN; only eBGP is supported")
        return values

    @property
    def node_name(self) -> str:
        return self.node.name or f"as{self.node.asn}"

    def cla_by_name(self) -> Dict[str, ClaSection]:
        return {c.name: c for c in self.cla}


def build_node_config(data: Dict[str, Any], source: str = "<inline>") -> ErdsConfig:
    """
    Validate an already-parsed node configuration table.

    Args:
        data: Parsed TOML table
        source: Where the table came from, for error messages

    Returns:
        Validated configuration

    Raises:
        ConfigError: If validation fails
    """
    try:
        return ErdsConfig.parse_obj(data)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"])
        raise ConfigError(source, f"{location}: {first['msg']}")


def load_node_config(path: str) -> ErdsConfig:
    """
    Load and validate a node TOML file.

    Args:
        path: Path to the TOML file

    Returns:
        Validated configuration

    Raises:
        ConfigError: If the file is missing, unparsable or invalid
    """
    try:
        with Path(path).open("rb") as f:
            data = tomllib.load(f)
    except FileNotFoundError:
        raise ConfigError(path, "file not found")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(path, f"invalid TOML: {e}")

    return build_node_config(data, source=path)
