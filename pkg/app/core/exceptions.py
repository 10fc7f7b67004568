"""
Custom exceptions for the EID Reachability Distribution Service.
"""

from enum import Enum
from typing import Any, Optional


class ErdsException(Exception):
    """Base exception for all reachability service exceptions."""

    def __init__(self, message: str):
        self.message = message
        super().__init__(self.message)


# Codec errors

class InvariantViolation(ErdsException):
    """Exception raised when a value breaks a wire-format invariant."""

    def __init__(self, detail: str):
        self.detail = detail
        super().__init__(f"Invariant violated: {detail}")


class NlriErrorCategory(str, Enum):
    """Diagnostic categories for undecodable NLRI payloads."""
    TRUNCATED = "truncated"
    BAD_AFI = "bad_afi"
    UNKNOWN_SAFI = "unknown_safi"
    BAD_NHNA_LENGTH = "bad_nhna_length"
    COUNT_MISMATCH = "count_mismatch"
    INVALID_UTF8 = "invalid_utf8"
    INVALID_EID = "invalid_eid"
    NONZERO_ATTRIBUTES = "nonzero_attributes"
    TRAILING_BYTES = "trailing_bytes"


class MalformedNlri(ErdsException):
    """Exception raised when an MP_REACH/MP_UNREACH payload cannot be decoded."""

    def __init__(self, category: NlriErrorCategory, detail: str, offset: Optional[int] = None):
        self.category = category
        self.detail = detail
        self.offset = offset
        where = f" at offset {offset}" if offset is not None else ""
        super().__init__(f"Malformed NLRI ({category.value}){where}: {detail}")


class UnsupportedSafi(MalformedNlri):
    """Exception raised for a SAFI this node has no codec for."""

    def __init__(self, safi: int, offset: Optional[int] = None):
        self.safi = safi
        super().__init__(NlriErrorCategory.UNKNOWN_SAFI, f"unsupported SAFI {safi}", offset)


class UnsupportedNhnaLength(MalformedNlri):
    """Exception raised when the NHNA bit length is neither 48 nor 144."""

    def __init__(self, bit_length: int, offset: Optional[int] = None):
        self.bit_length = bit_length
        super().__init__(
            NlriErrorCategory.BAD_NHNA_LENGTH,
            f"NHNA length {bit_length} bits is not 48 or 144",
            offset,
        )


# BGP errors

class BgpError(ErdsException):
    """Base class for errors that map onto a BGP NOTIFICATION."""

    code: int = 0
    subcode: int = 0

    def __init__(self, message: str, code: Optional[int] = None, subcode: Optional[int] = None):
        if code is not None:
            self.code = code
        if subcode is not None:
            self.subcode = subcode
        super().__init__(message)


class FramingError(BgpError):
    """Exception raised for a bad marker or bad message length."""

    def __init__(self, detail: str, subcode: int = 2):
        self.detail = detail
        super().__init__(f"Framing error: {detail}", code=1, subcode=subcode)


class UnknownMessageType(BgpError):
    """Exception raised when the header carries a type outside 1-4."""

    def __init__(self, message_type: int):
        self.message_type = message_type
        super().__init__(f"Unknown BGP message type {message_type}", code=1, subcode=3)


class BgpAttributeError(BgpError):
    """Exception raised when an UPDATE path attribute cannot be processed."""

    def __init__(self, detail: str, subcode: int = 1, cause: Optional[Exception] = None):
        self.detail = detail
        self.cause = cause
        super().__init__(f"Path attribute error: {detail}", code=3, subcode=subcode)


class NotificationSent(BgpError):
    """Exception raised when the local side rejects the peer with a NOTIFICATION."""

    def __init__(self, code: int, subcode: int, detail: str, data: bytes = b""):
        self.detail = detail
        self.data = data
        super().__init__(f"NOTIFICATION {code}/{subcode} sent: {detail}", code=code, subcode=subcode)


class OversizeEntry(ErdsException):
    """Exception raised when one EID entry cannot fit in a single UPDATE."""

    def __init__(self, eid: str, size: int, limit: int):
        self.eid = eid
        self.size = size
        self.limit = limit
        super().__init__(f"EID entry {eid} needs {size} octets, UPDATE budget is {limit}")


# RIB errors

class LoopDetected(ErdsException):
    """Exception raised when an announcement's AS path contains the local ASN.

    The RIB has already removed the announcing peer's earlier routes for the
    listed EIDs when this is raised; ``delta`` holds that change.
    """

    def __init__(self, peer_id: str, asn: int, as_path: Any, delta: Any = None):
        self.peer_id = peer_id
        self.asn = asn
        self.as_path = as_path
        self.delta = delta
        super().__init__(f"AS path {list(as_path)} from {peer_id} contains local AS {asn}")


# ERDS / BP errors

class UnknownCla(ErdsException):
    """Exception raised when a registration names a CLA that is not configured."""

    def __init__(self, cla_name: str):
        self.cla_name = cla_name
        super().__init__(f"Unknown CLA: {cla_name}")


class AdapterError(ErdsException):
    """Exception raised when an adapter loses or cannot reach its backend."""

    def __init__(self, adapter: str, detail: str):
        self.adapter = adapter
        self.detail = detail
        super().__init__(f"Adapter {adapter} error: {detail}")


class AgentProtocolError(ErdsException):
    """Exception raised for an invalid agent protocol line or an error reply."""

    def __init__(self, detail: str):
        self.detail = detail
        super().__init__(f"Agent protocol error: {detail}")


class ClaProbeError(ErdsException):
    """Base exception for failed CLA probes."""

    def __init__(self, target: str, detail: str):
        self.target = target
        self.detail = detail
        super().__init__(f"CLA probe to {target} failed: {detail}")


class ProbeConnectionRefused(ClaProbeError):
    """Exception raised when the probe target refuses the connection."""

    def __init__(self, target: str):
        super().__init__(target, "connection refused")


class ProbeTimeout(ClaProbeError):
    """Exception raised when the probe does not complete in time."""

    def __init__(self, target: str, timeout: float):
        self.timeout = timeout
        super().__init__(target, f"timed out after {timeout}s")


# Configuration and harness errors

class ConfigError(ErdsException):
    """Exception raised for an invalid node or scenario configuration."""

    def __init__(self, source: str, detail: str):
        self.source = source
        self.detail = detail
        super().__init__(f"Configuration error in {source}: {detail}")


class ScenarioError(ErdsException):
    """Exception raised when a scenario event cannot be executed."""

    def __init__(self, step: str, detail: str):
        self.step = step
        self.detail = detail
        super().__init__(f"Scenario step {step} failed: {detail}")


class ScenarioSetupError(ScenarioError):
    """Exception raised when a scenario topology cannot be started."""

    def __init__(self, detail: str):
        super().__init__("setup", detail)
