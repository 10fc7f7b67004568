"""
Strongly typed reachability records carried by the DTN MP_REACH/MP_UNREACH attributes.

All records are immutable and validate their wire-format invariants on
construction, so any instance can be encoded.
"""

import ipaddress
import re
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Optional, Tuple, Union

from app.core.exceptions import InvariantViolation

AFI_DTN = 23042
MAX_ENTRIES = 255
MAX_ATTRIBUTES = 255
MAX_EID_OCTETS = 255
MAX_ATTRIBUTE_VALUE = 65535

IPAddress = Union[ipaddress.IPv4Address, ipaddress.IPv6Address]

_IPN_PATTERN = re.compile(r"ipn:([0-9]+)\.([0-9]+)")


class UriCode(IntEnum):
    """EID scheme codes, mirroring the Bundle Protocol scheme registry."""
    DTN = 1
    IPN = 2


class ClaSafi(IntEnum):
    """SAFI values identifying the convergence layer of the next hop."""
    MTCP = 0
    TCPCL_V3 = 1
    TCPCL_V4 = 2
    UDPCL = 3


KNOWN_SAFIS = frozenset(int(s) for s in ClaSafi)

SCHEME_PREFIXES = {
    UriCode.DTN: "dtn:",
    UriCode.IPN: "ipn:",
}


class EidAttributeType(IntEnum):
    """Well-known attribute types. Any 0-255 value is accepted and passed through."""
    NODE_ID = 1
    PUBLIC_KEY = 2


def _check_octet(name: str, value: int) -> None:
    if not isinstance(value, int) or not 0 <= value <= 255:
        raise InvariantViolation(f"{name} {value!r} does not fit one octet")


@dataclass(frozen=True)
class EndpointId:
    """A DTN endpoint identifier: scheme code plus the full URI text."""
    uri_code: int
    uri_text: str

    def __post_init__(self):
        _check_octet("URI code", self.uri_code)
        if not self.uri_text:
            raise InvariantViolation("EID text is empty")
        if len(self.uri_text.encode("utf-8")) > MAX_EID_OCTETS:
            raise InvariantViolation(f"EID '{self.uri_text[:32]}...' exceeds {MAX_EID_OCTETS} octets")

        prefix = SCHEME_PREFIXES.get(self.uri_code)
        if prefix is not None and not self.uri_text.startswith(prefix):
            raise InvariantViolation(
                f"EID '{self.uri_text}' does not match scheme code {self.uri_code} ({prefix})"
            )
        if self.uri_code == UriCode.IPN and not _IPN_PATTERN.fullmatch(self.uri_text):
            raise InvariantViolation(f"EID '{self.uri_text}' is not of the form ipn:<node>.<service>")

    @classmethod
    def parse(cls, text: str) -> "EndpointId":
        """
        Build an EID from its URI text, deriving the scheme code.

        Args:
            text: URI such as "ipn:5.1" or "dtn://node/svc"

        Returns:
            EndpointId instance

        Raises:
            InvariantViolation: If the scheme is unknown or the URI is malformed
        """
        for code, prefix in SCHEME_PREFIXES.items():
            if text.startswith(prefix):
                return cls(int(code), text)
        scheme = text.split(":", 1)[0] if ":" in text else text
        raise InvariantViolation(f"unknown EID scheme '{scheme}' in '{text}'")

    @property
    def ipn_numbers(self) -> Optional[Tuple[int, int]]:
        """(node, service) for ipn EIDs, None for other schemes."""
        match = _IPN_PATTERN.fullmatch(self.uri_text)
        if self.uri_code != UriCode.IPN or match is None:
            return None
        return int(match.group(1)), int(match.group(2))

    def __str__(self) -> str:
        return self.uri_text


@dataclass(frozen=True)
class ClaEndpoint:
    """Next-hop convergence layer endpoint: SAFI, IP address and port."""
    safi: int
    address: IPAddress
    port: int

    def __post_init__(self):
        _check_octet("SAFI", self.safi)
        if not isinstance(self.address, (ipaddress.IPv4Address, ipaddress.IPv6Address)):
            try:
                object.__setattr__(self, "address", ipaddress.ip_address(self.address))
            except ValueError:
                raise InvariantViolation(f"{self.address!r} is not an IP address")
        if not isinstance(self.port, int) or not 0 <= self.port <= 65535:
            raise InvariantViolation(f"port {self.port!r} out of range")

    @classmethod
    def from_host(cls, safi: int, host: str, port: int) -> "ClaEndpoint":
        try:
            address = ipaddress.ip_address(host)
        except ValueError:
            raise InvariantViolation(f"'{host}' is not an IP address")
        return cls(safi, address, port)

    @property
    def host(self) -> str:
        return str(self.address)

    def __str__(self) -> str:
        if self.address.version == 6:
            return f"[{self.address}]:{self.port}"
        return f"{self.address}:{self.port}"


@dataclass(frozen=True)
class EidAttribute:
    """Opaque type-length-value attribute bound to an EID."""
    attr_type: int
    value: bytes = b""

    def __post_init__(self):
        _check_octet("attribute type", self.attr_type)
        object.__setattr__(self, "value", bytes(self.value))
        if len(self.value) > MAX_ATTRIBUTE_VALUE:
            raise InvariantViolation(f"attribute value of {len(self.value)} octets exceeds {MAX_ATTRIBUTE_VALUE}")


@dataclass(frozen=True)
class EidEntry:
    """One advertised EID with its attributes."""
    eid: EndpointId
    attributes: Tuple[EidAttribute, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "attributes", tuple(self.attributes))
        if len(self.attributes) > MAX_ATTRIBUTES:
            raise InvariantViolation(f"{len(self.attributes)} attributes exceed {MAX_ATTRIBUTES}")


def _check_entries(entries: Tuple[EidEntry, ...]) -> None:
    if not entries:
        raise InvariantViolation("entry list is empty")
    if len(entries) > MAX_ENTRIES:
        raise InvariantViolation(f"{len(entries)} entries exceed the one-octet count")


@dataclass(frozen=True)
class ReachabilityAnnouncement:
    """EIDs reachable via one next-hop CLA endpoint (MP_REACH_NLRI)."""
    next_hop: ClaEndpoint
    entries: Tuple[EidEntry, ...]
    afi: int = AFI_DTN

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        if self.afi != AFI_DTN:
            raise InvariantViolation(f"AFI {self.afi} is not {AFI_DTN}")
        _check_entries(self.entries)

    @property
    def safi(self) -> int:
        return self.next_hop.safi

    @property
    def eids(self) -> Tuple[EndpointId, ...]:
        return tuple(e.eid for e in self.entries)


@dataclass(frozen=True)
class ReachabilityWithdrawal:
    """EIDs that are no longer reachable (MP_UNREACH_NLRI)."""
    safi: int
    entries: Tuple[EidEntry, ...]
    afi: int = AFI_DTN

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        _check_octet("SAFI", self.safi)
        if self.afi != AFI_DTN:
            raise InvariantViolation(f"AFI {self.afi} is not {AFI_DTN}")
        _check_entries(self.entries)
        for entry in self.entries:
            if entry.attributes:
                raise InvariantViolation(f"withdrawn EID {entry.eid} carries attributes")

    @classmethod
    def for_eids(cls, safi: int, eids: Iterable[EndpointId]) -> "ReachabilityWithdrawal":
        return cls(safi, tuple(EidEntry(eid) for eid in eids))

    @property
    def eids(self) -> Tuple[EndpointId, ...]:
        return tuple(e.eid for e in self.entries)
