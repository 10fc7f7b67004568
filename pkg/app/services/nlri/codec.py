"""
Bit-exact codec for the DTN MP_REACH_NLRI and MP_UNREACH_NLRI attribute values.

MP_REACH_NLRI value layout (all integers big-endian):

    AFI (2) = 23042 | SAFI (1) | NHNA length in bits (1) | NHNA (address, port)
    | Number of NLRI (1) | EID entries

MP_UNREACH_NLRI value layout:

    AFI (2) | SAFI (1) | Number of NLRI (1) | EID entries

EID entry layout:

    URI code (1) | EID length (1) | EID UTF-8 | attribute count (1)
    | attributes: type (1) | length (2) | value

The NHNA length counts bits (144 for IPv6 plus port), unlike RFC 4760 which
counts octets. Decoders are strict: trailing bytes are an error.
"""

import ipaddress
import struct
from typing import List, Tuple

from app.core.exceptions import (
    InvariantViolation,
    MalformedNlri,
    NlriErrorCategory,
    UnsupportedNhnaLength,
    UnsupportedSafi,
)
from app.services.nlri.models import (
    AFI_DTN,
    KNOWN_SAFIS,
    ClaEndpoint,
    EidAttribute,
    EidEntry,
    EndpointId,
    ReachabilityAnnouncement,
    ReachabilityWithdrawal,
)

NHNA_BITS_IPV4 = 48
NHNA_BITS_IPV6 = 144


class _Reader:
    """Cursor over an attribute value; every short read is a truncation error."""

    def __init__(self, data: bytes):
        self.data = bytes(data)
        self.offset = 0

    @property
    def remaining(self) -> int:
        return len(self.data) - self.offset

    def take(self, size: int, what: str) -> bytes:
        if self.remaining < size:
            raise MalformedNlri(
                NlriErrorCategory.TRUNCATED,
                f"need {size} octets for {what}, {self.remaining} left",
                self.offset,
            )
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u16(self, what: str) -> int:
        return struct.unpack("!H", self.take(2, what))[0]


def encode_nhna(endpoint: ClaEndpoint) -> Tuple[int, bytes]:
    """
    Encode a next-hop CLA endpoint as address bytes followed by the port.

    Args:
        endpoint: CLA endpoint to encode

    Returns:
        Tuple of (length in bits, encoded bytes)

    Raises:
        InvariantViolation: If the SAFI has no known address format
    """
    if endpoint.safi not in KNOWN_SAFIS:
        raise InvariantViolation(f"SAFI {endpoint.safi} has no next-hop address format")

    data = endpoint.address.packed + struct.pack("!H", endpoint.port)
    return len(data) * 8, data


def decode_nhna(safi: int, bit_length: int, data: bytes) -> ClaEndpoint:
    """
    Decode a next-hop CLA endpoint.

    Args:
        safi: SAFI the endpoint belongs to
        bit_length: Value of the NHNA length field
        data: The NHNA octets

    Returns:
        Decoded CLA endpoint

    Raises:
        UnsupportedSafi: If the SAFI is unknown
        UnsupportedNhnaLength: If bit_length is not 48 or 144
        MalformedNlri: If data does not match bit_length
    """
    if safi not in KNOWN_SAFIS:
        raise UnsupportedSafi(safi)
    if bit_length not in (NHNA_BITS_IPV4, NHNA_BITS_IPV6):
        raise UnsupportedNhnaLength(bit_length)
    if len(data) * 8 != bit_length:
        raise MalformedNlri(
            NlriErrorCategory.TRUNCATED,
            f"NHNA has {len(data)} octets, length field says {bit_length} bits",
        )

    if bit_length == NHNA_BITS_IPV4:
        address = ipaddress.IPv4Address(data[:4])
    else:
        address = ipaddress.IPv6Address(data[:16])
    port = struct.unpack("!H", data[-2:])[0]
    return ClaEndpoint(safi, address, port)


def encode_eid_entry(entry: EidEntry) -> bytes:
    """Encode one EID entry including its attribute list."""
    eid_bytes = entry.eid.uri_text.encode("utf-8")
    parts = [
        struct.pack("!BB", entry.eid.uri_code, len(eid_bytes)),
        eid_bytes,
        struct.pack("!B", len(entry.attributes)),
    ]
    for attribute in entry.attributes:
        parts.append(struct.pack("!BH", attribute.attr_type, len(attribute.value)))
        parts.append(attribute.value)
    return b"".join(parts)


def _decode_eid_entry(reader: _Reader, allow_attributes: bool) -> EidEntry:
    start = reader.offset
    uri_code = reader.u8("URI code")
    eid_length = reader.u8("EID length")
    if eid_length == 0:
        raise MalformedNlri(NlriErrorCategory.INVALID_EID, "EID length is zero", start)
    raw = reader.take(eid_length, "EID value")
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise MalformedNlri(NlriErrorCategory.INVALID_UTF8, str(e), start)
    try:
        eid = EndpointId(uri_code, text)
    except InvariantViolation as e:
        raise MalformedNlri(NlriErrorCategory.INVALID_EID, e.detail, start)

    count = reader.u8("attribute count")
    if count and not allow_attributes:
        raise MalformedNlri(
            NlriErrorCategory.NONZERO_ATTRIBUTES,
            f"withdrawn EID {text} carries {count} attributes",
            start,
        )

    attributes = []
    for _ in range(count):
        attr_type = reader.u8("attribute type")
        length = reader.u16("attribute length")
        attributes.append(EidAttribute(attr_type, reader.take(length, "attribute value")))
    return EidEntry(eid, tuple(attributes))


def _decode_entries(reader: _Reader, allow_attributes: bool) -> List[EidEntry]:
    count_offset = reader.offset
    count = reader.u8("number of NLRI")
    if count == 0:
        raise MalformedNlri(NlriErrorCategory.COUNT_MISMATCH, "number of NLRI is zero", count_offset)

    entries = []
    for index in range(count):
        if reader.remaining == 0:
            raise MalformedNlri(
                NlriErrorCategory.COUNT_MISMATCH,
                f"number of NLRI is {count} but only {index} entries present",
                reader.offset,
            )
        entries.append(_decode_eid_entry(reader, allow_attributes))

    if reader.remaining:
        raise MalformedNlri(
            NlriErrorCategory.TRAILING_BYTES,
            f"{reader.remaining} octets after the last entry",
            reader.offset,
        )
    return entries


def _decode_header(reader: _Reader) -> int:
    afi = reader.u16("AFI")
    if afi != AFI_DTN:
        raise MalformedNlri(NlriErrorCategory.BAD_AFI, f"AFI {afi} is not {AFI_DTN}", 0)
    safi = reader.u8("SAFI")
    if safi not in KNOWN_SAFIS:
        raise UnsupportedSafi(safi, 2)
    return safi


def encode_mp_reach(announcement: ReachabilityAnnouncement) -> bytes:
    """
    Encode an announcement as an MP_REACH_NLRI attribute value.

    Args:
        announcement: Announcement to encode

    Returns:
        Attribute value bytes (without the path attribute header)

    Raises:
        InvariantViolation: If the announcement cannot be represented
    """
    bit_length, nhna = encode_nhna(announcement.next_hop)
    parts = [
        struct.pack("!HBB", announcement.afi, announcement.next_hop.safi, bit_length),
        nhna,
        struct.pack("!B", len(announcement.entries)),
    ]
    parts.extend(encode_eid_entry(entry) for entry in announcement.entries)
    return b"".join(parts)


def decode_mp_reach(data: bytes) -> ReachabilityAnnouncement:
    """
    Decode an MP_REACH_NLRI attribute value.

    Args:
        data: Attribute value bytes

    Returns:
        Decoded announcement

    Raises:
        UnsupportedSafi: If the SAFI is unknown
        UnsupportedNhnaLength: If the NHNA length is not 48 or 144
        MalformedNlri: For every other decoding failure
    """
    reader = _Reader(data)
    safi = _decode_header(reader)
    length_offset = reader.offset
    bit_length = reader.u8("NHNA length")
    if bit_length not in (NHNA_BITS_IPV4, NHNA_BITS_IPV6):
        raise UnsupportedNhnaLength(bit_length, length_offset)
    next_hop = decode_nhna(safi, bit_length, reader.take(bit_length // 8, "next hop network address"))
    entries = _decode_entries(reader, allow_attributes=True)
    return ReachabilityAnnouncement(next_hop, tuple(entries))


def encode_mp_unreach(withdrawal: ReachabilityWithdrawal) -> bytes:
    """
    Encode a withdrawal as an MP_UNREACH_NLRI attribute value.

    Args:
        withdrawal: Withdrawal to encode

    Returns:
        Attribute value bytes (without the path attribute header)

    Raises:
        InvariantViolation: If the withdrawal cannot be represented
    """
    if withdrawal.safi not in KNOWN_SAFIS:
        raise InvariantViolation(f"SAFI {withdrawal.safi} is not supported")
    parts = [struct.pack("!HBB", withdrawal.afi, withdrawal.safi, len(withdrawal.entries))]
    parts.extend(encode_eid_entry(entry) for entry in withdrawal.entries)
    return b"".join(parts)


def decode_mp_unreach(data: bytes) -> ReachabilityWithdrawal:
    """
    Decode an MP_UNREACH_NLRI attribute value.

    Args:
        data: Attribute value bytes

    Returns:
        Decoded withdrawal

    Raises:
        UnsupportedSafi: If the SAFI is unknown
        MalformedNlri: For every other decoding failure
    """
    reader = _Reader(data)
    safi = _decode_header(reader)
    entries = _decode_entries(reader, allow_attributes=False)
    return ReachabilityWithdrawal(safi, tuple(entries))
