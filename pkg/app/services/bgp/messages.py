"""
BGP-4 message framing with the DTN multiprotocol path attributes.

Only what the reachability exchange needs is modelled: OPEN with
multiprotocol capabilities, UPDATE carrying ORIGIN, AS_PATH (2-octet ASNs)
and the DTN MP_REACH/MP_UNREACH attributes, KEEPALIVE and NOTIFICATION.
"""

import asyncio
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import List, Optional, Tuple, Union

from app.core.exceptions import BgpAttributeError, FramingError, MalformedNlri, UnknownMessageType
from app.services.nlri.codec import decode_mp_reach, decode_mp_unreach, encode_mp_reach, encode_mp_unreach
from app.services.nlri.models import ReachabilityAnnouncement, ReachabilityWithdrawal

MARKER = b"\xff" * 16
HEADER_SIZE = 19
MAX_MESSAGE_SIZE = 4096
BGP_VERSION = 4


class MessageType(IntEnum):
    OPEN = 1
    UPDATE = 2
    NOTIFICATION = 3
    KEEPALIVE = 4


class AttributeType(IntEnum):
    ORIGIN = 1
    AS_PATH = 2
    MP_REACH_NLRI = 14
    MP_UNREACH_NLRI = 15


class Origin(IntEnum):
    IGP = 0
    EGP = 1
    INCOMPLETE = 2


# Path attribute flags
FLAG_OPTIONAL = 0x80
FLAG_TRANSITIVE = 0x40
FLAG_PARTIAL = 0x20
FLAG_EXTENDED_LENGTH = 0x10

AS_SET = 1
AS_SEQUENCE = 2

# OPEN optional parameter and capability codes
PARAM_CAPABILITIES = 2
CAP_MULTIPROTOCOL = 1


class NotificationCode(IntEnum):
    MESSAGE_HEADER_ERROR = 1
    OPEN_MESSAGE_ERROR = 2
    UPDATE_MESSAGE_ERROR = 3
    HOLD_TIMER_EXPIRED = 4
    FSM_ERROR = 5
    CEASE = 6


# OPEN error subcodes
UNSUPPORTED_VERSION_NUMBER = 1
BAD_PEER_AS = 2
UNACCEPTABLE_HOLD_TIME = 6

# UPDATE error subcodes
MALFORMED_ATTRIBUTE_LIST = 1
OPTIONAL_ATTRIBUTE_ERROR = 9
MALFORMED_AS_PATH = 11

# Cease subcodes
ADMINISTRATIVE_SHUTDOWN = 2
CONNECTION_COLLISION_RESOLUTION = 7


@dataclass(frozen=True)
class OpenMessage:
    asn: int
    hold_time: int
    bgp_id: int
    capabilities: Tuple[Tuple[int, int], ...] = ()
    version: int = BGP_VERSION

    def __post_init__(self):
        object.__setattr__(self, "capabilities", tuple(tuple(c) for c in self.capabilities))


@dataclass(frozen=True)
class UpdateMessage:
    as_path: Tuple[int, ...] = ()
    origin: int = Origin.INCOMPLETE
    mp_reach: Optional[ReachabilityAnnouncement] = None
    mp_unreach: Optional[ReachabilityWithdrawal] = None

    def __post_init__(self):
        object.__setattr__(self, "as_path", tuple(self.as_path))
        if self.mp_reach is None and self.mp_unreach is None:
            raise BgpAttributeError("UPDATE carries neither MP_REACH_NLRI nor MP_UNREACH_NLRI")


@dataclass(frozen=True)
class KeepaliveMessage:
    pass


@dataclass(frozen=True)
class NotificationMessage:
    code: int
    subcode: int = 0
    data: bytes = b""


BgpMessage = Union[OpenMessage, UpdateMessage, KeepaliveMessage, NotificationMessage]

_MESSAGE_TYPES = frozenset(int(t) for t in MessageType)


def _encode_attribute(flags: int, attr_type: int, value: bytes) -> bytes:
    if len(value) > 255:
        return struct.pack("!BBH", flags | FLAG_EXTENDED_LENGTH, attr_type, len(value)) + value
    return struct.pack("!BBB", flags & ~FLAG_EXTENDED_LENGTH, attr_type, len(value)) + value


def attribute_size(value_length: int) -> int:
    """Octets one path attribute occupies for a value of the given length."""
    return (4 if value_length > 255 else 3) + value_length


def encode_as_path(as_path: Tuple[int, ...]) -> bytes:
    if not as_path:
        return b""
    if len(as_path) > 255:
        raise BgpAttributeError("AS path longer than one segment", subcode=MALFORMED_AS_PATH)
    for asn in as_path:
        if not 0 < asn <= 0xFFFF:
            raise BgpAttributeError(f"ASN {asn} does not fit two octets", subcode=MALFORMED_AS_PATH)
    return struct.pack(f"!BB{len(as_path)}H", AS_SEQUENCE, len(as_path), *as_path)


def _decode_as_path(value: bytes) -> Tuple[int, ...]:
    path: List[int] = []
    offset = 0
    while offset < len(value):
        if offset + 2 > len(value):
            raise BgpAttributeError("truncated AS_PATH segment header", subcode=MALFORMED_AS_PATH)
        segment_type, count = value[offset], value[offset + 1]
        offset += 2
        if segment_type != AS_SEQUENCE:
            raise BgpAttributeError(f"unsupported AS_PATH segment type {segment_type}", subcode=MALFORMED_AS_PATH)
        end = offset + 2 * count
        if end > len(value):
            raise BgpAttributeError("truncated AS_PATH segment", subcode=MALFORMED_AS_PATH)
        path.extend(struct.unpack(f"!{count}H", value[offset:end]))
        offset = end
    return tuple(path)


def _encode_open(m: OpenMessage) -> bytes:
    params = b""
    for afi, safi in m.capabilities:
        capability = struct.pack("!BBHBB", CAP_MULTIPROTOCOL, 4, afi, 0, safi)
        params += struct.pack("!BB", PARAM_CAPABILITIES, len(capability)) + capability
    if len(params) > 255:
        raise FramingError("OPEN optional parameters exceed 255 octets", subcode=2)
    return struct.pack("!BHHIB", m.version, m.asn, m.hold_time, m.bgp_id, len(params)) + params


def _decode_open(body: bytes) -> OpenMessage:
    if len(body) < 10:
        raise FramingError("OPEN body shorter than 10 octets")
    version, asn, hold_time, bgp_id, params_length = struct.unpack("!BHHIB", body[:10])
    params = body[10:]
    if len(params) != params_length:
        raise FramingError(f"OPEN parameter length {params_length} does not match {len(params)} octets")

    capabilities = []
    offset = 0
    while offset < len(params):
        if offset + 2 > len(params):
            raise FramingError("truncated OPEN parameter")
        param_type, length = params[offset], params[offset + 1]
        value = params[offset + 2:offset + 2 + length]
        if len(value) != length:
            raise FramingError("truncated OPEN parameter value")
        offset += 2 + length
        if param_type != PARAM_CAPABILITIES:
            continue

        cap_offset = 0
        while cap_offset + 2 <= len(value):
            code, cap_length = value[cap_offset], value[cap_offset + 1]
            cap_value = value[cap_offset + 2:cap_offset + 2 + cap_length]
            cap_offset += 2 + cap_length
            if code == CAP_MULTIPROTOCOL and len(cap_value) == 4:
                afi, _, safi = struct.unpack("!HBB", cap_value)
                capabilities.append((afi, safi))

    return OpenMessage(asn, hold_time, bgp_id, tuple(capabilities), version)


def _encode_update(m: UpdateMessage) -> bytes:
    attributes = [
        _encode_attribute(FLAG_TRANSITIVE, AttributeType.ORIGIN, bytes([m.origin])),
        _encode_attribute(FLAG_TRANSITIVE, AttributeType.AS_PATH, encode_as_path(m.as_path)),
    ]
    if m.mp_reach is not None:
        attributes.append(_encode_attribute(FLAG_OPTIONAL, AttributeType.MP_REACH_NLRI, encode_mp_reach(m.mp_reach)))
    if m.mp_unreach is not None:
        attributes.append(
            _encode_attribute(FLAG_OPTIONAL, AttributeType.MP_UNREACH_NLRI, encode_mp_unreach(m.mp_unreach))
        )
    path_attributes = b"".join(attributes)
    return struct.pack("!HH", 0, len(path_attributes)) + path_attributes


def _decode_update(body: bytes) -> UpdateMessage:
    if len(body) < 4:
        raise BgpAttributeError("UPDATE body shorter than 4 octets")
    withdrawn_length = struct.unpack("!H", body[:2])[0]
    if withdrawn_length:
        raise BgpAttributeError("IPv4 withdrawn routes are not supported")
    attributes_length = struct.unpack("!H", body[2:4])[0]
    if 4 + attributes_length != len(body):
        raise BgpAttributeError("path attribute length does not match the message (NLRI present?)")

    data = body[4:]
    origin = Origin.INCOMPLETE
    as_path: Tuple[int, ...] = ()
    mp_reach = None
    mp_unreach = None
    seen = set()
    offset = 0
    while offset < len(data):
        if offset + 3 > len(data):
            raise BgpAttributeError("truncated path attribute header")
        flags, attr_type = data[offset], data[offset + 1]
        if flags & FLAG_EXTENDED_LENGTH:
            if offset + 4 > len(data):
                raise BgpAttributeError("truncated extended-length attribute header")
            length = struct.unpack("!H", data[offset + 2:offset + 4])[0]
            offset += 4
        else:
            length = data[offset + 2]
            offset += 3
        value = data[offset:offset + length]
        if len(value) != length:
            raise BgpAttributeError(f"attribute {attr_type} truncated")
        offset += length

        if attr_type in seen:
            raise BgpAttributeError(f"attribute {attr_type} appears twice")
        seen.add(attr_type)

        if attr_type == AttributeType.ORIGIN:
            if length != 1 or value[0] > Origin.INCOMPLETE:
                raise BgpAttributeError("invalid ORIGIN", subcode=6)
            origin = value[0]
        elif attr_type == AttributeType.AS_PATH:
            as_path = _decode_as_path(value)
        elif attr_type == AttributeType.MP_REACH_NLRI:
            try:
                mp_reach = decode_mp_reach(value)
            except MalformedNlri as e:
                raise BgpAttributeError(str(e), subcode=OPTIONAL_ATTRIBUTE_ERROR, cause=e)
        elif attr_type == AttributeType.MP_UNREACH_NLRI:
            try:
                mp_unreach = decode_mp_unreach(value)
            except MalformedNlri as e:
                raise BgpAttributeError(str(e), subcode=OPTIONAL_ATTRIBUTE_ERROR, cause=e)
        elif not flags & FLAG_OPTIONAL:
            raise BgpAttributeError(f"unrecognized well-known attribute {attr_type}", subcode=2)

    return UpdateMessage(as_path, origin, mp_reach, mp_unreach)


def frame_message(m: BgpMessage) -> bytes:
    """
    Serialize a message with the 19-octet BGP header.

    Args:
        m: Message to frame

    Returns:
        Complete frame

    Raises:
        FramingError: If the frame would exceed 4096 octets
    """
    if isinstance(m, OpenMessage):
        message_type, body = MessageType.OPEN, _encode_open(m)
    elif isinstance(m, UpdateMessage):
        message_type, body = MessageType.UPDATE, _encode_update(m)
    elif isinstance(m, KeepaliveMessage):
        message_type, body = MessageType.KEEPALIVE, b""
    elif isinstance(m, NotificationMessage):
        message_type, body = MessageType.NOTIFICATION, struct.pack("!BB", m.code, m.subcode) + m.data
    else:
        raise TypeError(f"not a BGP message: {m!r}")

    length = HEADER_SIZE + len(body)
    if length > MAX_MESSAGE_SIZE:
        raise FramingError(f"message of {length} octets exceeds {MAX_MESSAGE_SIZE}")
    return MARKER + struct.pack("!HB", length, message_type) + body


def parse_header(header: bytes) -> Tuple[int, int]:
    """
    Validate a 19-octet header.

    Returns:
        Tuple of (total length, message type)

    Raises:
        FramingError: For a bad marker or length
        UnknownMessageType: For a type outside 1-4
    """
    if len(header) < HEADER_SIZE:
        raise FramingError(f"header of {len(header)} octets")
    if header[:16] != MARKER:
        raise FramingError("marker is not all ones", subcode=1)
    length, message_type = struct.unpack("!HB", header[16:HEADER_SIZE])
    if not HEADER_SIZE <= length <= MAX_MESSAGE_SIZE:
        raise FramingError(f"bad message length {length}")
    if message_type not in _MESSAGE_TYPES:
        raise UnknownMessageType(message_type)
    if message_type == MessageType.KEEPALIVE and length != HEADER_SIZE:
        raise FramingError(f"KEEPALIVE of length {length}")
    return length, message_type


def parse_message(frame: bytes) -> BgpMessage:
    """
    Parse one complete frame.

    Args:
        frame: Frame bytes, exactly one message

    Returns:
        Parsed message

    Raises:
        FramingError: Bad marker or length
        UnknownMessageType: Unknown type code
        BgpAttributeError: Undecodable UPDATE attributes
    """
    length, message_type = parse_header(frame)
    if length != len(frame):
        raise FramingError(f"length field {length} does not match frame of {len(frame)} octets")
    body = frame[HEADER_SIZE:]

    if message_type == MessageType.OPEN:
        return _decode_open(body)
    if message_type == MessageType.UPDATE:
        return _decode_update(body)
    if message_type == MessageType.NOTIFICATION:
        if len(body) < 2:
            raise FramingError("NOTIFICATION shorter than 2 octets")
        return NotificationMessage(body[0], body[1], body[2:])
    return KeepaliveMessage()


async def read_frame(reader: asyncio.StreamReader) -> bytes:
    """
    Read exactly one frame from a stream.

    Raises:
        asyncio.IncompleteReadError: If the stream closes mid-frame
        FramingError / UnknownMessageType: If the header is invalid
    """
    header = await reader.readexactly(HEADER_SIZE)
    length, _ = parse_header(header)
    body = await reader.readexactly(length - HEADER_SIZE)
    return header + body


def update_has_dtn_attributes(frame: bytes) -> bool:
    """
    Byte-level check whether a framed UPDATE carries an MP attribute with the DTN AFI.

    Used to sniff outbound traffic; it does not decode the NLRI itself.
    """
    if len(frame) < HEADER_SIZE + 4 or frame[18] != MessageType.UPDATE:
        return False
    attributes_length = struct.unpack("!H", frame[21:23])[0]
    data = frame[23:23 + attributes_length]
    offset = 0
    while offset + 3 <= len(data):
        flags, attr_type = data[offset], data[offset + 1]
        if flags & FLAG_EXTENDED_LENGTH:
            length = struct.unpack("!H", data[offset + 2:offset + 4])[0]
            offset += 4
        else:
            length = data[offset + 2]
            offset += 3
        value = data[offset:offset + length]
        offset += length
        if attr_type in (AttributeType.MP_REACH_NLRI, AttributeType.MP_UNREACH_NLRI) and value[:2] == b"\x5a\x02":
            return True
    return False
