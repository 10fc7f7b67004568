import ipaddress
import random

import pytest
from hypothesis import given, settings as hypothesis_settings, strategies as st

from app.core.exceptions import (
    InvariantViolation,
    MalformedNlri,
    NlriErrorCategory,
    UnsupportedNhnaLength,
    UnsupportedSafi,
)
from app.services.nlri.codec import (
    decode_mp_reach,
    decode_mp_unreach,
    decode_nhna,
    encode_mp_reach,
    encode_mp_unreach,
    encode_nhna,
)
from app.services.nlri.models import (
    AFI_DTN,
    MAX_ATTRIBUTE_VALUE,
    MAX_ATTRIBUTES,
    MAX_ENTRIES,
    ClaEndpoint,
    EidAttribute,
    EidEntry,
    EndpointId,
    ReachabilityAnnouncement,
    ReachabilityWithdrawal,
)


def test_encode_ipv6_announcement_matches_golden_vector(load_hex):
    """Test the IPv6 MP_REACH layout, NHNA length counted in bits."""
    announcement = ReachabilityAnnouncement(
        ClaEndpoint.from_host(0, "2001:db8::1", 4556),
        (EidEntry(EndpointId.parse("ipn:5.1")),),
    )
    assert encode_mp_reach(announcement) == load_hex("mp_reach_ipv6_ipn_5_1.hex")


def test_decode_ipv4_announcement_with_attribute(load_hex):
    """Test decoding a 48-bit NHNA and an EID attribute."""
    announcement = decode_mp_reach(load_hex("mp_reach_ipv4_dtn_attrs.hex"))
    assert announcement.afi == AFI_DTN
    assert announcement.safi == 1
    assert announcement.next_hop == ClaEndpoint.from_host(1, "10.0.0.2", 4556)
    assert announcement.eids == (EndpointId.parse("dtn://c/"),)
    assert announcement.entries[0].attributes == (EidAttribute(1, b"ipn"),)


def test_encode_withdrawal_matches_golden_vector(load_hex):
    withdrawal = ReachabilityWithdrawal.for_eids(0, [EndpointId.parse("ipn:5.1")])
    assert encode_mp_unreach(withdrawal) == load_hex("mp_unreach_ipn_5_1.hex")
    assert decode_mp_unreach(load_hex("mp_unreach_ipn_5_1.hex")) == withdrawal


def test_nhna_bit_lengths():
    """Test that IPv4 endpoints use 48 bits and IPv6 endpoints 144."""
    assert encode_nhna(ClaEndpoint.from_host(0, "10.0.0.2", 4556))[0] == 48
    assert encode_nhna(ClaEndpoint.from_host(0, "::1", 4556))[0] == 144


def test_decode_nhna_rejects_octet_length():
    """Test that an RFC 4760 style octet count is not accepted as a bit count."""
    with pytest.raises(UnsupportedNhnaLength) as exc_info:
        decode_nhna(0, 18, bytes(18))
    assert exc_info.value.bit_length == 18


def test_decode_rejects_wrong_afi(load_hex):
    data = bytearray(load_hex("mp_reach_ipv6_ipn_5_1.hex"))
    data[0:2] = (1).to_bytes(2, "big")
    with pytest.raises(MalformedNlri) as exc_info:
        decode_mp_reach(bytes(data))
    assert exc_info.value.category == NlriErrorCategory.BAD_AFI


def test_decode_rejects_unknown_safi(load_hex):
    data = bytearray(load_hex("mp_reach_ipv6_ipn_5_1.hex"))
    data[2] = 9
    with pytest.raises(UnsupportedSafi) as exc_info:
        decode_mp_reach(bytes(data))
    assert exc_info.value.safi == 9


def test_decode_rejects_trailing_bytes(load_hex):
    with pytest.raises(MalformedNlri) as exc_info:
        decode_mp_reach(load_hex("mp_reach_ipv6_ipn_5_1.hex") + b"\x00")
    assert exc_info.value.category == NlriErrorCategory.TRAILING_BYTES


def test_decode_rejects_count_mismatch(load_hex):
    data = bytearray(load_hex("mp_reach_ipv6_ipn_5_1.hex"))
    # Number of NLRI sits right after the 18-octet NHNA
    data[22] = 2
    with pytest.raises(MalformedNlri) as exc_info:
        decode_mp_reach(bytes(data))
    assert exc_info.value.category == NlriErrorCategory.COUNT_MISMATCH


def test_decode_rejects_truncated_value(load_hex):
    with pytest.raises(MalformedNlri) as exc_info:
        decode_mp_reach(load_hex("mp_reach_ipv6_ipn_5_1.hex")[:-3])
    assert exc_info.value.category == NlriErrorCategory.TRUNCATED


def test_withdrawn_entry_with_attributes_is_rejected(load_hex):
    data = bytearray(load_hex("mp_unreach_ipn_5_1.hex"))
    data[-1] = 1
    data += b"\x01\x00\x00"
    with pytest.raises(MalformedNlri) as exc_info:
        decode_mp_unreach(bytes(data))
    assert exc_info.value.category == NlriErrorCategory.NONZERO_ATTRIBUTES


def test_invalid_utf8_eid_is_rejected():
    data = bytes.fromhex("5a02 0030 7f000001 11cc 01 07 02") + b"\xff" * 2 + bytes(1)
    with pytest.raises(MalformedNlri) as exc_info:
        decode_mp_reach(data)
    assert exc_info.value.category == NlriErrorCategory.INVALID_UTF8


def test_models_enforce_invariants():
    with pytest.raises(InvariantViolation):
        EndpointId.parse("http://example.com")
    with pytest.raises(InvariantViolation):
        EndpointId.parse("ipn:5")
    with pytest.raises(InvariantViolation):
        EndpointId(2, "ipn:" + "1" * 300 + ".1")
    with pytest.raises(InvariantViolation):
        ClaEndpoint.from_host(256, "127.0.0.1", 4556)
    with pytest.raises(InvariantViolation):
        EidAttribute(1, bytes(65536))
    with pytest.raises(InvariantViolation):
        ReachabilityAnnouncement(ClaEndpoint.from_host(0, "127.0.0.1", 1), ())
    with pytest.raises(InvariantViolation):
        ReachabilityWithdrawal(0, (EidEntry(EndpointId.parse("ipn:1.1"), (EidAttribute(1),)),))


@pytest.mark.parametrize("text", ["ipn:5.1\n", "ipn:\u0665.1", "ipn:5.\u0661", "ipn:5.1 "])
def test_ipn_eid_needs_ascii_digits_and_nothing_after(text):
    with pytest.raises(InvariantViolation):
        EndpointId.parse(text)


def test_unknown_uri_code_round_trips():
    """Test that scheme codes without a known prefix are carried opaquely."""
    announcement = ReachabilityAnnouncement(
        ClaEndpoint.from_host(2, "10.1.2.3", 4557),
        (EidEntry(EndpointId(7, "opaque-eid")),),
    )
    assert decode_mp_reach(encode_mp_reach(announcement)) == announcement


# Hypothesis strategies

eids = st.one_of(
    st.builds(lambda n, s: EndpointId.parse(f"ipn:{n}.{s}"), st.integers(0, 2**32), st.integers(0, 2**16)),
    st.builds(lambda name: EndpointId.parse(f"dtn://{name}/"), st.text("abcdefghijklmnop0123456789-", min_size=1, max_size=40)),
)
attributes = st.builds(EidAttribute, st.integers(0, 255), st.binary(max_size=64))
addresses = st.one_of(
    st.builds(ipaddress.IPv4Address, st.integers(0, 2**32 - 1)),
    st.builds(ipaddress.IPv6Address, st.integers(0, 2**128 - 1)),
)
endpoints = st.builds(ClaEndpoint, st.integers(0, 3), addresses, st.integers(0, 65535))


@st.composite
def attribute_lists(draw):
    """Either many short attributes (up to 255) or a few long ones (up to 65535 octets each)."""
    if draw(st.booleans()):
        count = draw(st.integers(0, MAX_ATTRIBUTES))
        return tuple(EidAttribute(i % 256, bytes([i % 256]) * (i % 17)) for i in range(count))
    sizes = draw(st.lists(st.integers(0, MAX_ATTRIBUTE_VALUE), max_size=2))
    fill = draw(st.integers(0, 255))
    return tuple(EidAttribute(fill, bytes([fill]) * size) for size in sizes)


@st.composite
def announcements(draw):
    """Announcements with 1-255 entries; the first carries the drawn attribute list."""
    count = draw(st.integers(1, MAX_ENTRIES))
    base = draw(st.integers(0, 2**32 - MAX_ENTRIES))
    first = EidEntry(draw(eids), draw(attribute_lists()))
    shared = tuple(draw(st.lists(attributes, max_size=3)))
    rest = [EidEntry(EndpointId.parse(f"ipn:{base + i}.1"), shared) for i in range(1, count)]
    return ReachabilityAnnouncement(draw(endpoints), (first, *rest))


@given(announcements())
@hypothesis_settings(max_examples=1000, deadline=None)
def test_announcement_round_trip(announcement):
    assert decode_mp_reach(encode_mp_reach(announcement)) == announcement


@given(st.integers(0, 3), st.integers(1, MAX_ENTRIES), eids, st.integers(0, 2**32 - MAX_ENTRIES))
@hypothesis_settings(max_examples=1000, deadline=None)
def test_withdrawal_round_trip(safi, count, first, base):
    eid_list = [first] + [EndpointId.parse(f"dtn://node{base + i}/") for i in range(1, count)]
    withdrawal = ReachabilityWithdrawal.for_eids(safi, eid_list)
    assert decode_mp_unreach(encode_mp_unreach(withdrawal)) == withdrawal


def test_decoder_never_crashes_on_mutated_input(load_hex):
    """Test 100k seeded mutations: every outcome is a value or a MalformedNlri."""
    seeds = [load_hex("mp_reach_ipv6_ipn_5_1.hex"), load_hex("mp_reach_ipv4_dtn_attrs.hex")]
    unreach = load_hex("mp_unreach_ipn_5_1.hex")
    rng = random.Random(23042)

    for i in range(100_000):
        base = bytearray(unreach if i % 4 == 0 else seeds[i % 2])
        mutation = rng.randrange(3)
        if mutation == 0:
            position = rng.randrange(len(base))
            base[position] = rng.randrange(256)
        elif mutation == 1:
            del base[rng.randrange(len(base)):]
        else:
            base += bytes(rng.randrange(256) for _ in range(rng.randrange(1, 4)))

        decode = decode_mp_unreach if i % 4 == 0 else decode_mp_reach
        try:
            decode(bytes(base))
        except MalformedNlri:
            pass


def test_decoder_never_crashes_on_random_bytes():
    """Test 100k seeded random inputs of 0-4096 octets against both decoders."""
    rng = random.Random(4096)
    for i in range(100_000):
        data = rng.randbytes(rng.randrange(4097))
        if i % 3 == 0:
            # keep the AFI valid now and then so decoding gets past the header
            data = bytes.fromhex("5a02") + data
        decode = decode_mp_unreach if i % 2 else decode_mp_reach
        try:
            decode(data)
        except MalformedNlri:
            pass
