import pytest

from app.core.exceptions import OversizeEntry
from app.services.bgp.chunking import chunk_updates, chunk_withdrawals, split_oversize
from app.services.bgp.messages import MAX_MESSAGE_SIZE, frame_message, parse_message
from app.services.nlri.models import ClaEndpoint, EidAttribute, EidEntry, EndpointId


@pytest.fixture
def next_hop():
    return ClaEndpoint.from_host(0, "127.0.0.1", 4556)


def test_300_entries_split_in_order(next_hop):
    """Test that 300 EIDs need two UPDATEs and keep their order."""
    entries = [EidEntry(EndpointId.parse(f"ipn:{i}.1")) for i in range(1, 301)]
    updates = chunk_updates(next_hop, entries, as_path=(64512,))

    assert len(updates) >= 2
    assert all(len(u.mp_reach.entries) <= 255 for u in updates)
    assert [e for u in updates for e in u.mp_reach.entries] == entries
    for update in updates:
        frame = frame_message(update)
        assert len(frame) <= MAX_MESSAGE_SIZE
        assert parse_message(frame) == update


def test_size_limit_splits_before_count_limit(next_hop):
    attribute = EidAttribute(2, bytes(200))
    entries = [EidEntry(EndpointId.parse(f"ipn:{i}.1"), (attribute,)) for i in range(60)]
    updates = chunk_updates(next_hop, entries)

    assert len(updates) > 1
    assert all(len(frame_message(u)) <= MAX_MESSAGE_SIZE for u in updates)
    assert sum(len(u.mp_reach.entries) for u in updates) == 60


def test_single_oversize_entry_is_refused(next_hop):
    entry = EidEntry(EndpointId.parse("ipn:1.1"), (EidAttribute(2, bytes(5000)),))
    with pytest.raises(OversizeEntry) as exc_info:
        chunk_updates(next_hop, [entry])
    assert exc_info.value.eid == "ipn:1.1"
    assert exc_info.value.limit == MAX_MESSAGE_SIZE


def test_split_oversize_separates_entries_that_cannot_fit(next_hop):
    big = EidEntry(EndpointId.parse("ipn:1.1"), (EidAttribute(2, bytes(5000)),))
    small = [EidEntry(EndpointId.parse(f"ipn:{i}.1")) for i in range(2, 5)]

    fitting, oversize = split_oversize(next_hop, [small[0], big, *small[1:]], as_path=(64512,))

    assert fitting == small
    assert oversize == [big]
    assert chunk_updates(next_hop, fitting, as_path=(64512,))[0].mp_reach.entries == tuple(small)


def test_split_oversize_keeps_an_entry_at_the_size_limit(next_hop):
    def entry(size):
        return EidEntry(EndpointId.parse("ipn:1.1"), (EidAttribute(2, bytes(size)),))

    size = 4000
    while split_oversize(next_hop, [entry(size + 1)])[1] == []:
        size += 1
    (update,) = chunk_updates(next_hop, [entry(size)])
    assert len(frame_message(update)) == MAX_MESSAGE_SIZE
    assert split_oversize(next_hop, [entry(size)]) == ([entry(size)], [])


def test_withdrawals_are_chunked_by_count():
    entries = [EidEntry(EndpointId.parse(f"ipn:{i}.1")) for i in range(1, 601)]
    updates = chunk_withdrawals(0, entries, as_path=(64512,))

    assert len(updates) == 3
    assert [e for u in updates for e in u.mp_unreach.entries] == entries
    assert all(u.mp_reach is None for u in updates)


def test_empty_input_produces_no_updates(next_hop):
    assert chunk_updates(next_hop, []) == []
    assert chunk_withdrawals(0, []) == []
