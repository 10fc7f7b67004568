import itertools

import pytest
from hypothesis import given, settings as hypothesis_settings, strategies as st

from app.core.exceptions import LoopDetected
from app.services.nlri.models import ClaEndpoint, EidAttribute, EidEntry, EndpointId, ReachabilityAnnouncement, ReachabilityWithdrawal
from app.services.rib.models import LOCAL, PeerSource, RemovedRoute, RibDelta, RibUpdate
from app.services.rib.rib_service import ReachabilityRib

LOCAL_ASN = 64512
LOCAL_CLAS = {0: ClaEndpoint.from_host(0, "127.0.0.1", 4556)}

EID = EndpointId.parse("ipn:3.1")
HOP_B = ClaEndpoint.from_host(0, "127.0.0.2", 4556)
HOP_C = ClaEndpoint.from_host(0, "127.0.0.3", 4556)


def counter_clock():
    ticks = itertools.count()
    return lambda: float(next(ticks))


def announce(next_hop, *eids, attributes=()):
    return ReachabilityAnnouncement(next_hop, tuple(EidEntry(e, attributes) for e in eids))


@pytest.fixture
def rib():
    return ReachabilityRib(LOCAL_ASN, clock=counter_clock())


def test_first_announcement_is_selected(rib):
    source = PeerSource("B", 2, (64513,))
    delta = rib.apply_announcement(source, announce(HOP_B, EID))

    assert delta.updated == [RibUpdate(EID, HOP_B, (), source)]
    assert rib.lookup(EID).next_hop == HOP_B


def test_shorter_as_path_wins(rib):
    rib.apply_announcement(PeerSource("B", 2, (64513, 64514)), announce(HOP_B, EID))
    delta = rib.apply_announcement(PeerSource("C", 3, (64515,)), announce(HOP_C, EID))

    assert [u.next_hop for u in delta.updated] == [HOP_C]
    assert rib.lookup(EID).as_path == (64515,)


def test_lower_bgp_id_breaks_ties(rib):
    rib.apply_announcement(PeerSource("C", 3, (64515,)), announce(HOP_C, EID))
    rib.apply_announcement(PeerSource("B", 2, (64513,)), announce(HOP_B, EID))
    assert rib.lookup(EID).next_hop == HOP_B


def test_local_route_beats_peer_routes(rib, mtcp_endpoint):
    rib.apply_announcement(PeerSource("B", 2, (64513,)), announce(HOP_B, EID))
    rib.apply_announcement(LOCAL, announce(mtcp_endpoint, EID))
    assert rib.lookup(EID).source == LOCAL
    assert rib.lookup(EID).as_path == ()


def test_identical_reannouncement_is_no_change(rib):
    source = PeerSource("B", 2, (64513,))
    rib.apply_announcement(source, announce(HOP_B, EID))
    assert rib.apply_announcement(source, announce(HOP_B, EID)).is_empty


def test_attribute_change_is_an_update(rib):
    source = PeerSource("B", 2, (64513,))
    rib.apply_announcement(source, announce(HOP_B, EID))
    delta = rib.apply_announcement(source, announce(HOP_B, EID, attributes=(EidAttribute(1, b"x"),)))
    assert delta.updated[0].attributes == (EidAttribute(1, b"x"),)


def test_withdrawal_falls_back_then_removes(rib):
    rib.apply_announcement(PeerSource("B", 2, (64513,)), announce(HOP_B, EID))
    rib.apply_announcement(PeerSource("C", 3, (64515, 64516)), announce(HOP_C, EID))

    delta = rib.apply_withdrawal(PeerSource("B", 2, ()), ReachabilityWithdrawal.for_eids(0, [EID]))
    assert [u.next_hop for u in delta.updated] == [HOP_C]

    delta = rib.apply_withdrawal(PeerSource("C", 3, ()), ReachabilityWithdrawal.for_eids(0, [EID]))
    assert delta.removed == [RemovedRoute(EID, 0)]
    assert rib.lookup(EID) is None
    assert len(rib) == 0


def test_withdrawing_unknown_eid_is_no_op(rib):
    assert rib.apply_withdrawal(LOCAL, ReachabilityWithdrawal.for_eids(0, [EID])).is_empty


def test_loop_is_treated_as_withdraw(rib):
    rib.apply_announcement(PeerSource("B", 2, (64513,)), announce(HOP_B, EID))

    with pytest.raises(LoopDetected) as exc_info:
        rib.apply_announcement(PeerSource("B", 2, (64513, LOCAL_ASN)), announce(HOP_B, EID))

    assert exc_info.value.delta.removed_eids == [EID]
    assert rib.lookup(EID) is None
    assert rib.loops_detected == 1
    assert not rib.has_loop_paths()


def test_loop_without_previous_route_changes_nothing(rib):
    with pytest.raises(LoopDetected) as exc_info:
        rib.apply_announcement(PeerSource("B", 2, (64513, LOCAL_ASN)), announce(HOP_B, EID))
    assert exc_info.value.delta.is_empty


def test_drop_peer_removes_its_routes(rib):
    other = EndpointId.parse("ipn:4.1")
    rib.apply_announcement(PeerSource("B", 2, (64513,)), announce(HOP_B, EID, other))
    rib.apply_announcement(PeerSource("C", 3, (64515, 64516)), announce(HOP_C, EID))

    delta = rib.drop_peer("B")
    assert delta.removed_eids == [other]
    assert [u.eid for u in delta.updated] == [EID]


def test_export_sets_next_hop_self_and_splits_horizon(rib):
    other = EndpointId.parse("ipn:4.1")
    source = PeerSource("B", 2, (64513,))
    delta = rib.apply_announcement(source, announce(HOP_B, EID, other))

    announcements, withdrawals = rib.export_for_peer("C", delta, LOCAL_CLAS)
    assert withdrawals == []
    ((as_path, exported),) = announcements
    assert as_path == (64513,)
    assert exported.next_hop == LOCAL_CLAS[0]
    assert exported.eids == (EID, other)

    announcements, withdrawals = rib.export_for_peer("B", delta, LOCAL_CLAS)
    assert announcements == []
    assert withdrawals[0].eids == (EID, other)


def test_export_without_local_cla_withdraws(rib):
    delta = rib.apply_announcement(PeerSource("B", 2, (64513,)), announce(HOP_B, EID))
    announcements, withdrawals = rib.export_for_peer("C", delta, {})
    assert announcements == []
    assert withdrawals == [ReachabilityWithdrawal.for_eids(0, [EID])]


def test_export_batches_at_255_entries(rib):
    eids = [EndpointId.parse(f"ipn:{i}.1") for i in range(300)]
    delta = RibDelta()
    for start in range(0, 300, 100):
        delta = delta.merge(rib.apply_announcement(PeerSource("B", 2, (64513,)), announce(HOP_B, *eids[start:start + 100])))

    announcements, _ = rib.export_for_peer("C", delta, LOCAL_CLAS)
    assert [len(a.entries) for _, a in announcements] == [255, 45]


def test_delta_merge_keeps_last_change():
    update = RibUpdate(EID, HOP_B, (), LOCAL)
    merged = RibDelta(updated=[update]).merge(RibDelta(removed=[RemovedRoute(EID, 0)]))
    assert merged.updated == []
    assert merged.removed_eids == [EID]


def test_dump_format(rib, mtcp_endpoint):
    rib.apply_announcement(PeerSource("B", 2, (64513, 64514)), announce(HOP_B, EndpointId.parse("ipn:9.1")))
    rib.apply_announcement(LOCAL, announce(mtcp_endpoint, EID, attributes=(EidAttribute(1, b"a"),)))

    assert rib.dump().splitlines() == [
        "ipn:3.1 | 127.0.0.1:4556 | 0 | - | local | 1",
        "ipn:9.1 | 127.0.0.2:4556 | 0 | 64513 64514 | peer:B | 0",
    ]


# Oracle: replay random mutations and compare the selection with a brute-force model

PEERS = {"B": 2, "C": 3, "D": 4}
ORACLE_EIDS = [EndpointId.parse(f"ipn:{i}.1") for i in range(1, 5)]
HOPS = {peer: ClaEndpoint.from_host(0, f"127.0.0.{bgp_id}", 4556) for peer, bgp_id in PEERS.items()}

operations = st.lists(
    st.tuples(
        st.sampled_from(["announce", "withdraw", "drop"]),
        st.sampled_from(sorted(PEERS)),
        st.lists(st.sampled_from(ORACLE_EIDS), min_size=1, max_size=3, unique=True),
        st.integers(1, 4),
    ),
    max_size=40,
)


@given(operations)
@hypothesis_settings(max_examples=150, deadline=None)
def test_selection_matches_oracle(ops):
    rib = ReachabilityRib(LOCAL_ASN, clock=counter_clock())
    # (peer, eid) -> (path_len, bgp_id, learned_at, peer)
    model = {}
    learned = itertools.count()

    for op, peer, eids, path_len in ops:
        if op == "announce":
            as_path = tuple(64600 + i for i in range(path_len))
            source = PeerSource(peer, PEERS[peer], as_path)
            before = {eid: rib.entries[eid].routes.get(source.key) for eid in eids if eid in rib.entries}
            rib.apply_announcement(source, announce(HOPS[peer], *eids))
            stamp = next(learned)
            for eid in eids:
                previous = before.get(eid)
                if previous is not None and previous.as_path == as_path:
                    continue
                model[(peer, eid)] = (path_len, PEERS[peer], stamp, peer)
        elif op == "withdraw":
            rib.apply_withdrawal(PeerSource(peer, PEERS[peer], ()), ReachabilityWithdrawal.for_eids(0, eids))
            for eid in eids:
                model.pop((peer, eid), None)
        else:
            rib.drop_peer(peer)
            for key in [k for k in model if k[0] == peer]:
                del model[key]

    for eid in ORACLE_EIDS:
        candidates = [value for (p, e), value in model.items() if e == eid]
        route = rib.lookup(eid)
        if not candidates:
            assert route is None
        else:
            assert route.source.peer_id == min(candidates)[3]
