import asyncio

import pytest
import pytest_asyncio

from app.config import ClaSection
from app.core.exceptions import AgentProtocolError, ProbeConnectionRefused, UnsupportedSafi
from app.integrations.agent_client import AgentClient, AgentConnection
from app.services.bp.agent import BpAgentSim
from app.services.bp.cla import LENGTH_PREFIX, ClaListener, cla_probe
from app.services.bp.protocol import AgentMessage, AgentOp, AgentRole, FibEntryModel, decode_message
from app.services.erds import Announce, BpAgentAdapter, Resync, Withdraw
from app.services.nlri.models import ClaEndpoint, EidEntry, EndpointId, ReachabilityAnnouncement, ReachabilityWithdrawal


@pytest_asyncio.fixture
async def agent():
    sim = BpAgentSim("A", ("127.0.0.1", 0), clas=[ClaSection(name="mtcp0", safi=0, host="127.0.0.1", port=0)])
    await sim.start()
    yield sim
    await sim.stop()


@pytest.fixture
def client(agent):
    return AgentClient("127.0.0.1", agent.bound_port, timeout=2.0)


def own_cla(agent) -> ClaEndpoint:
    return ClaEndpoint.from_host(0, "127.0.0.1", agent.cla_listeners[0].bound_port)


async def wait_for(predicate, timeout=2.0):
    deadline = asyncio.get_running_loop().time() + timeout
    while not predicate():
        if asyncio.get_running_loop().time() > deadline:
            raise AssertionError("condition not reached")
        await asyncio.sleep(0.02)


@pytest.mark.asyncio
async def test_register_and_deregister(agent, client):
    await client.register("ipn:3.1", "mtcp0")
    assert list(agent.registered_eids()) == [EndpointId.parse("ipn:3.1")]

    await client.deregister("ipn:3.1")
    assert list(agent.registered_eids()) == []


@pytest.mark.asyncio
async def test_register_rejects_unknown_cla_and_bad_eid(client):
    with pytest.raises(AgentProtocolError):
        await client.register("ipn:3.1", "udp9")
    with pytest.raises(AgentProtocolError):
        await client.register("not-an-eid", "mtcp0")


@pytest.mark.asyncio
async def test_fib_set_get_and_delete(agent, client):
    endpoint = ClaEndpoint.from_host(0, "127.0.0.2", 4556)
    reply = await agent.handle(AgentMessage(op=AgentOp.FIB_SET, entries=[FibEntryModel.from_endpoint("ipn:4.1", endpoint)]))
    assert reply.op == AgentOp.OK

    (entry,) = await client.fib_get()
    assert entry.eid == "ipn:4.1"
    assert entry.to_endpoint() == endpoint
    assert agent.fib.dump() == "ipn:4.1 | 127.0.0.2:4556 | 0"

    await agent.handle(AgentMessage(op=AgentOp.FIB_DEL, eids=["ipn:4.1"]))
    assert await client.fib_get() == []


@pytest.mark.asyncio
async def test_fib_set_with_a_bad_entry_changes_nothing(agent):
    endpoint = ClaEndpoint.from_host(0, "127.0.0.2", 4556)
    agent.fib.set(EndpointId.parse("ipn:4.1"), endpoint)
    entries = [
        FibEntryModel.from_endpoint("ipn:5.1", endpoint),
        FibEntryModel(eid="not-an-eid", safi=0, host="127.0.0.2", port=4556),
    ]

    reply = await agent.handle(AgentMessage(op=AgentOp.FIB_SET, entries=entries))

    assert reply.op == AgentOp.ERROR
    assert agent.fib.dump() == "ipn:4.1 | 127.0.0.2:4556 | 0"


@pytest.mark.asyncio
async def test_fib_del_with_a_bad_eid_changes_nothing(agent):
    agent.fib.set(EndpointId.parse("ipn:4.1"), ClaEndpoint.from_host(0, "127.0.0.2", 4556))

    reply = await agent.handle(AgentMessage(op=AgentOp.FIB_DEL, eids=["ipn:4.1", "not-an-eid"]))

    assert reply.op == AgentOp.ERROR
    assert agent.fib.get(EndpointId.parse("ipn:4.1")) is not None


@pytest.mark.asyncio
async def test_bundle_send_delivers_over_fib_route(agent, client):
    agent.fib.set(EndpointId.parse("ipn:4.1"), own_cla(agent))

    report = await client.bundle_send("ipn:4.1", b"hello, node")

    assert report["success"] is True
    assert report["size"] == 11
    assert report["target"] == str(own_cla(agent))
    assert [b.payload for b in agent.received] == [b"hello, node"]
    (bundle,) = await client.bundle_recv()
    assert bundle.size == 11


@pytest.mark.asyncio
async def test_bundle_send_without_route_fails(client):
    with pytest.raises(AgentProtocolError) as exc_info:
        await client.bundle_send("ipn:4.1", b"x")
    assert "no route" in exc_info.value.detail


@pytest.mark.asyncio
async def test_cla_listener_drops_oversize_length_prefix():
    received = []
    listener = ClaListener("127.0.0.1", 0, lambda payload, peer: received.append(payload), max_payload=16)
    await listener.start()
    try:
        reader, writer = await asyncio.open_connection("127.0.0.1", listener.bound_port)
        writer.write(LENGTH_PREFIX.pack(0xFFFFFFFF))
        await writer.drain()
        assert await asyncio.wait_for(reader.read(), 2) == b""
        writer.close()
    finally:
        await listener.stop()
    assert received == []


@pytest.mark.asyncio
async def test_cla_listener_accepts_payload_at_the_limit():
    received = []
    listener = ClaListener("127.0.0.1", 0, lambda payload, peer: received.append(payload), max_payload=16)
    await listener.start()
    try:
        report = await cla_probe(ClaEndpoint.from_host(0, "127.0.0.1", listener.bound_port), b"y" * 16, timeout=2.0)
    finally:
        await listener.stop()
    assert report.success is True
    assert received == [b"y" * 16]


@pytest.mark.asyncio
async def test_probe_to_closed_port_is_refused(free_port):
    with pytest.raises(ProbeConnectionRefused):
        await cla_probe(ClaEndpoint.from_host(0, "127.0.0.1", free_port()), b"x", timeout=2.0)


@pytest.mark.asyncio
async def test_probe_refuses_datagram_safi():
    with pytest.raises(UnsupportedSafi):
        await cla_probe(ClaEndpoint.from_host(3, "127.0.0.1", 4556), b"x")


@pytest.mark.asyncio
async def test_malformed_line_gets_error_reply(agent):
    reader, writer = await asyncio.open_connection("127.0.0.1", agent.bound_port)
    try:
        writer.write(b"not json\n")
        await writer.drain()
        reply = decode_message(await asyncio.wait_for(reader.readline(), 2))
        assert reply.op == AgentOp.ERROR
        assert "malformed JSON" in reply.reason
    finally:
        writer.close()


@pytest.mark.asyncio
async def test_registrations_are_relayed_to_erds_connection(agent, client):
    connection = AgentConnection("127.0.0.1", agent.bound_port, AgentRole.ERDS, timeout=2.0)
    try:
        hello = await connection.connect()
        assert hello.registrations == []
        assert agent.erds_connected

        await client.register("ipn:3.1", "mtcp0")
        event = await asyncio.wait_for(connection.next_event(), 2)
        assert (event.op, event.eid, event.cla) == (AgentOp.REGISTER, "ipn:3.1", "mtcp0")

        # identical re-registration is not relayed again
        await client.register("ipn:3.1", "mtcp0")
        await client.deregister("ipn:3.1")
        event = await asyncio.wait_for(connection.next_event(), 2)
        assert event.op == AgentOp.DEREGISTER
    finally:
        await connection.close()


@pytest.mark.asyncio
async def test_bp_adapter_resyncs_and_pushes_fib(agent, client):
    await client.register("ipn:3.1", "mtcp0")
    local = ClaEndpoint.from_host(0, "127.0.0.1", 4556)
    adapter = BpAgentAdapter("A", "127.0.0.1", agent.bound_port, {"mtcp0": local}, retry=0.1)
    events = adapter.listen()
    await adapter.start()
    try:
        resync = await asyncio.wait_for(events.__anext__(), 2)
        assert isinstance(resync, Resync)
        assert [a.record.eids for a in resync.announcements] == [(EndpointId.parse("ipn:3.1"),)]
        assert adapter.connected

        await client.register("ipn:3.2", "mtcp0")
        announce = await asyncio.wait_for(events.__anext__(), 2)
        assert isinstance(announce, Announce)
        assert announce.record.next_hop == local

        next_hop = ClaEndpoint.from_host(0, "127.0.0.2", 4556)
        await adapter.send(Announce(ReachabilityAnnouncement(next_hop, (EidEntry(EndpointId.parse("ipn:4.1")),))))
        await wait_for(lambda: EndpointId.parse("ipn:4.1") in agent.fib)

        await adapter.send(Withdraw(ReachabilityWithdrawal.for_eids(0, [EndpointId.parse("ipn:4.1")])))
        await wait_for(lambda: len(agent.fib) == 0)
    finally:
        await events.aclose()
        await adapter.stop()
