"""
Scenario runner: starts a topology, executes its events on schedule and
polls every expectation until it holds or times out.
"""

import asyncio
import os
import time
from dataclasses import dataclass, field
from typing import Awaitable, Callable, Dict, List, Optional

from app.config import get_settings
from app.core.exceptions import AdapterError, AgentProtocolError, ErdsException, ScenarioError
from app.core.logging import attach_node_log_file, detach_log_handler, logger
from app.integrations.agent_client import AgentClient
from app.services.bgp.session import SessionState
from app.services.harness.scenario import ScenarioAction, ScenarioEvent, ScenarioFile
from app.services.harness.topology import Topology
from app.services.nlri.models import EndpointId
from app.utils.validators import parse_attribute_specs

settings = get_settings()

# Returns None when the condition holds, otherwise why it does not (yet)
Check = Callable[[], Optional[str]]


@dataclass
class StepResult:
    index: int
    description: str
    label: Optional[str]
    expectation: bool
    passed: bool
    detail: str = ""
    elapsed: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        label = f" ({self.label})" if self.label else ""
        detail = f": {self.detail}" if self.detail else ""
        return f"[{status}] #{self.index} {self.description}{label}{detail}"


@dataclass
class ScenarioReport:
    name: str
    steps: List[StepResult] = field(default_factory=list)
    rib_dumps: Dict[str, str] = field(default_factory=dict)
    fib_dumps: Dict[str, str] = field(default_factory=dict)
    log_files: Dict[str, str] = field(default_factory=dict)
    duration: float = 0.0

    @property
    def failures(self) -> List[StepResult]:
        return [step for step in self.steps if not step.passed]

    @property
    def passed(self) -> bool:
        return not self.failures

    def as_dict(self) -> Dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "duration": round(self.duration, 3),
            "steps": [
                {
                    "index": s.index,
                    "step": s.description,
                    "label": s.label,
                    "passed": s.passed,
                    "detail": s.detail,
                    "elapsed": round(s.elapsed, 3),
                }
                for s in self.steps
            ],
            "rib": self.rib_dumps,
            "fib": self.fib_dumps,
        }


def _normalize(dump: str, names: Dict[str, str]) -> str:
    for endpoint, name in names.items():
        dump = dump.replace(endpoint, name)
    return dump


class ScenarioRunner:
    """
    Executes one scenario.

    Args:
        scenario: Parsed scenario
        log_dir: Directory for per-node log files, None to skip file capture
        poll_interval: Seconds between expectation checks
    """

    def __init__(self, scenario: ScenarioFile, log_dir: Optional[str] = None, poll_interval: Optional[float] = None):
        self.scenario = scenario
        self.log_dir = log_dir
        self.poll_interval = poll_interval or settings.EXPECT_POLL_INTERVAL
        self.topology: Optional[Topology] = None

    async def run(self) -> ScenarioReport:
        """
        Run every event and collect a report.

        Returns:
            Report with one result per event and the final RIB/FIB dumps,
            endpoints rewritten to ``<node>.<cla>`` names

        Raises:
            ScenarioSetupError: If the topology cannot be started
            ConfigError: If a node table is invalid
        """
        report = ScenarioReport(name=self.scenario.scenario.name)
        self.topology = Topology(self.scenario)
        handlers = self._attach_logs(report)
        started = time.monotonic()
        try:
            await self.topology.start()
            logger.info(f"Scenario {report.name}: {len(self.topology.nodes)} nodes started")
            loop = asyncio.get_running_loop()
            origin = loop.time()
            for index, event in enumerate(self.scenario.events, start=1):
                delay = origin + event.at - loop.time()
                if delay > 0:
                    await asyncio.sleep(delay)
                result = await self._execute(index, event)
                logger.info(f"Scenario {report.name}: {result.line()}")
                report.steps.append(result)

            names = self.topology.endpoint_names()
            for name, node in self.topology.nodes.items():
                report.rib_dumps[name] = _normalize(node.rib_dump(), names)
                report.fib_dumps[name] = _normalize(node.fib_dump(), names)
        finally:
            await self.topology.stop()
            for handler in handlers:
                detach_log_handler(handler)
            report.duration = time.monotonic() - started
        return report

    def _attach_logs(self, report: ScenarioReport) -> List:
        if self.log_dir is None:
            return []
        handlers = []
        for name in self.topology.nodes:
            path = os.path.join(self.log_dir, self.scenario.scenario.name, f"{name}.log")
            handlers.append(attach_node_log_file(name, path))
            report.log_files[name] = path
        return handlers

    async def _execute(self, index: int, event: ScenarioEvent) -> StepResult:
        result = StepResult(index, event.describe(), event.label, event.is_expectation, passed=True)
        started = time.monotonic()
        actions: Dict[ScenarioAction, Callable[[ScenarioEvent], Awaitable[Optional[str]]]] = {
            ScenarioAction.REGISTER: self._register,
            ScenarioAction.DEREGISTER: self._deregister,
            ScenarioAction.EXPECT_RIB: self._expect_rib,
            ScenarioAction.EXPECT_FIB: self._expect_fib,
            ScenarioAction.EXPECT_ESTABLISHED: self._expect_established,
            ScenarioAction.EXPECT_NO_LOOPS: self._expect_no_loops,
            ScenarioAction.EXPECT_STABLE_UPDATES: self._expect_stable_updates,
            ScenarioAction.PROBE: self._probe,
            ScenarioAction.KILL_PEER: self._kill_peer,
            ScenarioAction.SLEEP: self._sleep,
        }
        try:
            failure = await actions[event.action](event)
        except ErdsException as e:
            failure = str(e)
        if failure is not None:
            result.passed = False
            result.detail = failure
        result.elapsed = time.monotonic() - started
        return result

    async def _poll(self, check: Check, timeout: float) -> Optional[str]:
        deadline = time.monotonic() + timeout
        while True:
            failure = check()
            if failure is None:
                return None
            if time.monotonic() >= deadline:
                return f"{failure} after {timeout}s"
            await asyncio.sleep(self.poll_interval)

    def _agent_client(self, name: str) -> AgentClient:
        host, port = self.topology.node(name).agent_endpoint
        return AgentClient(host, port)

    def _cla_name(self, event: ScenarioEvent) -> str:
        if event.cla:
            return event.cla
        config = self.topology.configs[event.node]
        if not config.cla:
            raise ScenarioError(event.describe(), f"node {event.node} has no CLAs")
        return config.cla[0].name

    async def _register(self, event: ScenarioEvent) -> Optional[str]:
        client = self._agent_client(event.node)
        cla = self._cla_name(event)
        attributes = parse_attribute_specs(event.attributes)
        for eid in event.eids():
            await client.register(eid, cla, attributes)
        return None

    async def _deregister(self, event: ScenarioEvent) -> Optional[str]:
        client = self._agent_client(event.node)
        for eid in event.eids():
            await client.deregister(eid)
        return None

    async def _expect_rib(self, event: ScenarioEvent) -> Optional[str]:
        node = self.topology.node(event.node)
        eids = [EndpointId.parse(text) for text in event.eids()]
        next_hop = self.topology.resolve_next_hop(event.next_hop) if event.next_hop else None

        def check() -> Optional[str]:
            for eid in eids:
                route = node.rib.lookup(eid)
                if event.absent:
                    if route is not None:
                        return f"{eid} still in RIB of {event.node} via {route.next_hop}"
                    continue
                if route is None:
                    return f"{eid} not in RIB of {event.node}"
                if next_hop is not None and str(route.next_hop) != next_hop:
                    return f"{eid} at {event.node} has next hop {route.next_hop}, expected {next_hop}"
                if event.as_path_len is not None and len(route.as_path) != event.as_path_len:
                    return f"{eid} at {event.node} has AS path {list(route.as_path)}, expected length {event.as_path_len}"
            return None

        return await self._poll(check, event.timeout)

    async def _expect_fib(self, event: ScenarioEvent) -> Optional[str]:
        node = self.topology.node(event.node)
        eids = [EndpointId.parse(text) for text in event.eids()]
        next_hop = self.topology.resolve_next_hop(event.next_hop) if event.next_hop else None

        def check() -> Optional[str]:
            for eid in eids:
                endpoint = node.agent.fib.get(eid)
                if event.absent:
                    if endpoint is not None:
                        return f"{eid} still in FIB of {event.node} via {endpoint}"
                    continue
                if endpoint is None:
                    return f"{eid} not in FIB of {event.node}"
                if next_hop is not None and str(endpoint) != next_hop:
                    return f"{eid} in FIB of {event.node} points to {endpoint}, expected {next_hop}"
            return None

        return await self._poll(check, event.timeout)

    async def _expect_established(self, event: ScenarioEvent) -> Optional[str]:
        speaker = self.topology.node(event.node).bgp.speaker

        def check() -> Optional[str]:
            runner = speaker.runners.get(event.peer)
            if runner is None:
                return f"{event.node} has no peer {event.peer}"
            if runner.state != SessionState.ESTABLISHED:
                return f"session {event.node}-{event.peer} is {runner.state.value}"
            return None

        return await self._poll(check, event.timeout)

    async def _expect_no_loops(self, event: ScenarioEvent) -> Optional[str]:
        names = [event.node] if event.node else list(self.topology.nodes)

        def check() -> Optional[str]:
            for name in names:
                if self.topology.node(name).rib.has_loop_paths():
                    return f"RIB of {name} selected a route whose AS path contains its own AS"
            return None

        return await self._poll(check, event.timeout)

    async def _expect_stable_updates(self, event: ScenarioEvent) -> Optional[str]:
        before = self.topology.total_updates_sent
        await asyncio.sleep(event.window)
        after = self.topology.total_updates_sent
        if after != before:
            return f"{after - before} UPDATEs sent during a {event.window}s quiet window"
        return None

    async def _probe(self, event: ScenarioEvent) -> Optional[str]:
        payload = event.payload.encode("utf-8")
        client = self._agent_client(event.node)
        # only bundles recorded after this send count as delivered
        seen = {name: len(node.agent.received) for name, node in self.topology.nodes.items()}
        deadline = time.monotonic() + event.timeout
        while True:
            try:
                report = await client.bundle_send(event.eid, payload)
                break
            except (AgentProtocolError, AdapterError) as e:
                if time.monotonic() >= deadline:
                    return f"probe from {event.node} to {event.eid} failed: {e.detail}"
                await asyncio.sleep(self.poll_interval)

        if not report.get("success"):
            return f"probe to {report.get('target')} was not acknowledged"

        receiver = self.topology.endpoint_names().get(report.get("target", ""), "").partition(".")[0]
        if not receiver:
            return None
        received = self.topology.node(receiver).agent.received
        baseline = seen.get(receiver, 0)

        def check() -> Optional[str]:
            if any(bundle.payload == payload for bundle in received[baseline:]):
                return None
            return f"{receiver} did not record the {len(payload)}-byte payload"

        return await self._poll(check, event.timeout)

    async def _kill_peer(self, event: ScenarioEvent) -> Optional[str]:
        speaker = self.topology.node(event.node).bgp.speaker
        if event.peer not in speaker.runners:
            return f"{event.node} has no peer {event.peer}"
        await speaker.kill_peer(event.peer, mode=event.mode)
        return None

    async def _sleep(self, event: ScenarioEvent) -> Optional[str]:
        await asyncio.sleep(event.duration)
        return None


async def run_scenario(scenario: ScenarioFile, log_dir: Optional[str] = None) -> ScenarioReport:
    """
    Run a scenario end to end.

    Args:
        scenario: Parsed scenario
        log_dir: Directory for per-node log files

    Returns:
        Scenario report
    """
    return await ScenarioRunner(scenario, log_dir=log_dir).run()
