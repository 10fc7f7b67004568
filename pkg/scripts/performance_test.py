"""
Convergence benchmark for the EID Reachability Distribution Service.

Builds a chain of nodes on loopback, registers EIDs at the far end and
measures how long their announcement, withdrawal and a CLA probe take to
take effect at the near end.

Usage:
    python scripts/performance_test.py --mode=[all|announce|withdraw|probe] --nodes=3 --eids=100 --runs=3
"""

import argparse
import asyncio
import logging
import os
import statistics
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from app.integrations.agent_client import AgentClient  # noqa: E402
from app.services.bgp.session import SessionState  # noqa: E402
from app.services.harness.scenario import parse_scenario  # noqa: E402
from app.services.harness.topology import Topology  # noqa: E402
from app.services.nlri.models import EndpointId  # noqa: E402

logger = logging.getLogger("performance_test")

# Default settings
DEFAULT_NODES = 3
DEFAULT_EIDS = 100
DEFAULT_RUNS = 3
DEFAULT_CONCURRENCY = 10
DEFAULT_TIMEOUT = 30.0
POLL_INTERVAL = 0.01
FIRST_ASN = 64512


def chain_scenario(length: int, hold: int = 3) -> Dict:
    """Scenario table for N0 - N1 - ... - N(length-1), each node actively peering with the next."""
    names = [f"N{i}" for i in range(length)]
    nodes = {}
    for i, name in enumerate(names):
        peers = []
        if i > 0:
            peers.append({"node": names[i - 1], "mode": "passive"})
        if i < length - 1:
            peers.append({"node": names[i + 1], "mode": "active"})
        nodes[name] = {
            "node": {"asn": FIRST_ASN + i, "bgp_id": f"10.0.0.{i + 1}"},
            "cla": [{"name": "mtcp0", "safi": 0, "port": 0}],
            "peer": peers,
        }
    return {"scenario": {"name": f"chain{length}", "hold": hold}, "nodes": nodes}


class PerformanceTester:
    """Runs convergence measurements against an in-process chain."""

    def __init__(
        self,
        nodes: int = DEFAULT_NODES,
        eids: int = DEFAULT_EIDS,
        runs: int = DEFAULT_RUNS,
        concurrency: int = DEFAULT_CONCURRENCY,
        timeout: float = DEFAULT_TIMEOUT,
    ):
        """Initialize the performance tester.

        Args:
            nodes: Chain length, at least 2
            eids: EIDs registered per run
            runs: Repetitions of each measurement
            concurrency: Concurrent agent registrations
            timeout: Seconds to wait for one measurement
        """
        if nodes < 2:
            raise ValueError("the chain needs at least 2 nodes")
        self.node_count = nodes
        self.eid_count = eids
        self.runs = runs
        self.concurrency = concurrency
        self.timeout = timeout
        self.topology: Optional[Topology] = None
        self.metrics: Dict[str, List[float]] = {"announce": [], "withdraw": [], "probe": []}
        self.failures = 0

        logger.info(f"Initialized performance tester with nodes={nodes}, eids={eids}, runs={runs}")

    @property
    def near(self):
        return self.topology.node("N0")

    @property
    def far(self):
        return self.topology.node(f"N{self.node_count - 1}")

    def _eids(self, run: int) -> List[str]:
        return [f"ipn:{run * self.eid_count + i + 1}.1" for i in range(self.eid_count)]

    async def start(self) -> None:
        self.topology = Topology(parse_scenario(chain_scenario(self.node_count)))
        await self.topology.start()
        await self._wait(self._all_established, "sessions")

    async def stop(self) -> None:
        if self.topology is not None:
            await self.topology.stop()

    def _all_established(self) -> bool:
        return all(
            runner.state == SessionState.ESTABLISHED
            for node in self.topology.nodes.values()
            for runner in node.bgp.speaker.runners.values()
        )

    async def _wait(self, condition, what: str) -> float:
        started = time.monotonic()
        while not condition():
            if time.monotonic() - started > self.timeout:
                raise TimeoutError(f"{what} not reached within {self.timeout}s")
            await asyncio.sleep(POLL_INTERVAL)
        return time.monotonic() - started

    async def _for_each(self, eids: List[str], call) -> None:
        semaphore = asyncio.Semaphore(self.concurrency)

        async def one(eid: str) -> None:
            async with semaphore:
                await call(eid)

        await asyncio.gather(*(one(eid) for eid in eids))

    def _agent(self, node) -> AgentClient:
        host, port = node.agent_endpoint
        return AgentClient(host, port)

    async def run_announce_test(self, run: int) -> None:
        eids = [EndpointId.parse(text) for text in self._eids(run)]
        started = time.monotonic()
        await self._for_each(self._eids(run), lambda eid: self._agent(self.far).register(eid, "mtcp0"))
        await self._wait(lambda: all(self.near.agent.fib.get(eid) is not None for eid in eids), "announcement")
        self.metrics["announce"].append(time.monotonic() - started)

    async def run_withdraw_test(self, run: int) -> None:
        eids = [EndpointId.parse(text) for text in self._eids(run)]
        started = time.monotonic()
        await self._for_each(self._eids(run), lambda eid: self._agent(self.far).deregister(eid))
        await self._wait(lambda: all(self.near.rib.lookup(eid) is None for eid in eids), "withdrawal")
        self.metrics["withdraw"].append(time.monotonic() - started)

    async def run_probe_test(self, run: int) -> None:
        report = await self._agent(self.near).bundle_send(self._eids(run)[0], b"hello, node")
        if report.get("success"):
            self.metrics["probe"].append(report["rtt"])
        else:
            self.failures += 1

    async def run(self, mode: str = "all") -> Dict[str, Dict[str, float]]:
        """
        Execute every run of the selected measurements.

        Returns:
            Summary statistics per measurement
        """
        await self.start()
        try:
            for run in range(self.runs):
                await self.run_announce_test(run)
                if mode in ("all", "probe"):
                    await self.run_probe_test(run)
                if mode in ("all", "withdraw"):
                    await self.run_withdraw_test(run)
        finally:
            await self.stop()
        return self.summary()

    def summary(self) -> Dict[str, Dict[str, float]]:
        results = {}
        for name, values in self.metrics.items():
            if not values:
                continue
            results[name] = {
                "count": len(values),
                "min": min(values),
                "max": max(values),
                "mean": statistics.mean(values),
                "median": statistics.median(values),
            }
        return results

    def log_results(self, results: Dict[str, Dict[str, float]]) -> None:
        logger.info("=" * 50)
        logger.info(f"CONVERGENCE OVER {self.node_count} NODES, {self.eid_count} EIDS PER RUN")
        for name, stats in results.items():
            logger.info(
                f"{name:>8}: mean {stats['mean'] * 1000:.1f} ms, median {stats['median'] * 1000:.1f} ms, "
                f"min {stats['min'] * 1000:.1f} ms, max {stats['max'] * 1000:.1f} ms ({stats['count']} runs)"
            )
        if self.failures:
            logger.info(f"probe failures: {self.failures}")
        logger.info("=" * 50)


async def main(argv: Optional[List[str]] = None) -> int:
    """Main function to run the benchmark."""
    parser = argparse.ArgumentParser(description="Convergence benchmark for the EID reachability service")

    parser.add_argument("--mode", choices=["all", "announce", "withdraw", "probe"], default="all",
                        help="Measurements to run; announce always runs (default: all)")
    parser.add_argument("--nodes", type=int, default=DEFAULT_NODES,
                        help=f"Chain length (default: {DEFAULT_NODES})")
    parser.add_argument("--eids", type=int, default=DEFAULT_EIDS,
                        help=f"EIDs registered per run (default: {DEFAULT_EIDS})")
    parser.add_argument("--runs", type=int, default=DEFAULT_RUNS,
                        help=f"Number of runs (default: {DEFAULT_RUNS})")
    parser.add_argument("--concurrency", type=int, default=DEFAULT_CONCURRENCY,
                        help=f"Concurrent registrations (default: {DEFAULT_CONCURRENCY})")
    parser.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT,
                        help=f"Seconds to wait per measurement (default: {DEFAULT_TIMEOUT})")
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.INFO,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[logging.StreamHandler()],
    )

    try:
        tester = PerformanceTester(
            nodes=args.nodes,
            eids=args.eids,
            runs=args.runs,
            concurrency=args.concurrency,
            timeout=args.timeout,
        )
        tester.log_results(await tester.run(args.mode))
    except Exception as e:
        logger.error(f"Error running performance tests: {str(e)}")
        return 1

    return 0


if __name__ == "__main__":
    if os.name == "nt":
        asyncio.set_event_loop_policy(asyncio.WindowsSelectorEventLoopPolicy())

    exit_code = asyncio.run(main())
    sys.exit(exit_code)
