#!/usr/bin/env python3
"""
Command line interface of the EID Reachability Distribution Service.

    python -m app.cli run --config node.toml
    python -m app.cli announce --config node.toml ipn:5.1 [--cla mtcp0] [--attr 1:0a0b]
    python -m app.cli withdraw --config node.toml ipn:5.1
    python -m app.cli rib --config node.toml [--json]
    python -m app.cli fib --config node.toml [--json]
    python -m app.cli probe --config node.toml ipn:5.1 [--payload text]
    python -m app.cli scenario scenarios/fig1.toml [--json]
"""

import argparse
import asyncio
import json
import os
import sys
from typing import Dict, List, Optional

from app.config import ErdsConfig, get_settings, load_node_config, parse_endpoint
from app.core.exceptions import AdapterError, AgentProtocolError, ConfigError, ErdsException, InvariantViolation
from app.core.logging import logger, setup_logging
from app.integrations.agent_client import AgentClient
from app.integrations.status_client import StatusClient
from app.services.harness.runner import run_scenario
from app.services.harness.scenario import load_scenario
from app.services.nlri.models import EndpointId
from app.services.node.node_service import ErdsNode
from app.utils.format_utils import format_rtt
from app.utils.validators import parse_attribute_specs

settings = get_settings()

RIB_FIELDS = ("eid", "next_hop", "safi", "as_path", "source", "attr_count")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--log-level", default=None, help="Log level (default: ERDS_LOG_LEVEL or INFO)")
    common.add_argument("--json", action="store_true", help="Print machine-readable output")

    node = argparse.ArgumentParser(add_help=False, parents=[common])
    node.add_argument("--config", required=True, help="Path to the node TOML file")

    parser = argparse.ArgumentParser(description="EID Reachability Distribution Service")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("run", parents=[node], help="Run one node until interrupted")

    announce = sub.add_parser("announce", parents=[node], help="Register a local EID with the node's BP agent")
    announce.add_argument("eid", help="EID to register, e.g. ipn:5.1")
    announce.add_argument("--cla", default=None, help="Local CLA serving the EID (default: first configured)")
    announce.add_argument("--attr", action="append", default=[], metavar="TYPE:HEX", help="EID attribute, repeatable")

    withdraw = sub.add_parser("withdraw", parents=[node], help="Deregister a local EID")
    withdraw.add_argument("eid", help="EID to deregister")

    sub.add_parser("rib", parents=[node], help="Print the node's RIB")
    sub.add_parser("fib", parents=[node], help="Print the BP agent's FIB")

    probe = sub.add_parser("probe", parents=[node], help="Forward a payload toward an EID via the node's FIB")
    probe.add_argument("eid", help="Destination EID")
    probe.add_argument("--payload", default="hello, node", help="Payload text")

    scenario = sub.add_parser("scenario", parents=[common], help="Run a scenario file")
    scenario.add_argument("file", help="Scenario TOML file")
    scenario.add_argument("--log-dir", default=None, help="Per-node log directory (default: LOG_DIR)")
    return parser


def _agent_client(config: ErdsConfig) -> AgentClient:
    host, port = parse_endpoint(config.bp.listen)
    if host in ("0.0.0.0", "::"):
        host = "127.0.0.1"
    return AgentClient(host, port)


def _print(args: argparse.Namespace, text: str, data) -> None:
    if args.json:
        print(json.dumps(data, indent=2, sort_keys=True))
    elif text:
        print(text)


def parse_rib_dump(text: str) -> List[Dict]:
    """Parse ``eid | next_hop | safi | as_path | source | attr_count`` lines back into rows."""
    rows = []
    for line in text.splitlines():
        if not line.strip():
            continue
        values = [value.strip() for value in line.split("|")]
        row = dict(zip(RIB_FIELDS, values))
        row["safi"] = int(row["safi"])
        row["attr_count"] = int(row["attr_count"])
        row["as_path"] = [] if row["as_path"] == "-" else [int(asn) for asn in row["as_path"].split()]
        rows.append(row)
    return rows


async def cmd_run(args: argparse.Namespace, config: ErdsConfig) -> int:
    node = ErdsNode(config)
    try:
        await node.run_forever()
    except asyncio.CancelledError:
        pass
    return 0


async def cmd_announce(args: argparse.Namespace, config: ErdsConfig) -> int:
    EndpointId.parse(args.eid)
    attributes = parse_attribute_specs(args.attr)
    if args.cla is None and not config.cla:
        raise ConfigError(args.config, "node has no [[cla]] to serve the EID")
    cla = args.cla or config.cla[0].name
    await _agent_client(config).register(args.eid, cla, attributes)
    _print(args, f"registered {args.eid} via {cla}", {"eid": args.eid, "cla": cla, "registered": True})
    return 0


async def cmd_withdraw(args: argparse.Namespace, config: ErdsConfig) -> int:
    EndpointId.parse(args.eid)
    await _agent_client(config).deregister(args.eid)
    _print(args, f"deregistered {args.eid}", {"eid": args.eid, "registered": False})
    return 0


async def cmd_rib(args: argparse.Namespace, config: ErdsConfig) -> int:
    if config.node.api:
        host, port = parse_endpoint(config.node.api)
        client = StatusClient(host, port)
        if args.json:
            _print(args, "", (await client.rib())["routes"])
        else:
            text = await client.rib_text()
            if text:
                print(text, end="")
        return 0

    path = config.node.rib_dump_path
    if not path:
        raise ConfigError(args.config, "node has neither [node] api nor rib_dump_path")
    text = ""
    if os.path.exists(path):
        with open(path) as f:
            text = f.read()
    _print(args, text.rstrip("\n"), parse_rib_dump(text))
    return 0


async def cmd_fib(args: argparse.Namespace, config: ErdsConfig) -> int:
    entries = await _agent_client(config).fib_get()
    lines = [f"{e.eid} | {e.to_endpoint()} | {e.safi}" for e in entries]
    _print(args, "\n".join(lines), [e.dict() for e in entries])
    return 0


async def cmd_probe(args: argparse.Namespace, config: ErdsConfig) -> int:
    EndpointId.parse(args.eid)
    report = await _agent_client(config).bundle_send(args.eid, args.payload.encode("utf-8"))
    text = f"{report.get('eid')} via {report.get('target')}: {report.get('size')} bytes, rtt {format_rtt(report.get('rtt', 0.0))}"
    _print(args, text, report)
    return 0 if report.get("success") else 1


async def cmd_scenario(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.file)
    report = await run_scenario(scenario, log_dir=args.log_dir or settings.LOG_DIR)
    if args.json:
        _print(args, "", report.as_dict())
    else:
        for step in report.steps:
            print(step.line())
        verdict = "passed" if report.passed else f"failed ({len(report.failures)} of {len(report.steps)} steps)"
        print(f"scenario {report.name} {verdict} in {report.duration:.1f}s")
    for failure in report.failures:
        print(f"FAIL: {failure.detail}", file=sys.stderr)
    return 0 if report.passed else 1


NODE_COMMANDS = {
    "run": cmd_run,
    "announce": cmd_announce,
    "withdraw": cmd_withdraw,
    "rib": cmd_rib,
    "fib": cmd_fib,
    "probe": cmd_probe,
}


async def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run one subcommand and return the process exit status."""
    args = build_parser().parse_args(argv)
    # Keep stdout clean for dumps
    setup_logging(args.log_level, stream=sys.stderr)

    try:
        if args.command == "scenario":
            return await cmd_scenario(args)
        config = load_node_config(args.config)
        return await NODE_COMMANDS[args.command](args, config)
    except ConfigError as e:
        logger.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return 2
    except InvariantViolation as e:
        print(f"error: {e.detail}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (AgentProtocolError, AdapterError) as e:
        print(f"error: {e.detail}", file=sys.stderr)
        return 1
    except ErdsException as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    try:
        exit_code = asyncio.run(main())
    except KeyboardInterrupt:
        exit_code = 130
    sys.exit(exit_code)
