"""
Scenario file models.

A scenario is a TOML file with a ``[scenario]`` table, one ``[nodes.<name>]``
table per node (an inline node configuration whose ``[[peer]]`` entries may
reference another node with ``node = "<name>"``, and whose ports may be 0 for
automatic allocation) and an ordered ``[[event]]`` list.
"""

import sys
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, ValidationError, root_validator, validator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from app.config import get_settings
from app.core.exceptions import ConfigError
from app.utils.validators import parse_attribute_spec

settings = get_settings()


class ScenarioAction(str, Enum):
    REGISTER = "register"
    DEREGISTER = "deregister"
    EXPECT_RIB = "expect_rib"
    EXPECT_FIB = "expect_fib"
    EXPECT_ESTABLISHED = "expect_established"
    EXPECT_NO_LOOPS = "expect_no_loops"
    EXPECT_STABLE_UPDATES = "expect_stable_updates"
    PROBE = "probe"
    KILL_PEER = "kill_peer"
    SLEEP = "sleep"


EXPECTATIONS = frozenset({
    ScenarioAction.EXPECT_RIB,
    ScenarioAction.EXPECT_FIB,
    ScenarioAction.EXPECT_ESTABLISHED,
    ScenarioAction.EXPECT_NO_LOOPS,
    ScenarioAction.EXPECT_STABLE_UPDATES,
    ScenarioAction.PROBE,
})


class ScenarioMeta(BaseModel):
    """The [scenario] table."""
    name: str
    description: str = ""
    hold: int = 3
    connect_retry: float = 1.0


class ScenarioEvent(BaseModel):
    """
    One [[event]].

    ``eid`` may contain ``{i}`` together with ``count`` to address
    ``count`` EIDs at once (i = 1..count). ``next_hop`` is either
    ``"<node>.<cla>"``, ``"<node>"`` (its first CLA) or a literal ``host:port``.
    """
    at: float = Field(0.0, ge=0)
    action: ScenarioAction
    label: Optional[str] = None
    node: Optional[str] = None

    eid: Optional[str] = None
    count: int = Field(1, ge=1)
    cla: Optional[str] = None
    attributes: List[str] = []

    next_hop: Optional[str] = None
    as_path_len: Optional[int] = Field(None, ge=0)
    absent: bool = False
    timeout: Optional[float] = Field(None, gt=0)

    payload: str = "hello, node"
    peer: Optional[str] = None
    mode: str = "shutdown"
    window: float = Field(5.0, gt=0)
    duration: float = Field(0.0, ge=0)

    @validator("mode")
    def validate_mode(cls, v):
        if v not in ("shutdown", "silent"):
            raise ValueError("mode must be 'shutdown' or 'silent'")
        return v

    @validator("attributes", each_item=True)
    def validate_attribute(cls, v):
        parse_attribute_spec(v)
        return v

    @root_validator(skip_on_failure=True)
    def validate_params(cls, values):
        action = values["action"]
        needs_node = action not in (ScenarioAction.EXPECT_NO_LOOPS, ScenarioAction.EXPECT_STABLE_UPDATES, ScenarioAction.SLEEP)
        if needs_node and not values.get("node"):
            raise ValueError(f"{action.value} needs a node")
        if action in (ScenarioAction.REGISTER, ScenarioAction.DEREGISTER, ScenarioAction.EXPECT_RIB,
                      ScenarioAction.EXPECT_FIB, ScenarioAction.PROBE) and not values.get("eid"):
            raise ValueError(f"{action.value} needs an eid")
        if action in (ScenarioAction.KILL_PEER, ScenarioAction.EXPECT_ESTABLISHED) and not values.get("peer"):
            raise ValueError(f"{action.value} needs a peer")
        if values["count"] > 1 and "{i}" not in (values.get("eid") or ""):
            raise ValueError("count > 1 needs an eid template containing {i}")
        if action in EXPECTATIONS and values.get("timeout") is None:
            values["timeout"] = settings.EXPECT_DEFAULT_TIMEOUT
        return values

    @property
    def is_expectation(self) -> bool:
        return self.action in EXPECTATIONS

    def eids(self) -> List[str]:
        if self.count == 1 and "{i}" not in self.eid:
            return [self.eid]
        return [self.eid.replace("{i}", str(i)) for i in range(1, self.count + 1)]

    def describe(self) -> str:
        parts = [self.action.value]
        if self.node:
            parts.append(f"@{self.node}")
        if self.eid:
            parts.append(self.eid if self.count == 1 else f"{self.eid} x{self.count}")
        if self.peer:
            parts.append(f"peer={self.peer}")
        return " ".join(parts)


class ScenarioFile(BaseModel):
    scenario: ScenarioMeta
    nodes: Dict[str, Dict[str, Any]]
    event: List[ScenarioEvent] = []

    @validator("nodes")
    def validate_nodes(cls, v):
        if not v:
            raise ValueError("a scenario needs at least one node")
        return v

    @root_validator(skip_on_failure=True)
    def validate_events(cls, values):
        names = set(values["nodes"])
        previous = 0.0
        for index, event in enumerate(values["event"], start=1):
            if event.at < previous:
                raise ValueError(f"event {index} at {event.at}s is earlier than the event before it")
            previous = event.at
            for ref in (event.node, event.peer):
                if ref is not None and ref not in names:
                    raise ValueError(f"event {index} references unknown node '{ref}'")
        return values

    @property
    def events(self) -> List[ScenarioEvent]:
        return self.event


def parse_scenario(data: Dict[str, Any], source: str = "<inline>") -> ScenarioFile:
    """
    Validate a parsed scenario table.

    Raises:
        ConfigError: If the scenario is invalid
    """
    try:
        return ScenarioFile.parse_obj(data)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"])
        raise ConfigError(source, f"{location}: {first['msg']}")


def load_scenario(path: str) -> ScenarioFile:
    """
    Load a scenario TOML file.

    Raises:
        ConfigError: If the file is missing, unparsable or invalid
    """
    try:
        with Path(path).open("rb") as f:
            data = tomllib.load(f)
    except FileNotFoundError:
        raise ConfigError(path, "file not found")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(path, f"invalid TOML: {e}")
    return parse_scenario(data, source=path)
