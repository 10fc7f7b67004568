"""
Agent protocol: line-delimited JSON spoken between the BP agent simulator,
the ERDS and control clients (the CLI, the scenario runner).

Requests may carry an ``id`` that the ``ok``/``error`` reply echoes. The
agent also pushes ``register``/``deregister`` lines to the ERDS connection;
those carry no ``id`` and expect no reply.
"""

import json
from enum import Enum
from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, Field, ValidationError

from app.core.exceptions import AgentProtocolError
from app.services.nlri.models import ClaEndpoint, EidAttribute

MAX_LINE_SIZE = 1 << 20


class AgentOp(str, Enum):
    HELLO = "hello"
    REGISTER = "register"
    DEREGISTER = "deregister"
    FIB_SET = "fib_set"
    FIB_DEL = "fib_del"
    FIB_GET = "fib_get"
    BUNDLE_SEND = "bundle_send"
    BUNDLE_RECV = "bundle_recv"
    OK = "ok"
    ERROR = "error"


class AgentRole(str, Enum):
    ERDS = "erds"
    CONTROL = "control"


class AttributeModel(BaseModel):
    """EID attribute in hex form."""
    type: int = Field(..., ge=0, le=255)
    value_hex: str = ""

    def to_attribute(self) -> EidAttribute:
        try:
            return EidAttribute(self.type, bytes.fromhex(self.value_hex))
        except ValueError as e:
            raise AgentProtocolError(f"attribute value is not hex: {e}")

    @classmethod
    def from_attribute(cls, attribute: EidAttribute) -> "AttributeModel":
        return cls(type=attribute.attr_type, value_hex=attribute.value.hex())


class FibEntryModel(BaseModel):
    eid: str
    safi: int = Field(..., ge=0, le=255)
    host: str
    port: int = Field(..., ge=0, le=65535)

    def to_endpoint(self) -> ClaEndpoint:
        return ClaEndpoint.from_host(self.safi, self.host, self.port)

    @classmethod
    def from_endpoint(cls, eid: str, endpoint: ClaEndpoint) -> "FibEntryModel":
        return cls(eid=eid, safi=endpoint.safi, host=endpoint.host, port=endpoint.port)


class RegistrationModel(BaseModel):
    eid: str
    cla: str
    attributes: List[AttributeModel] = []


class ReceivedBundleModel(BaseModel):
    seq: int
    size: int
    payload_b64: str
    peer: str


class AgentMessage(BaseModel):
    """One protocol line; which fields are meaningful depends on ``op``."""
    op: AgentOp
    id: Optional[Union[int, str]] = None
    role: Optional[AgentRole] = None
    eid: Optional[str] = None
    cla: Optional[str] = None
    attributes: List[AttributeModel] = []
    entries: List[FibEntryModel] = []
    eids: List[str] = []
    payload_b64: Optional[str] = None
    registrations: List[RegistrationModel] = []
    bundles: List[ReceivedBundleModel] = []
    report: Optional[Dict[str, Any]] = None
    reason: Optional[str] = None

    @property
    def is_reply(self) -> bool:
        return self.op in (AgentOp.OK, AgentOp.ERROR)


def ok(request: Optional[AgentMessage] = None, **fields) -> AgentMessage:
    return AgentMessage(op=AgentOp.OK, id=request.id if request else None, **fields)


def error(reason: str, request: Optional[AgentMessage] = None) -> AgentMessage:
    return AgentMessage(op=AgentOp.ERROR, id=request.id if request else None, reason=reason)


def encode_message(message: AgentMessage) -> bytes:
    """Serialize a message as one JSON line, omitting unset fields."""
    return message.json(exclude_defaults=True).encode("utf-8") + b"\n"


def decode_message(line: bytes) -> AgentMessage:
    """
    Parse one protocol line.

    Raises:
        AgentProtocolError: If the line is not JSON or not a valid message
    """
    try:
        data = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as e:
        raise AgentProtocolError(f"malformed JSON: {e}")
    if not isinstance(data, dict):
        raise AgentProtocolError("message must be a JSON object")
    try:
        return AgentMessage.parse_obj(data)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"])
        raise AgentProtocolError(f"{location}: {first['msg']}")
