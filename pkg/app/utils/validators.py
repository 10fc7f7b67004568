"""
Validation utilities for the EID Reachability Distribution Service.
"""

from typing import Iterable, Tuple

from app.core.exceptions import InvariantViolation
from app.services.nlri.models import EidAttribute, EndpointId


def validate_eid(text: str) -> bool:
    """
    Check whether a string is an EID this node can advertise.

    Args:
        text: EID text, e.g. "ipn:5.1" or "dtn://node/app"

    Returns:
        True if the EID parses, False otherwise
    """
    try:
        EndpointId.parse(text)
    except InvariantViolation:
        return False
    return True


def parse_attribute_spec(spec: str) -> EidAttribute:
    """
    Parse a ``TYPE:HEX`` attribute given on the command line or in a scenario.

    Args:
        spec: e.g. "1:0a0b"; the value may be empty ("7:")

    Returns:
        The attribute

    Raises:
        ValueError: If the type is not 0-255 or the value is not hex
    """
    type_text, sep, value_hex = spec.partition(":")
    if not sep or not type_text.strip().isdigit():
        raise ValueError(f"attribute '{spec}' must be TYPE:HEX")
    try:
        value = bytes.fromhex(value_hex)
    except ValueError:
        raise ValueError(f"attribute '{spec}' has a value that is not hex")
    try:
        return EidAttribute(int(type_text), value)
    except InvariantViolation as e:
        raise ValueError(e.detail)


def parse_attribute_specs(specs: Iterable[str]) -> Tuple[EidAttribute, ...]:
    return tuple(parse_attribute_spec(spec) for spec in specs)
