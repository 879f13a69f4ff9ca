"""Strict JSON parsing for backend replies that are contractually JSON-only."""

from __future__ import annotations

import json
import re


class ParseFailure(ValueError):
    """The text is not JSON even after the single repair pass."""


class SchemaViolation(ValueError):
    """Parsed JSON does not match the expected shape."""


_FENCE_RE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)

# expected_shape: required key -> (container type, element type or None).
HINTS_SHAPE = {"hints": (list, dict)}
ANSWER_SHAPE = {"answer": (list, int)}


def _repair(text: str) -> str:
    """One repair pass: prefer a fenced block, else slice from the first '{'
    to the last '}'. Anything beyond this single pass is treated as backend
    drift and surfaces as an error."""
    m = _FENCE_RE.search(text)
    if m:
        return m.group(1).strip()
    start, end = text.find("{"), text.rfind("}")
    if start != -1 and end > start:
        return text[start : end + 1]
    return text


def parse_strict_json(text: str, expected_shape: dict[str, tuple[type, type | None]]) -> dict:
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        try:
            value = json.loads(_repair(text))
        except json.JSONDecodeError as exc:
            raise ParseFailure(f"not valid JSON: {text[:120]!r}") from exc

    if not isinstance(value, dict):
        raise SchemaViolation(f"expected a JSON object, got {type(value).__name__}")
    for key, (container, elem) in expected_shape.items():
        if key not in value:
            raise SchemaViolation(f"missing required key {key!r}")
        got = value[key]
        if not isinstance(got, container) or isinstance(got, bool):
            raise SchemaViolation(f"key {key!r} must be {container.__name__}")
        if elem is not None and container is list:
            for item in got:
                if not isinstance(item, elem) or (elem is int and isinstance(item, bool)):
                    raise SchemaViolation(f"elements of {key!r} must be {elem.__name__}")
    return value
