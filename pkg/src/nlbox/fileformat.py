"""JSON documents for systems, protocols and reports.

Probabilities are written as strings (``"1/2"``, ``"0"``) so that files
round-trip exactly. Documents are UTF-8 with sorted keys and a trailing
newline, and every document carries ``schema_version``.
"""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path

from .errors import ShapeError
from .model import ConditionalDistribution, rationalize

SCHEMA_VERSION = 1


class FormatError(ValueError):
    """A document that cannot be parsed into the expected object."""


def _rational_str(p: Fraction) -> str:
    return str(p) if p.denominator != 1 else str(p.numerator)


def _parse_entry(v, allow_float: bool):
    if isinstance(v, bool):
        raise FormatError(f"boolean is not a probability: {v!r}")
    if isinstance(v, int):
        return Fraction(v)
    if isinstance(v, str):
        try:
            return Fraction(v.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise FormatError(f"cannot parse probability {v!r}") from exc
    if isinstance(v, float):
        if not allow_float:
            raise FormatError(f"float probability {v!r}; write it as a fraction or pass --rationalize")
        return v
    raise FormatError(f"unsupported probability entry {v!r}")


def system_to_dict(P: ConditionalDistribution) -> dict:
    X, Y, A, B = P.shape
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "system",
        "sizes": {"x": X, "y": Y, "a": A, "b": B},
        "probs": [[[[_rational_str(p) for p in r] for r in P.row(x, y)] for y in range(Y)] for x in range(X)],
    }


def system_from_dict(doc: dict, *, rationalize_max: int | None = None, tol: float = 1e-6) -> ConditionalDistribution:
    """Parse a system document.

    Float entries are refused unless ``rationalize_max`` is given, in which
    case the whole table is rationalized with that denominator bound.
    """
    if not isinstance(doc, dict):
        raise FormatError("system document must be a JSON object")
    if doc.get("kind", "system") != "system":
        raise FormatError(f"expected kind 'system', got {doc.get('kind')!r}")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise FormatError(f"unsupported schema_version {version!r}")
    try:
        sizes = doc["sizes"]
        X, Y, A, B = (int(sizes[k]) for k in ("x", "y", "a", "b"))
        probs = doc["probs"]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"system document is missing {exc}") from exc
    allow_float = rationalize_max is not None
    try:
        table = [
            [[[_parse_entry(v, allow_float) for v in r] for r in blk] for blk in px]
            for px in probs
        ]
    except TypeError as exc:
        raise FormatError("probs must be a nested [x][y][a][b] array") from exc
    _check_sizes(table, (X, Y, A, B))
    if allow_float and any(isinstance(v, float) for px in table for blk in px for r in blk for v in r):
        return rationalize(table, rationalize_max, tol)
    try:
        return ConditionalDistribution(X, Y, A, B, table)
    except ShapeError as exc:
        raise FormatError(str(exc)) from exc


def _check_sizes(table, sizes) -> None:
    X, Y, A, B = sizes
    ok = len(table) == X and all(
        len(px) == Y and all(len(blk) == A and all(len(r) == B for r in blk) for blk in px) for px in table
    )
    if not ok:
        raise FormatError(f"probs does not match declared sizes x={X}, y={Y}, a={A}, b={B}")


def dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_json(path, doc: dict) -> None:
    doc = {"schema_version": SCHEMA_VERSION, **doc}
    Path(path).write_text(dumps(doc), encoding="utf-8")


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc


def load_system(path, *, rationalize_max: int | None = None, tol: float = 1e-6) -> ConditionalDistribution:
    """Load a system file, or the system embedded in a protocol file."""
    doc = read_json(path)
    if isinstance(doc, dict) and doc.get("kind") == "protocol":
        doc = doc.get("system")
    return system_from_dict(doc, rationalize_max=rationalize_max, tol=tol)


def save_system(path, P: ConditionalDistribution) -> None:
    write_json(path, system_to_dict(P))
