"""Parsing of alpha/set specifications from the shell grammar and from JSON.

Shell grammar::

    alpha:  const:C | affine:A,B | cubic:V0,V1,...
    set:    interval:A,B | point:A | cantor:A,B,LAMBDA | empty
            | union:[SET;SET;...]

Numbers may be written as decimals or simple fractions such as ``1/3``.
The JSON fragments use the same kinds as object keys, for example
``{"kind": "cantor", "a": 0, "b": 1, "lambda": 0.3333333333}`` and
``{"kind": "affine", "a": 0.5, "b": 0.4}``.
"""
from fractions import Fraction
import json

from .sets import EMPTY, FiniteUnion, Interval, MiddleCantor, Point, is_empty
from .stable_core import AlphaSpec


def _number(text):
    text = text.strip()
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"not a number: {text!r}") from None


def _numbers(body, count=None, what="spec"):
    vals = [_number(p) for p in body.split(",")] if body.strip() else []
    if count is not None and len(vals) != count:
        raise ValueError(f"{what} expects {count} numbers, got {len(vals)}")
    return vals


def _split_kind(spec):
    kind, sep, body = spec.strip().partition(":")
    return kind.strip().lower(), body if sep else ""


def parse_alpha(spec):
    """AlphaSpec from ``const:c``, ``affine:a,b`` or ``cubic:v0,...``."""
    kind, body = _split_kind(spec)
    if kind in ("const", "constant"):
        return AlphaSpec.constant(*_numbers(body, 1, "const"))
    if kind == "affine":
        return AlphaSpec.affine(*_numbers(body, 2, "affine"))
    if kind == "cubic":
        return AlphaSpec.cubic(_numbers(body, None, "cubic"))
    raise ValueError(f"unknown alpha spec {spec!r}")


def _split_members(body):
    body = body.strip()
    if not (body.startswith("[") and body.endswith("]")):
        raise ValueError("union members must be enclosed in [...]")
    inner = body[1:-1]
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(inner):
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        elif ch == ";" and depth == 0:
            parts.append(inner[start:i])
            start = i + 1
    parts.append(inner[start:])
    return [p for p in parts if p.strip()]


def parse_set(spec):
    """SetSpec from the shell grammar."""
    kind, body = _split_kind(spec)
    if kind == "interval":
        return Interval(*_numbers(body, 2, "interval"))
    if kind == "point":
        return Point(*_numbers(body, 1, "point"))
    if kind == "cantor":
        return MiddleCantor(*_numbers(body, 3, "cantor"))
    if kind == "empty":
        return EMPTY
    if kind == "union":
        return FiniteUnion(tuple(parse_set(m) for m in _split_members(body)))
    raise ValueError(f"unknown set spec {spec!r}")


def alpha_from_json(d):
    kind = d.get("kind")
    if kind in ("const", "constant"):
        return AlphaSpec.constant(d["c"])
    if kind == "affine":
        return AlphaSpec.affine(d["a"], d["b"])
    if kind == "cubic":
        return AlphaSpec.cubic(d["values"])
    raise ValueError(f"unknown alpha kind {kind!r}")


def alpha_to_json(alpha):
    return alpha.to_dict()


def set_from_json(d):
    kind = d.get("kind")
    if kind == "interval":
        return Interval(float(d["a"]), float(d["b"]))
    if kind == "point":
        return Point(float(d["a"]))
    if kind == "cantor":
        return MiddleCantor(float(d["a"]), float(d["b"]), float(d["lambda"]))
    if kind == "empty":
        return EMPTY
    if kind == "union":
        return FiniteUnion(tuple(set_from_json(m) for m in d["members"]))
    raise ValueError(f"unknown set kind {kind!r}")


def set_to_json(e):
    if is_empty(e):
        return {"kind": "empty"}
    if isinstance(e, Interval):
        return {"kind": "interval", "a": e.a, "b": e.b}
    if isinstance(e, Point):
        return {"kind": "point", "a": e.a}
    if isinstance(e, MiddleCantor):
        return {"kind": "cantor", "a": e.a, "b": e.b, "lambda": e.lam}
    if isinstance(e, FiniteUnion):
        return {"kind": "union", "members": [set_to_json(m) for m in e.members]}
    raise TypeError(f"unsupported set {e!r}")


def alpha_arg(value):
    """Accept either the shell grammar or a JSON fragment."""
    if value.lstrip().startswith("{"):
        d = json.loads(value)
        return alpha_from_json(d.get("alpha", d))
    return parse_alpha(value)


def set_arg(value):
    if value.lstrip().startswith("{"):
        d = json.loads(value)
        return set_from_json(d.get("set", d))
    return parse_set(value)
