"""Canonical JSON and exact-rational helpers shared across the package.

Every entity serializes to one canonical byte form: sorted keys, UTF-8,
no insignificant whitespace. Scores and point values are exact rationals
rendered as "n" or "n/d" strings so exports never depend on float
formatting.
"""

from __future__ import annotations

import hashlib
import json
from fractions import Fraction


def canonical_json(value: object) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canonical_bytes(value: object) -> bytes:
    return canonical_json(value).encode("utf-8")


def payload_hash(value: object) -> str:
    return hashlib.sha256(canonical_bytes(value)).hexdigest()


def frac_to_str(value: Fraction) -> str:
    """Render a rational as "n" for integers, "n/d" otherwise."""
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def frac_from_str(raw: str | int) -> Fraction:
    if isinstance(raw, int):
        return Fraction(raw)
    return Fraction(raw)


def ceil_mul(fraction: Fraction, count: int) -> int:
    """Exact ceiling of fraction * count without float round-off."""
    scaled = fraction * count
    return -((-scaled.numerator) // scaled.denominator)
