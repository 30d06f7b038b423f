"""Small shared helpers."""

from __future__ import annotations

import hashlib
import math


def round_half_up(x: float) -> int:
    """Round to nearest integer with .5 going up (unlike banker's rounding)."""
    return int(math.floor(x + 0.5))


def stable_digest(text: str) -> str:
    """Short hex digest used to stamp artifacts with their resolved config."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
