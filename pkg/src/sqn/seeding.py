"""Deterministic RNG derivation from structured seed material."""

from __future__ import annotations

import numpy as np


def flatten_seed(*parts) -> list[int]:
    flat = []
    for p in parts:
        if isinstance(p, (tuple, list)):
            flat.extend(flatten_seed(*p))
        elif isinstance(p, str):
            flat.extend(p.encode("utf-8"))
        else:
            flat.append(int(p))
    return flat


def rng_from(*parts) -> np.random.Generator:
    """Generator keyed by any mix of ints, strings and nested tuples."""
    return np.random.default_rng(flatten_seed(*parts))
