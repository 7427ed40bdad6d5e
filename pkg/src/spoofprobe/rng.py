"""Deterministic seed derivation shared by corpus generation and interventions."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(*parts: object) -> int:
    """Hash the parts into a 63-bit seed, stable across platforms and runs."""
    text = "/".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def rng_from(*parts: object) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*parts))
