"""Stable derivation of named sub-seeds from one run seed.

Every source of randomness (parameter init, shuffling, synthesis) draws from
a sub-seed named after its role, so components of a run can be reproduced
independently of each other. Hashing is content-based, never salted, so the
derivation is stable across processes and platforms.
"""

from __future__ import annotations

import hashlib


def derive_seed(seed: int, label: str) -> int:
    digest = hashlib.sha256(f"{int(seed)}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")
