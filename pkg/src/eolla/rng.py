"""Deterministic random streams.

Every random stream in a run is derived from the scenario seed and a stream
label, ``sha256(f"{seed}/{label}")``. Streams are therefore independent of
how many other streams exist, so adding a UE never perturbs another UE.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream_seed(seed: int, label: str) -> int:
    digest = hashlib.sha256(f"{int(seed)}/{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def stream(seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng(stream_seed(seed, label))


def ue_label(cell_id: int, ue_index: int, purpose: str) -> str:
    return f"cell{cell_id}/ue{ue_index}/{purpose}"
