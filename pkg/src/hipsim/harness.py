"""Replication plumbing: config hashing and an order-preserving parallel map."""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .process import derive_seed, stream

__all__ = ["config_hash", "pmap", "provenance", "derive_seed", "stream", "jsonable"]


def jsonable(obj):
    """Recursively convert numpy containers and scalars to plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        obj = float(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def config_hash(config: dict) -> str:
    """Short SHA-256 digest of the canonical JSON form of ``config``."""
    text = json.dumps(jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def provenance(config: dict, seed: int) -> dict:
    return {"config": jsonable(config), "config_hash": config_hash(config), "seed": int(seed),
            "version": __version__}


def pmap(fn, items, jobs: int = 1, chunksize: int | None = None) -> list:
    """``[fn(x) for x in items]``, optionally spread over ``jobs`` processes.

    Results come back in input order, so downstream reductions do not
    depend on ``jobs``.
    """
    items = list(items)
    if jobs is None or jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    if chunksize is None:
        chunksize = max(1, len(items) // (4 * jobs))
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items, chunksize=chunksize))
