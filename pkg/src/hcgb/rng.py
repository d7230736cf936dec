"""Counter-based RNG substreams for reproducible data-parallel Monte Carlo.

Every sampling loop in the package draws from Philox streams keyed by
(seed, chunk_index).  Chunks have a fixed size, so the stream layout -- and
therefore every estimate -- depends only on the seed and the total sample
count, never on how many workers the chunks were farmed out to.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

CHUNK_SIZE = 2048


def substream(seed, chunk_index):
    """Independent generator for one chunk of one logical experiment."""
    return np.random.Generator(np.random.Philox(key=[int(seed) % 2 ** 64, int(chunk_index)]))


def chunk_plan(total, chunk_size=CHUNK_SIZE):
    """Split `total` samples into (chunk_index, count) pieces of fixed size."""
    if total <= 0:
        raise ValueError(f"sample count must be positive, got {total}")
    plan = []
    done = 0
    idx = 0
    while done < total:
        take = min(chunk_size, total - done)
        plan.append((idx, take))
        done += take
        idx += 1
    return plan


def run_chunks(fn, jobs, workers=1):
    """Run fn over jobs, inline or on a process pool; results in job order.

    Chunk results are merged in submission order by the callers, so the
    worker count never changes the outcome, only the wall time.
    """
    if workers is None:
        workers = default_workers()
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))


def default_workers():
    """Worker count from HCGB_WORKERS, defaulting to 1 (results never depend on it)."""
    raw = os.environ.get("HCGB_WORKERS", "1")
    try:
        w = int(raw)
    except ValueError:
        return 1
    return max(1, w)
