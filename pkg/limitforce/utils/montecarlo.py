"""Seeded, chunked Monte Carlo driver.

The sample budget is split into a fixed number of chunks, each with its own
generator spawned from one SeedSequence, so a (seed, chunks) pair always gives
the same numbers regardless of how many workers run the chunks.
"""
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, TypeVar
import logging

import numpy as np

from limitforce.config import get_settings
from limitforce.models import Estimate

logger = logging.getLogger(__name__)

T = TypeVar("T")


def chunk_sizes(total: int, chunks: int) -> List[int]:
    base, extra = divmod(total, chunks)
    return [base + (1 if i < extra else 0) for i in range(chunks)]


def chunk_generators(seed: int, chunks: int) -> List[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(chunks)]


def run_chunks(task: Callable[[np.random.Generator, int], T], total: int, seed: int,
               chunks: Optional[int] = None, workers: Optional[int] = None) -> List[T]:
    """Run task(rng, size) for every nonempty chunk; results come back in chunk order"""
    settings = get_settings()
    chunks = chunks or settings.MC_CHUNKS
    workers = workers or settings.MC_WORKERS
    jobs = [
        (rng, size)
        for rng, size in zip(chunk_generators(seed, chunks), chunk_sizes(total, chunks))
        if size > 0
    ]
    logger.debug("Monte Carlo run: %d samples in %d chunks, seed %d", total, len(jobs), seed)
    if workers <= 1 or len(jobs) <= 1:
        return [task(rng, size) for rng, size in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: task(*job), jobs))


def proportion_estimate(hits: int, samples: int, method: str = "mc") -> Estimate:
    p = hits / samples
    return Estimate(
        value=p,
        std_error=float(np.sqrt(max(p * (1 - p), 0.0) / samples)),
        samples=samples,
        method=method,
    )


def mean_estimate(values: np.ndarray, method: str = "mc") -> Estimate:
    values = np.asarray(values, dtype=float)
    n = values.size
    if n == 0:
        raise ValueError("cannot estimate a mean from zero samples")
    se = float(values.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return Estimate(value=float(values.mean()), std_error=se, samples=n, method=method)


def collect(task: Callable[[np.random.Generator, int], np.ndarray], total: int, seed: int,
            chunks: Optional[int] = None, workers: Optional[int] = None) -> np.ndarray:
    """Concatenate per-chunk sample arrays"""
    parts = run_chunks(task, total, seed, chunks, workers)
    return np.concatenate(parts) if parts else np.empty(0)
