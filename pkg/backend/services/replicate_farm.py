"""
Seeded replicate execution over a process pool

Replicate i always draws from default_rng(replicate_seed(master_seed, i)), so
results do not depend on the number of workers or on scheduling order.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, List, Sequence

import numpy as np

from utils.rng import replicate_rng, replicate_seed

logger = logging.getLogger(__name__)

DEFAULT_CHUNK_SIZE = 250


def _run_chunk(task: Callable, master_seed: int, start: int, stop: int, args: Sequence[Any]) -> List[Any]:
    return [task(replicate_rng(master_seed, i), *args) for i in range(start, stop)]


class ReplicateFarm:
    """
    Run `task(rng, *args)` for replicate indices 0..count-1

    Args:
        master_seed: root of all replicate streams
        workers: process count; 1 runs inline
        chunk_size: replicates per submitted job
    """

    def __init__(self, master_seed: int, workers: int = 1, chunk_size: int = DEFAULT_CHUNK_SIZE):
        if workers < 1:
            raise ValueError(f"workers must be >= 1, got {workers}")
        if chunk_size < 1:
            raise ValueError(f"chunk_size must be >= 1, got {chunk_size}")
        self.master_seed = int(master_seed)
        self.workers = workers
        self.chunk_size = chunk_size

    def rng_for(self, index: int) -> np.random.Generator:
        return replicate_rng(self.master_seed, index)

    def seed_for(self, index: int) -> int:
        return replicate_seed(self.master_seed, index)

    def run(self, task: Callable, count: int, *args: Any) -> List[Any]:
        """
        Results in replicate order

        `task` and `args` must be picklable when workers > 1 (module-level functions).
        """
        bounds = [(lo, min(lo + self.chunk_size, count)) for lo in range(0, count, self.chunk_size)]
        if self.workers == 1 or len(bounds) <= 1:
            results = []
            for lo, hi in bounds:
                results.extend(_run_chunk(task, self.master_seed, lo, hi, args))
            return results

        logger.info("dispatching %d replicates in %d chunks to %d workers", count, len(bounds), self.workers)
        with ProcessPoolExecutor(max_workers=self.workers) as pool:
            futures = [pool.submit(_run_chunk, task, self.master_seed, lo, hi, args) for lo, hi in bounds]
            results = []
            # collected in submission order, which is replicate order
            for future in futures:
                results.extend(future.result())
        return results

    def run_array(self, task: Callable, count: int, *args: Any) -> np.ndarray:
        return np.asarray(self.run(task, count, *args), dtype=np.float64)
