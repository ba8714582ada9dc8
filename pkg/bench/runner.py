"""
Seed-parallel execution.

Each seed runs on its own worker thread with its own state; results are
collected by seed position and handed back in seed order, so the output
does not depend on scheduling.
"""

from __future__ import annotations

import logging
import queue
import threading
from typing import Any, Callable, Optional, Sequence, TypeVar

from tqdm import tqdm

from errors import InvalidArgumentError

logger = logging.getLogger(__name__)

T = TypeVar("T")

# Sentinel telling a worker to exit.
_DONE = None


def run_seeds(
    fn: Callable[[int], T],
    seeds: Sequence[int],
    workers: int = 1,
    progress: bool = False,
    desc: str = "seeds",
) -> list[T]:
    """Call ``fn(seed)`` for every seed; the first failure (in seed order) is re-raised."""
    if workers < 1:
        raise InvalidArgumentError(f"workers must be >= 1, got {workers}")
    seeds = list(seeds)
    results: list[Optional[T]] = [None] * len(seeds)
    errors: list[Optional[BaseException]] = [None] * len(seeds)
    bar = tqdm(total=len(seeds), desc=desc, disable=not progress, leave=False)
    lock = threading.Lock()

    if workers == 1 or len(seeds) <= 1:
        for i, seed in enumerate(seeds):
            results[i] = fn(seed)
            bar.update(1)
        bar.close()
        return results  # type: ignore[return-value]

    jobs: queue.Queue[Optional[tuple[int, int]]] = queue.Queue()
    for item in enumerate(seeds):
        jobs.put(item)

    def _worker():
        while True:
            job = jobs.get()
            if job is _DONE:
                return
            i, seed = job
            try:
                value: Any = fn(seed)
                with lock:
                    results[i] = value
            except BaseException as exc:  # re-raised on the caller's thread
                logger.debug("[Runner] seed %d failed: %s", seed, exc)
                with lock:
                    errors[i] = exc
            with lock:
                bar.update(1)

    threads = [threading.Thread(target=_worker, daemon=True) for _ in range(min(workers, len(seeds)))]
    for _ in threads:
        jobs.put(_DONE)
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    bar.close()

    for exc in errors:
        if exc is not None:
            raise exc
    return results  # type: ignore[return-value]
