import logging
import os
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from multiprocessing import Pool
from typing import Any

logger = logging.getLogger(__name__)

THREADS_ENV = "GEXITLAB_THREADS"


def default_threads() -> int:
    value = os.environ.get(THREADS_ENV)
    if value:
        try:
            threads = int(value)
        except ValueError as e:
            raise ValueError(f"Invalid value for {THREADS_ENV}: {value!r}") from e
        if threads < 1:
            raise ValueError(f"{THREADS_ENV} must be positive, got {threads}")
        return threads
    cpus = os.cpu_count()
    if cpus is None:
        cpus = 1
    return cpus


@dataclass
class Job:
    index: int
    args: tuple
    weight: float = 1.0


def balanced_chunks(jobs: list[Job], n: int) -> list[list[Job]]:
    jobs = sorted(jobs, key=lambda x: x.weight, reverse=True)
    chunks: list[list[Job]] = [[] for _ in range(n)]
    sums = [0.0] * n
    for job in jobs:
        i = sums.index(min(sums))
        chunks[i].append(job)
        sums[i] += job.weight
    return chunks


def _run_chunk(fn: Callable[..., Any], chunk: list[Job]) -> list[tuple[int, Any]]:
    return [(job.index, fn(*job.args)) for job in chunk]


def parallel_map(fn: Callable[..., Any], args: Sequence[tuple], threads: int = 1, weights: Sequence[float] | None = None) -> list[Any]:
    """fn(*a) for every a in args, in order; fn must be a module-level function."""
    jobs = [Job(i, tuple(a), 1.0 if weights is None else float(weights[i])) for i, a in enumerate(args)]
    threads = max(1, min(threads, len(jobs)))
    if threads == 1:
        return [fn(*job.args) for job in jobs]

    logger.debug(f"Running {len(jobs)} jobs on {threads} processes")
    with Pool(processes=threads) as pool:
        results = pool.starmap_async(_run_chunk, [(fn, chunk) for chunk in balanced_chunks(jobs, threads)])
        out: list[Any] = [None] * len(jobs)
        for chunk in results.get():
            for index, value in chunk:
                out[index] = value
    return out
