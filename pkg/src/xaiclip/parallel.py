"""Deterministic worker-pool dispatch for the perturbation engines.

Tasks are evaluated by a thread pool bounded by both the requested job count
and the predictor's declared max_concurrency; results come back as a list in
task-index order, so reductions never depend on scheduling.
"""

import os
from concurrent.futures import ThreadPoolExecutor


def effective_jobs(jobs: int, max_concurrency: int) -> int:
    if jobs < 1:
        jobs = os.cpu_count() or 1
    if max_concurrency > 0:
        jobs = min(jobs, max_concurrency)
    return max(jobs, 1)


def run_indexed(fn, n_tasks: int, jobs: int, max_concurrency: int = 0) -> list:
    """Evaluate fn(i) for i in range(n_tasks); results in index order."""
    jobs = effective_jobs(jobs, max_concurrency)
    if jobs == 1 or n_tasks <= 1:
        return [fn(i) for i in range(n_tasks)]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, range(n_tasks)))
