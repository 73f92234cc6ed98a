from __future__ import annotations

from typing import Iterator, Sequence

import numpy as np


def _recycled_order(n: int, length: int, rng: np.random.Generator) -> list[int]:
    order: list[int] = []
    while len(order) < length:
        order.extend(rng.permutation(n).tolist())
    return order[:length]


def balanced_batches(datasets: Sequence[Sequence], batch_size: int, rng=None) -> Iterator[list[tuple[int, object]]]:
    """One epoch of batches with ``batch_size // len(datasets)`` items per dataset.

    Yields lists of ``(dataset_index, item)``. The largest dataset sets the
    epoch length and is visited once per epoch (exactly once when its size
    divides evenly); smaller ones are recycled with a fresh shuffle each pass.
    """
    n = len(datasets)
    if n == 0:
        raise ValueError("no datasets given")
    if batch_size <= 0 or batch_size % n:
        raise ValueError(f"batch size {batch_size} is not divisible by the number of datasets ({n})")
    if any(len(d) == 0 for d in datasets):
        raise ValueError("cannot batch an empty dataset")
    rng = np.random.default_rng(rng)
    per = batch_size // n
    n_batches = -(-max(len(d) for d in datasets) // per)
    orders = [_recycled_order(len(d), n_batches * per, rng) for d in datasets]
    for b in range(n_batches):
        batch = []
        for k, d in enumerate(datasets):
            batch.extend((k, d[i]) for i in orders[k][b * per:(b + 1) * per])
        yield batch
