from contextlib import nullcontext
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, TypeVar

from tqdm import tqdm

from src.errors import ValidationFailure

T = TypeVar("T")


def block_slices(n: int, block_size: int) -> List[slice]:
    """
    Fixed partition of range(n) into consecutive blocks.

    The partition depends only on n and block_size, never on the worker count, so
    every block is computed with identical array shapes however many threads run.
    """
    if block_size < 1:
        raise ValidationFailure(f"Block size must be positive, got {block_size}")
    return [slice(start, min(start + block_size, n)) for start in range(0, n, block_size)]


def run_blocks(
        fn: Callable[[slice], T],
        n: int,
        block_size: int = 16,
        workers: int = 1,
        desc: str = "",
        progress: bool = False,
) -> List[T]:
    """
    Apply fn to every block of range(n) and return the results in block order.

    Args:
        fn: Pure function of a slice of item indices.
        n (int): Number of items.
        block_size (int): Items per block.
        workers (int): Thread count; numpy releases the GIL inside BLAS and FFT calls.
        desc (str): Progress-bar label.
        progress (bool): Show a tqdm progress bar.

    Returns:
        List: One result per block, ordered by block index.
    """
    if workers < 1:
        raise ValidationFailure(f"Worker count must be positive, got {workers}")
    blocks = block_slices(n, block_size)
    if workers == 1:
        return [fn(block) for block in tqdm(blocks, desc=desc, disable=not progress)]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        # map preserves submission order
        return list(tqdm(executor.map(fn, blocks), total=len(blocks), desc=desc, disable=not progress))


def ordered_sum(parts: Sequence):
    """Left-to-right sum of block partials; the order is fixed by the block partition."""
    total = parts[0].copy()
    for part in parts[1:]:
        total = total + part
    return total


def timed(timer, name: str):
    """timer.phase(name) when a timer is given, otherwise a no-op context."""
    return timer.phase(name) if timer is not None else nullcontext()
