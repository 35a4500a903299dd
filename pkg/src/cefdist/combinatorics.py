"""
Weak compositions and multinomial coefficients.

Compositions of ``alpha`` into ``k`` parts are emitted in the order of the
nested loops

    for a1 in 0..alpha:
      for a2 in 0..a1:
        ...
          for a_{k-1} in 0..a_{k-2}:
            parts = (alpha - a1, a1 - a2, ..., a_{k-2} - a_{k-1}, a_{k-1})

so index ``i`` always denotes the same composition.  Contiguous index ranges
can be unranked directly, which is how the enumeration is split between
workers.
"""
from __future__ import annotations

import functools
import math
from typing import Iterator, NamedTuple, Sequence

import numpy as np
from scipy.special import gammaln

DEFAULT_TERM_CAP = 10**8


class TermBudgetError(RuntimeError):
    """The number of expansion terms exceeds the configured cap."""

    def __init__(self, count: int, cap: int, what: str = "compositions"):
        self.count = count
        self.cap = cap
        super().__init__(f"{what}: {count} terms exceed the term cap of {cap}")


class Composition(NamedTuple):
    parts: tuple[int, ...]
    index: int


def binomial(n: int, r: int) -> int:
    """Exact C(n, r); zero when r > n."""
    if n < 0 or r < 0:
        raise ValueError("binomial arguments must be non-negative")
    return math.comb(n, r)


def composition_count(alpha: int, k: int) -> int:
    """Number of weak compositions of ``alpha`` into ``k`` parts."""
    _check_args(alpha, k)
    return binomial(k + alpha - 1, alpha)


def check_budget(alpha: int, k: int, term_cap: int = DEFAULT_TERM_CAP) -> int:
    count = composition_count(alpha, k)
    if count > term_cap:
        raise TermBudgetError(count, term_cap)
    return count


def _check_args(alpha: int, k: int) -> None:
    if int(alpha) != alpha or alpha < 0:
        raise ValueError(f"alpha must be a non-negative integer, got {alpha!r}")
    if int(k) != k or k < 1:
        raise ValueError(f"k must be a positive integer, got {k!r}")


def _unrank(alpha: int, k: int, index: int) -> list[int]:
    """Loop variables (a1, ..., a_{k-1}) of the composition at ``index``."""
    loops = []
    bound = alpha
    for j in range(1, k):
        remaining = k - 1 - j  # loop variables nested inside a_j
        for v in range(bound + 1):
            block = math.comb(v + remaining, remaining)
            if index < block:
                break
            index -= block
        loops.append(v)
        bound = v
    return loops


def _parts(alpha: int, loops: list[int]) -> tuple[int, ...]:
    prev = alpha
    out = []
    for a in loops:
        out.append(prev - a)
        prev = a
    out.append(prev)
    return tuple(out)


def _advance(alpha: int, loops: list[int]) -> bool:
    """Step the nested loops in place; False once they are exhausted."""
    for j in range(len(loops) - 1, -1, -1):
        bound = loops[j - 1] if j else alpha
        if loops[j] < bound:
            loops[j] += 1
            for i in range(j + 1, len(loops)):
                loops[i] = 0
            return True
    return False


def _index_range(alpha: int, k: int, start: int, stop: int | None, term_cap: int) -> tuple[int, int]:
    total = check_budget(alpha, k, term_cap)
    stop = total if stop is None else min(stop, total)
    if start < 0 or start > stop:
        raise ValueError(f"invalid index range [{start}, {stop}) for {total} compositions")
    return start, stop


def enumerate_compositions(alpha: int, k: int, *, term_cap: int = DEFAULT_TERM_CAP,
                           start: int = 0, stop: int | None = None) -> Iterator[Composition]:
    """Yield the weak compositions of ``alpha`` into ``k`` parts in canonical order.

    ``start``/``stop`` select a contiguous slice of the canonical order.

    Raises
    ------
    TermBudgetError
        If the total number of compositions exceeds ``term_cap``.
    """
    _check_args(alpha, k)
    start, stop = _index_range(alpha, k, start, stop, term_cap)
    if start == stop:
        return
    loops = _unrank(alpha, k, start)
    for index in range(start, stop):
        yield Composition(_parts(alpha, loops), index)
        _advance(alpha, loops)


def composition_array(alpha: int, k: int, start: int = 0, stop: int | None = None, *,
                      term_cap: int = DEFAULT_TERM_CAP) -> np.ndarray:
    """Compositions in ``[start, stop)`` as an ``(n, k)`` integer array."""
    _check_args(alpha, k)
    start, stop = _index_range(alpha, k, start, stop, term_cap)
    n = stop - start
    out = np.empty((n, k), dtype=np.int64)
    if n == 0:
        return out
    loops = _unrank(alpha, k, start)
    for row in range(n):
        out[row] = _parts(alpha, loops)
        _advance(alpha, loops)
    return out


def split_range(total: int, chunks: int) -> list[tuple[int, int]]:
    """Split ``range(total)`` into at most ``chunks`` contiguous, near-equal ranges."""
    chunks = max(1, min(int(chunks), total)) if total else 1
    bounds = [total * i // chunks for i in range(chunks + 1)]
    return [(bounds[i], bounds[i + 1]) for i in range(chunks)]


# ----------------------------------------------------------------------------
# multinomial coefficients


@functools.lru_cache(maxsize=None)
def _pascal(key: tuple[int, ...]) -> int:
    # key: positive parts sorted in decreasing order; coefficients are symmetric
    if len(key) <= 1:
        return 1
    total = 0
    i = 0
    while i < len(key):
        j = i
        while j < len(key) and key[j] == key[i]:
            j += 1
        # the (j - i) equal parts all lead to the same predecessor
        lowered = key[:j - 1] + (key[j - 1] - 1,) + key[j:]
        total += (j - i) * _pascal(tuple(sorted((p for p in lowered if p), reverse=True)))
        i = j
    return total


def multinomial_coeff_exact(parts: Sequence[int]) -> int:
    """alpha! / (alpha_1! ... alpha_k!) through the Pascal-simplex recurrence.

    Zero if any part is negative.  The recursion depth equals ``sum(parts)``,
    so this path is meant for moderate totals (a few hundred).
    """
    parts = tuple(int(p) for p in parts)
    if any(p < 0 for p in parts):
        return 0
    return _pascal(tuple(sorted((p for p in parts if p), reverse=True)))


def multinomial_coeff_log(parts: Sequence[int]) -> float:
    """Log of the multinomial coefficient via log-Gamma sums."""
    parts = [int(p) for p in parts]
    if any(p < 0 for p in parts):
        return float("-inf")
    return math.lgamma(sum(parts) + 1) - math.fsum(math.lgamma(p + 1) for p in parts)


def log_multinomial_rows(comps: np.ndarray) -> np.ndarray:
    """Row-wise log multinomial coefficients of an ``(n, k)`` composition array."""
    comps = np.asarray(comps)
    return gammaln(comps.sum(axis=1) + 1.0) - gammaln(comps + 1.0).sum(axis=1)
