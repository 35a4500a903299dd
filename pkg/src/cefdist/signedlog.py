"""Signed values carried as (sign, log-magnitude) and their stable summation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

NEG_INF = float("-inf")


@dataclass(frozen=True)
class SignedLogValue:
    """``sign * exp(log_mag)``; ``sign == 0`` is an exact zero."""

    sign: int
    log_mag: float = NEG_INF

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError(f"sign must be -1, 0 or +1, got {self.sign!r}")
        if self.sign == 0:
            object.__setattr__(self, "log_mag", NEG_INF)
        elif math.isnan(self.log_mag) or self.log_mag == NEG_INF:
            raise ValueError("non-zero signed value needs a finite log-magnitude")

    @classmethod
    def zero(cls) -> "SignedLogValue":
        return cls(0)

    @classmethod
    def from_float(cls, x: float) -> "SignedLogValue":
        if x == 0:
            return cls(0)
        return cls(1 if x > 0 else -1, math.log(abs(x)))

    def __float__(self) -> float:
        return 0.0 if self.sign == 0 else self.sign * math.exp(self.log_mag)

    def __neg__(self) -> "SignedLogValue":
        return SignedLogValue(-self.sign, self.log_mag)

    def __mul__(self, other: "SignedLogValue") -> "SignedLogValue":
        if self.sign == 0 or other.sign == 0:
            return SignedLogValue(0)
        return SignedLogValue(self.sign * other.sign, self.log_mag + other.log_mag)

    def __add__(self, other: "SignedLogValue") -> "SignedLogValue":
        acc = LogSum.from_terms(np.array([self.sign, other.sign]),
                                np.array([self.log_mag, other.log_mag]))
        return acc.value(cancel_rtol=0.0)


class CancellationError(ArithmeticError):
    """A quantity that must be non-negative accumulated to a clearly negative value."""

    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (signed residual {residual:.17g})")


@dataclass(frozen=True)
class LogSum:
    """Partial signed log-sum-exp: separate positive and negative pools.

    Each pool is ``exp(shift) * total`` with ``total`` the compensated sum of
    exponentials shifted by the pool maximum.  Partials from disjoint term
    ranges merge associatively up to rounding.
    """

    pos_shift: float = NEG_INF
    pos_total: float = 0.0
    neg_shift: float = NEG_INF
    neg_total: float = 0.0
    count: int = 0

    @staticmethod
    def _pool(logs: np.ndarray) -> tuple[float, float]:
        if logs.size == 0:
            return NEG_INF, 0.0
        m = float(np.max(logs))
        return m, math.fsum(np.exp(logs - m))

    @classmethod
    def from_terms(cls, signs: np.ndarray, logs: np.ndarray) -> "LogSum":
        signs = np.asarray(signs)
        logs = np.asarray(logs, dtype=float)
        nonzero = signs != 0
        if np.any(np.isnan(logs[nonzero])) or np.any(logs[nonzero] == np.inf):
            raise FloatingPointError("non-finite log-magnitude in signed summation")
        live = nonzero & (logs > NEG_INF)
        ps, pt = cls._pool(logs[live & (signs > 0)])
        ns, nt = cls._pool(logs[live & (signs < 0)])
        return cls(ps, pt, ns, nt, int(signs.size))

    @staticmethod
    def _merge_pool(s1, t1, s2, t2):
        if s1 == NEG_INF:
            return s2, t2
        if s2 == NEG_INF:
            return s1, t1
        m = max(s1, s2)
        return m, t1 * math.exp(s1 - m) + t2 * math.exp(s2 - m)

    def merge(self, other: "LogSum") -> "LogSum":
        ps, pt = self._merge_pool(self.pos_shift, self.pos_total, other.pos_shift, other.pos_total)
        ns, nt = self._merge_pool(self.neg_shift, self.neg_total, other.neg_shift, other.neg_total)
        return LogSum(ps, pt, ns, nt, self.count + other.count)

    @property
    def log_positive(self) -> float:
        """Log-magnitude of the positive pool."""
        return NEG_INF if self.pos_shift == NEG_INF else self.pos_shift + math.log(self.pos_total)

    @property
    def log_negative(self) -> float:
        return NEG_INF if self.neg_shift == NEG_INF else self.neg_shift + math.log(self.neg_total)

    def residual(self) -> float:
        """Signed result relative to the positive pool (1.0 means no cancellation)."""
        if self.pos_shift == NEG_INF:
            return -1.0 if self.neg_shift > NEG_INF else 0.0
        m = max(self.pos_shift, self.neg_shift)
        p = self.pos_total * math.exp(self.pos_shift - m)
        n = self.neg_total * math.exp(self.neg_shift - m) if self.neg_shift > NEG_INF else 0.0
        return (p - n) / p

    def value(self, cancel_rtol: float = 0.0) -> SignedLogValue:
        """Merge the pools into one signed value.

        A result whose magnitude is at most ``cancel_rtol`` times the positive
        pool is returned as an exact zero.
        """
        if self.pos_shift == NEG_INF and self.neg_shift == NEG_INF:
            return SignedLogValue.zero()
        if self.neg_shift == NEG_INF:
            return SignedLogValue(1, self.log_positive)
        if self.pos_shift == NEG_INF:
            return SignedLogValue(-1, self.log_negative)
        m = max(self.pos_shift, self.neg_shift)
        p = self.pos_total * math.exp(self.pos_shift - m)
        n = self.neg_total * math.exp(self.neg_shift - m)
        diff = p - n
        if abs(diff) <= cancel_rtol * p or diff == 0.0:
            return SignedLogValue.zero()
        return SignedLogValue(1 if diff > 0 else -1, m + math.log(abs(diff)))


def logsumexp_fsum(logs) -> float:
    """log(sum(exp(logs))) with a max shift and compensated summation."""
    return LogSum.from_terms(np.ones(len(logs)), np.asarray(logs, dtype=float)).log_positive
