"""
Closed-form Minkowski-type distances between mixtures of conic exponential families.

For same-family densities the weighted geometric integral is

    I(theta_1..theta_k; a_1..a_k) = exp(F(sum a_i theta_i) - sum a_i F(theta_i)),

so raising a mixture to an integer power and integrating reduces, through the
multinomial theorem, to a finite sum over weak compositions.  Every sum here is
accumulated in signed log domain (see :mod:`cefdist.signedlog`).
"""
from __future__ import annotations

import enum
import functools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Mapping, NamedTuple, Sequence

import numpy as np

from . import expfam
from .combinatorics import (
    DEFAULT_TERM_CAP,
    check_budget,
    composition_array,
    composition_count,
    log_multinomial_rows,
    split_range,
)
from .expfam import Family, NaturalParameter
from .signedlog import CancellationError, LogSum, SignedLogValue, logsumexp_fsum

# results below this fraction of their natural scale count as zero
CANCEL_RTOL = 1e-10
BLOCK_SIZE = 1 << 15


class UnsupportedExponentError(ValueError):
    """No closed form exists for this metric/exponent; use the oracle."""


class Metric(str, enum.Enum):
    M = "M"
    D = "D"
    L = "L"
    CS = "CS"
    TV = "TV"

    @classmethod
    def parse(cls, name: str) -> "Metric":
        try:
            return cls(name.strip().upper())
        except ValueError:
            raise ValueError(f"unknown metric {name!r}; expected one of M, D, L, CS, TV") from None


@dataclass(frozen=True)
class DistanceKind:
    metric: Metric
    alpha: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "metric", Metric(self.metric))
        if self.alpha is None:
            object.__setattr__(self, "alpha", 1 if self.metric is Metric.TV else 2)
        alpha = float(self.alpha)
        if self.metric is Metric.CS and alpha != 2:
            raise ValueError("the Cauchy-Schwarz divergence fixes alpha = 2")
        if self.metric is Metric.TV and alpha != 1:
            raise ValueError("total variation fixes alpha = 1")
        if not alpha >= 1:
            raise ValueError(f"alpha must be >= 1, got {self.alpha!r}")
        object.__setattr__(self, "alpha", int(alpha) if alpha.is_integer() else alpha)

    @classmethod
    def of(cls, metric: str | Metric, alpha: float | None = None) -> "DistanceKind":
        metric = Metric.parse(metric) if isinstance(metric, str) else Metric(metric)
        return cls(metric, alpha)

    def closed_form_rule(self) -> str | None:
        """Why no closed form exists, or None if one does."""
        a = self.alpha
        if self.metric is Metric.TV:
            return "total variation has no closed form; use an oracle"
        if not float(a).is_integer():
            return f"{self.metric.value} closed form requires an integer alpha, got {a}"
        if self.metric is Metric.M and (a < 2 or a % 2):
            return f"M closed form requires even alpha >= 2, got {a}"
        if self.metric in (Metric.D, Metric.L) and a < 2:
            return f"{self.metric.value} closed form requires integer alpha >= 2, got {a}"
        return None

    def __str__(self) -> str:
        return f"{self.metric.value}_{self.alpha}"


@dataclass(frozen=True, eq=False)
class MixtureModel:
    """Positive finite mixture ``sum_i w_i p_{theta_i}`` over one family."""

    family: Family
    weights: np.ndarray
    params: tuple[NaturalParameter, ...]

    def __post_init__(self):
        w = np.array(self.weights, dtype=float, ndmin=1)
        params = tuple(self.params)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("a mixture needs at least one component")
        if len(params) != w.size:
            raise ValueError(f"{w.size} weights but {len(params)} components")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("mixture weights must be positive and finite")
        for i, theta in enumerate(params):
            if not expfam.in_cone(self.family, theta):
                raise expfam.ConeViolationError(
                    f"components[{i}]", f"natural parameter outside the {self.family} cone")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "params", params)

    @classmethod
    def from_source(cls, family: Family, weights: Sequence[float],
                    sources: Sequence[Mapping[str, Any]]) -> "MixtureModel":
        return cls(family, weights, tuple(expfam.to_natural(family, s) for s in sources))

    @classmethod
    def single(cls, family: Family, theta: NaturalParameter, weight: float = 1.0) -> "MixtureModel":
        return cls(family, [weight], (theta,))

    @property
    def k(self) -> int:
        return len(self.params)

    @property
    def total_weight(self) -> float:
        return math.fsum(self.weights)

    @property
    def normalized(self) -> bool:
        return abs(self.total_weight - 1.0) <= 1e-12

    @functools.cached_property
    def packed(self) -> np.ndarray:
        rows = np.stack([expfam.pack(self.family, t) for t in self.params])
        rows.setflags(write=False)
        return rows

    @functools.cached_property
    def log_partitions(self) -> np.ndarray:
        return expfam.log_partition_packed(self.family, self.packed)

    def scaled(self, factor: float) -> "MixtureModel":
        return MixtureModel(self.family, self.weights * factor, self.params)

    def __add__(self, other: "MixtureModel") -> "MixtureModel":
        """The positive measure m + m' as one (unnormalized) mixture."""
        _same_family(self, other)
        return MixtureModel(self.family, np.concatenate([self.weights, other.weights]),
                            self.params + other.params)

    def canonical(self) -> "MixtureModel":
        """Same mixture with components in a fixed order (parameters, then weight).

        Floating-point sums over components depend on their order; pooled
        mixtures are canonicalized so that symmetric quantities are symmetric
        to the last bit.
        """
        order = _canonical_order(self.packed, self.weights)
        return MixtureModel(self.family, self.weights[order], tuple(self.params[i] for i in order))

    def __repr__(self) -> str:
        return f"MixtureModel({self.family}, k={self.k}, total_weight={self.total_weight!r})"


def _canonical_order(packed: np.ndarray, weights: np.ndarray) -> np.ndarray:
    keys = np.column_stack([packed, weights])
    return np.lexsort(keys.T[::-1])


def _same_family(m: MixtureModel, m2: MixtureModel) -> None:
    if m.family != m2.family:
        raise ValueError(f"mixtures belong to different families: {m.family} vs {m2.family}")


# ----------------------------------------------------------------------------
# geometric integrals


def log_geometric_integral(family: Family, thetas: Sequence[NaturalParameter],
                           alphas: Sequence[float]) -> float:
    """log of ``integral prod_i p_{theta_i}(x)^alphas[i] dmu``."""
    combo = expfam.linear_combination(family, thetas, alphas)
    Fs = [expfam.log_partition(family, t) for t in thetas]
    return expfam.log_partition(family, combo) - math.fsum(a * f for a, f in zip(alphas, Fs))


def jensen_diversity(family: Family, thetas: Sequence[NaturalParameter],
                     alphas: Sequence[float]) -> float:
    """Generalized Jensen diversity ``sum a_i F(theta_i) - F(sum a_i theta_i)``."""
    return -log_geometric_integral(family, thetas, alphas)


# ----------------------------------------------------------------------------
# power sums over compositions


@dataclass(frozen=True)
class _Terms:
    """A signed combination ``sum_l c_l p_{phi_l}`` in array form."""

    family: Family
    packed: np.ndarray      # (K, P) natural parameters
    log_abs: np.ndarray     # (K,) log |c_l|
    negative: np.ndarray    # (K,) bool, c_l < 0
    log_F: np.ndarray       # (K,) F(phi_l)


def _unit_weights(weights: np.ndarray) -> tuple[np.ndarray, float]:
    """Weights divided by the largest one, and the log of that scale.

    Expansions cancel heavily, so per-term log weights are kept near zero and
    the overall scale is applied once at the end.
    """
    scale = float(np.max(weights))
    return weights / scale, math.log(scale)


def _mixture_terms(m: MixtureModel) -> tuple[_Terms, float]:
    w, log_scale = _unit_weights(m.weights)
    return _Terms(m.family, m.packed, np.log(w), np.zeros(m.k, dtype=bool), m.log_partitions), log_scale


def _block_sum(terms: _Terms, beta: int, start: int, stop: int) -> LogSum:
    acc = LogSum()
    for s in range(start, stop, BLOCK_SIZE):
        e = min(stop, s + BLOCK_SIZE)
        A = composition_array(beta, terms.packed.shape[0], s, e, term_cap=math.inf)
        Af = A.astype(float)
        combined = expfam.symmetrize_packed(terms.family, Af @ terms.packed)
        logs = (log_multinomial_rows(A) + Af @ terms.log_abs
                + expfam.log_partition_packed(terms.family, combined) - Af @ terms.log_F)
        odd = (A[:, terms.negative].sum(axis=1) % 2) == 1
        signs = np.where(odd, -1, 1)
        acc = acc.merge(LogSum.from_terms(signs, logs))
    return acc


def _power_sum(terms: _Terms, beta: int, *, term_cap: int = DEFAULT_TERM_CAP,
               workers: int = 1) -> LogSum:
    """``integral (sum_l c_l p_{phi_l})^beta dmu`` as a signed partial sum."""
    k = terms.packed.shape[0]
    total = check_budget(beta, k, term_cap)
    ranges = split_range(total, workers)
    if workers > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=len(ranges)) as pool:
            partials = list(pool.map(lambda r: _block_sum(terms, beta, *r), ranges))
    else:
        partials = [_block_sum(terms, beta, *r) for r in ranges]
    # merge in worker order so the result does not depend on scheduling
    acc = LogSum()
    for p in partials:
        acc = acc.merge(p)
    return acc


class NormResult(NamedTuple):
    value: float
    log_value: float
    term_count: int


def lp_norm_details(m: MixtureModel, alpha: int, *, term_cap: int = DEFAULT_TERM_CAP,
                    workers: int = 1) -> NormResult:
    """L_alpha norm of a positive mixture, with its log and the number of terms."""
    if int(alpha) != alpha or alpha < 1:
        raise UnsupportedExponentError(f"closed-form norm requires an integer alpha >= 1, got {alpha}")
    alpha = int(alpha)
    if alpha == 1:
        # components are normalized densities
        lw = logsumexp_fsum(np.log(m.weights))
        return NormResult(math.exp(lw), lw, m.k)
    terms, log_scale = _mixture_terms(m)
    acc = _power_sum(terms, alpha, term_cap=term_cap, workers=workers)
    log_norm = acc.log_positive / alpha + log_scale
    return NormResult(math.exp(log_norm), log_norm, composition_count(alpha, m.k))


def mixture_lp_norm(m: MixtureModel, alpha: int, *, term_cap: int = DEFAULT_TERM_CAP,
                    workers: int = 1) -> float:
    """``(integral m^alpha dmu)^(1/alpha)`` in closed form for integer ``alpha``."""
    return lp_norm_details(m, alpha, term_cap=term_cap, workers=workers).value


# ----------------------------------------------------------------------------
# squared differences


@dataclass(frozen=True)
class ProductComponent:
    """One term ``coeff * p_phi`` of an expanded product of mixtures."""

    coeff: SignedLogValue
    phi: NaturalParameter


def _product_terms(m: MixtureModel, m2: MixtureModel, merge: bool = False,
                   unit: bool = False) -> tuple[_Terms, float]:
    """Terms of (m - m2)^2; with ``unit`` the weights are rescaled as in :func:`_unit_weights`
    and the returned log scale applies to m - m2 (not its square)."""
    _same_family(m, m2)
    fam = m.family
    packed = np.concatenate([m.packed, m2.packed])
    w = np.concatenate([m.weights, m2.weights])
    log_scale = 0.0
    if unit:
        w, log_scale = _unit_weights(w)
    log_w = np.log(w)
    neg = np.concatenate([np.zeros(m.k, dtype=bool), np.ones(m2.k, dtype=bool)])
    F = np.concatenate([m.log_partitions, m2.log_partitions])
    # swapping m and m2 only flips every sign, which the squares do not see
    order = _canonical_order(packed, w)
    packed, log_w, neg, F = packed[order], log_w[order], neg[order], F[order]
    n = packed.shape[0]
    ia, ib = np.divmod(np.arange(n * n), n)
    phi = packed[ia] + packed[ib]
    F_phi = expfam.log_partition_packed(fam, phi)
    # w_a p_a * w_b p_b = w_a w_b I(a, b; 1, 1) p_{phi}
    log_abs = log_w[ia] + log_w[ib] + F_phi - F[ia] - F[ib]
    negative = neg[ia] != neg[ib]
    if merge:
        groups: dict[bytes, list[int]] = {}
        for i, row in enumerate(phi):
            groups.setdefault(row.tobytes(), []).append(i)
        keep, logs, negs = [], [], []
        for idx in groups.values():
            v = LogSum.from_terms(np.where(negative[idx], -1, 1), log_abs[idx]).value()
            if v.sign:
                keep.append(idx[0])
                logs.append(v.log_mag)
                negs.append(v.sign < 0)
        phi, F_phi = phi[keep], F_phi[keep]
        log_abs, negative = np.array(logs), np.array(negs, dtype=bool)
    return _Terms(fam, phi, log_abs, negative, F_phi), log_scale


def product_expand(m: MixtureModel, m2: MixtureModel, *, merge: bool = False) -> list[ProductComponent]:
    """Expand ``(m - m2)^2`` into signed, normalized product densities.

    Ordered pairs are kept by default; ``merge=True`` folds terms whose natural
    parameters are exactly equal.
    """
    t, _ = _product_terms(m, m2, merge)
    return [ProductComponent(SignedLogValue(-1 if neg else 1, float(la)), expfam.unpack(m.family, row))
            for row, la, neg in zip(t.packed, t.log_abs, t.negative)]


def _terms_from_components(family: Family, comps: Sequence[ProductComponent]) -> _Terms:
    live = [c for c in comps if c.coeff.sign != 0]
    if not live:
        raise ValueError("no non-zero components to integrate")
    packed = np.stack([expfam.pack(family, c.phi) for c in live])
    return _Terms(family, packed,
                  np.array([c.coeff.log_mag for c in live]),
                  np.array([c.coeff.sign < 0 for c in live]),
                  expfam.log_partition_packed(family, packed))


def signed_power_integral(family: Family, comps: Sequence[ProductComponent], beta: int, *,
                          term_cap: int = DEFAULT_TERM_CAP, workers: int = 1,
                          cancel_rtol: float = CANCEL_RTOL) -> SignedLogValue:
    """``integral (sum_l c_l p_{phi_l})^beta dmu`` for signed coefficients."""
    if int(beta) != beta or beta < 1:
        raise ValueError(f"beta must be a positive integer, got {beta!r}")
    if not any(c.coeff.sign for c in comps):
        return SignedLogValue.zero()
    acc = _power_sum(_terms_from_components(family, comps), int(beta), term_cap=term_cap, workers=workers)
    return acc.value(cancel_rtol)


# ----------------------------------------------------------------------------
# distances


@dataclass
class Evaluation:
    """A closed-form value with its bookkeeping."""

    value: float
    raw: float
    term_count: int
    warnings: list[str] = field(default_factory=list)


def _clamp(raw: float, scale: float, what: str) -> float:
    if raw >= 0:
        return raw
    if raw >= -CANCEL_RTOL * scale:
        return 0.0
    raise CancellationError(f"{what} accumulated to a negative value", raw)


def _check_pair(m: MixtureModel, m2: MixtureModel) -> None:
    _same_family(m, m2)


def _minkowski_gap(m, m2, alpha, metric, term_cap, workers) -> Evaluation:
    na = lp_norm_details(m, alpha, term_cap=term_cap, workers=workers)
    nb = lp_norm_details(m2, alpha, term_cap=term_cap, workers=workers)
    nab = lp_norm_details((m + m2).canonical(), alpha, term_cap=term_cap, workers=workers)
    terms = na.term_count + nb.term_count + nab.term_count
    warnings = []
    if not (m.normalized and m2.normalized):
        warnings.append("inputs are not normalized; identity of indiscernibles does not apply")
    if metric is Metric.D:
        raw = na.value + nb.value - nab.value
        value = _clamp(raw, na.value + nb.value, "D")
    else:
        raw = float(np.logaddexp(na.log_value, nb.log_value)) - nab.log_value
        value = _clamp(raw, 1.0, "L")
    return Evaluation(value, raw, terms, warnings)


def _minkowski_m(m, m2, alpha, term_cap, workers) -> Evaluation:
    terms, log_scale = _product_terms(m, m2, unit=True)
    beta = alpha // 2
    count = check_budget(beta, terms.packed.shape[0], term_cap)
    acc = _power_sum(terms, beta, term_cap=term_cap, workers=workers)
    residual = acc.residual()
    raw_power = residual * math.exp(acc.log_positive + alpha * log_scale)
    raw = math.copysign(abs(raw_power) ** (1.0 / alpha), raw_power)
    v = acc.value(CANCEL_RTOL)
    if v.sign < 0:
        raise CancellationError(f"integral of (m - m')^{alpha} accumulated to a negative value",
                                raw_power)
    value = 0.0 if v.sign == 0 else math.exp(v.log_mag / alpha + log_scale)
    return Evaluation(value, raw, count)


def log_inner_product(m: MixtureModel, m2: MixtureModel) -> float:
    """log of ``integral m m' dmu`` from pairwise geometric integrals."""
    _same_family(m, m2)
    phi = (m.packed[:, None, :] + m2.packed[None, :, :]).reshape(-1, m.packed.shape[1])
    F_phi = expfam.log_partition_packed(m.family, phi).reshape(m.k, m2.k)
    logs = (np.log(m.weights)[:, None] + np.log(m2.weights)[None, :]
            + F_phi - m.log_partitions[:, None] - m2.log_partitions[None, :])
    return logsumexp_fsum(logs.ravel())


def _cauchy_schwarz(m, m2, term_cap, workers) -> Evaluation:
    na = lp_norm_details(m, 2, term_cap=term_cap, workers=workers)
    nb = lp_norm_details(m2, 2, term_cap=term_cap, workers=workers)
    raw = na.log_value + nb.log_value - log_inner_product(m, m2)
    return Evaluation(_clamp(raw, 1.0, "CS"), raw, na.term_count + nb.term_count + m.k * m2.k)


def evaluate_distance(kind: DistanceKind, m: MixtureModel, m2: MixtureModel, *,
                      term_cap: int = DEFAULT_TERM_CAP, workers: int = 1) -> Evaluation:
    """Closed-form M/D/L/CS between two mixtures of the same family.

    Raises
    ------
    UnsupportedExponentError
        For TV, odd or non-integer M exponents, and alpha < 2 for D and L.
    CancellationError
        When a quantity that must be non-negative comes out clearly negative.
    TermBudgetError
        When the expansion exceeds ``term_cap`` terms.
    """
    _check_pair(m, m2)
    rule = kind.closed_form_rule()
    if rule:
        raise UnsupportedExponentError(rule)
    alpha = int(kind.alpha)
    if kind.metric in (Metric.D, Metric.L):
        return _minkowski_gap(m, m2, alpha, kind.metric, term_cap, workers)
    if kind.metric is Metric.M:
        return _minkowski_m(m, m2, alpha, term_cap, workers)
    return _cauchy_schwarz(m, m2, term_cap, workers)


def closed_form_distance(kind: DistanceKind, m: MixtureModel, m2: MixtureModel, *,
                         term_cap: int = DEFAULT_TERM_CAP, workers: int = 1) -> float:
    return evaluate_distance(kind, m, m2, term_cap=term_cap, workers=workers).value


def evaluate_diversity(densities: Sequence[MixtureModel], weights: Sequence[float], alpha: int, *,
                       term_cap: int = DEFAULT_TERM_CAP, workers: int = 1) -> Evaluation:
    """Minkowski diversity index ``sum w_i ||p_i|| - ||sum w_i p_i||``."""
    w = np.asarray(weights, dtype=float)
    if len(densities) == 0 or w.shape != (len(densities),):
        raise ValueError("need one positive weight per density")
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise ValueError("diversity weights must be positive")
    if int(alpha) != alpha or alpha < 2:
        raise UnsupportedExponentError(f"diversity closed form requires integer alpha >= 2, got {alpha}")
    fam = densities[0].family
    for p in densities[1:]:
        _same_family(densities[0], p)
    norms = [lp_norm_details(p, int(alpha), term_cap=term_cap, workers=workers) for p in densities]
    pooled = MixtureModel(fam, np.concatenate([wi * p.weights for wi, p in zip(w, densities)]),
                          tuple(t for p in densities for t in p.params)).canonical()
    npool = lp_norm_details(pooled, int(alpha), term_cap=term_cap, workers=workers)
    total = math.fsum(wi * n.value for wi, n in zip(w, norms))
    raw = total - npool.value
    return Evaluation(_clamp(raw, total, "diversity index"), raw,
                      sum(n.term_count for n in norms) + npool.term_count)


def minkowski_diversity(densities: Sequence[MixtureModel], weights: Sequence[float], alpha: int,
                        **kwargs) -> float:
    return evaluate_diversity(densities, weights, alpha, **kwargs).value
