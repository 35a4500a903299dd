"""
Numerical ground truth for the closed-form engine.

Three independent routes, each restricted to the families it handles:

* exact enumeration of the finite support (Bernoulli, Multinoulli);
* adaptive quadrature on the real line (univariate Gaussian, Laplacian), after
  the substitution ``x = c + s * atanh(u)`` that maps (-inf, inf) onto (-1, 1);
* importance-sampled Monte Carlo with the normalized mixture of all involved
  components as proposal (any family, required for multivariate ones).

Nothing here uses the log-partition identities of :mod:`cefdist.minkdist`;
densities are evaluated pointwise from their canonical form only.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from . import expfam
from .expfam import Family, Kind, NaturalParameter
from .minkdist import DistanceKind, Metric, MixtureModel


class OracleError(RuntimeError):
    pass


class IncompatibleMethodError(OracleError, ValueError):
    pass


class QuadratureError(OracleError):
    pass


class Method(str, enum.Enum):
    EXACT = "exact"
    QUAD = "quad"
    MC = "mc"

    @classmethod
    def parse(cls, name: str) -> "Method":
        key = name.strip().lower()
        key = {"exactenum": "exact", "quadrature": "quad", "montecarlo": "mc"}.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown oracle method {name!r}; expected exact, quad or mc") from None

    @classmethod
    def default_for(cls, family: Family) -> "Method":
        if family.discrete:
            return cls.EXACT
        if family.kind in (Kind.LAPLACIAN, Kind.GAUSSIAN) and family.dim == 1:
            return cls.QUAD
        return cls.MC


@dataclass(frozen=True)
class OracleConfig:
    method: Method
    samples: int = 10**6
    seed: int = 0
    rel_tol: float = 1e-10
    abs_tol: float = 1e-14
    max_subdivisions: int = 500
    chunk_size: int = 1 << 16
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1 or self.chunk_size < 1 or self.workers < 1:
            raise ValueError("max_subdivisions, chunk_size and workers must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.method is Method.MC and self.samples < 1000:
            raise ValueError(f"Monte Carlo needs at least 1000 samples, got {self.samples}")


@dataclass(frozen=True)
class OracleEstimate:
    value: float
    stderr: float
    samples_used: int
    method: Method

    def __post_init__(self):
        if self.stderr < 0 or math.isnan(self.stderr):
            raise ValueError("stderr must be non-negative")


# ----------------------------------------------------------------------------
# sampling


def sample(family: Family, theta: NaturalParameter, rng: np.random.Generator, size: int | None = None):
    """Draw from ``p_theta``; a single point when ``size`` is None."""
    if not expfam.in_cone(family, theta):
        raise expfam.ConeViolationError("theta", f"parameter is outside the {family} cone")
    n = 1 if size is None else int(size)
    kind, d = family.kind, family.dim
    if kind is Kind.BERNOULLI:
        lam = expfam.from_natural(family, theta)["lambda"]
        out = (rng.random(n) < lam).astype(float)
    elif kind is Kind.MULTINOULLI:
        cdf = np.cumsum(expfam.from_natural(family, theta)["lambda"])
        idx = np.minimum(np.searchsorted(cdf, rng.random(n), side="right"), d - 1)
        out = np.eye(d)[idx]
    elif kind is Kind.LAPLACIAN:
        sigma = -1.0 / theta.vector[0]
        out = np.where(rng.random(n) < 0.5, -1.0, 1.0) * rng.exponential(sigma, n)
    elif kind is Kind.GAUSSIAN:
        R = np.linalg.cholesky(theta.matrix)
        mu = solve_triangular(R.T, solve_triangular(R, theta.vector, lower=True), lower=False)
        z = rng.standard_normal((d, n))
        # cov(R^{-T} z) = (R R^T)^{-1}
        out = mu + solve_triangular(R.T, z, lower=False).T
    elif kind is Kind.WISHART:
        dof = 2.0 * theta.scalar + d + 1
        R = np.linalg.cholesky(theta.matrix)
        G = solve_triangular(R.T, np.eye(d), lower=False)  # G G^T = theta_M^{-1} = S
        # Bartlett: A lower triangular, A_ii^2 ~ chi2(dof - i), A_ij ~ N(0, 1) below the diagonal
        A = np.zeros((n, d, d))
        rows, cols = np.tril_indices(d, -1)
        A[:, rows, cols] = rng.standard_normal((n, rows.size))
        diag = np.arange(d)
        A[:, diag, diag] = np.sqrt(rng.chisquare(dof - diag, (n, d)))
        GA = G @ A
        out = GA @ np.swapaxes(GA, 1, 2)
        out = 0.5 * (out + np.swapaxes(out, 1, 2))
    else:
        raise AssertionError(kind)
    return out[0] if size is None else out


def sample_mixture(m: MixtureModel, rng: np.random.Generator, size: int):
    counts = rng.multinomial(size, m.weights / m.total_weight)
    parts = [sample(m.family, theta, rng, c) for theta, c in zip(m.params, counts) if c]
    return np.concatenate(parts)


def mixture_log_density(m: MixtureModel, x) -> np.ndarray:
    """log m(x) for a batch of support points (m need not be normalized)."""
    T, _ = expfam.sufficient_statistics(m.family, x)
    logs = T @ m.packed.T - m.log_partitions + np.log(m.weights)
    return logsumexp(logs, axis=1)


# ----------------------------------------------------------------------------
# integrands
#
# An integrand is a hashable spec evaluated on (log m(x), log m'(x)):
#   ("pow", "m" | "m2" | "sum", a)  ->  m^a, m'^a or (m + m')^a
#   ("abs", a)                       ->  |m - m'|^a
#   ("prod",)                        ->  m m'

Spec = tuple


def _log_abs_diff(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    hi = np.maximum(a, b)
    gap = -np.abs(a - b)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(np.isneginf(hi) | (gap == 0), -np.inf, hi + np.log(-np.expm1(gap)))


def _log_integrand(spec: Spec, lm: np.ndarray, lm2: np.ndarray) -> np.ndarray:
    op = spec[0]
    if op == "pow":
        base = {"m": lm, "m2": lm2}.get(spec[1])
        if base is None:
            base = np.logaddexp(lm, lm2)
        return spec[2] * base
    if op == "abs":
        return spec[1] * _log_abs_diff(lm, lm2)
    if op == "prod":
        return lm + lm2
    raise ValueError(f"unknown integrand {spec!r}")


# ----------------------------------------------------------------------------
# exact enumeration


def _support(family: Family) -> np.ndarray:
    if family.kind is Kind.BERNOULLI:
        return np.array([0.0, 1.0])
    if family.kind is Kind.MULTINOULLI:
        return np.eye(family.dim)
    raise IncompatibleMethodError(f"exact enumeration needs a finite support; {family} is continuous")


def _exact(specs: Sequence[Spec], m: MixtureModel, m2: MixtureModel) -> np.ndarray:
    x = _support(m.family)
    lm, lm2 = mixture_log_density(m, x), mixture_log_density(m2, x)
    return np.array([math.fsum(np.exp(_log_integrand(s, lm, lm2))) for s in specs])


# ----------------------------------------------------------------------------
# quadrature


def _scalar_log_density(m: MixtureModel) -> Callable[[float], float]:
    w = [math.log(v) for v in m.weights]
    F = [float(v) for v in m.log_partitions]
    if m.family.kind is Kind.LAPLACIAN:
        t = [float(p.vector[0]) for p in m.params]

        def logpdf(x):
            ax = abs(x)
            vals = [wi + ti * ax - fi for wi, ti, fi in zip(w, t, F)]
            top = max(vals)
            return top + math.log(math.fsum(math.exp(v - top) for v in vals))
    else:
        lin = [float(p.vector[0]) for p in m.params]
        quad = [float(p.matrix[0, 0]) for p in m.params]

        def logpdf(x):
            vals = [wi + a * x - 0.5 * b * x * x - fi for wi, a, b, fi in zip(w, lin, quad, F)]
            top = max(vals)
            return top + math.log(math.fsum(math.exp(v - top) for v in vals))
    return logpdf


def _locations(m: MixtureModel) -> tuple[list[float], list[float]]:
    """Component centers and scales of a univariate mixture."""
    if m.family.kind is Kind.LAPLACIAN:
        return [0.0] * m.k, [-1.0 / float(p.vector[0]) for p in m.params]
    centers = [float(p.vector[0] / p.matrix[0, 0]) for p in m.params]
    scales = [float(p.matrix[0, 0]) ** -0.5 for p in m.params]
    return centers, scales


def _quad(specs: Sequence[Spec], m: MixtureModel, m2: MixtureModel, cfg: OracleConfig) -> np.ndarray:
    fam = m.family
    if fam.dim != 1 or fam.kind not in (Kind.LAPLACIAN, Kind.GAUSSIAN):
        raise IncompatibleMethodError(f"quadrature handles univariate Gaussian/Laplacian, not {fam}")
    c1, s1 = _locations(m)
    c2, s2 = _locations(m2)
    centers, scales = c1 + c2, s1 + s2
    lo, hi = min(centers), max(centers)
    c = 0.5 * (lo + hi)
    # wide enough that the mapped integrand vanishes at u = +-1 for every exponent >= 1
    s = 4.0 * max(scales) + 0.5 * (hi - lo)
    anchors = {x + k * sc for x, sc in zip(centers, scales) for k in (-1, 0, 1)}
    points = sorted({math.tanh((x - c) / s) for x in anchors} - {-1.0, 1.0})
    lp, lp2 = _scalar_log_density(m), _scalar_log_density(m2)
    out = []
    for spec in specs:
        def g(u, spec=spec):
            x = c + s * math.atanh(u)
            val = float(_log_integrand(spec, np.array([lp(x)]), np.array([lp2(x)]))[0])
            if val == -math.inf:
                return 0.0
            return math.exp(val) * s / ((1.0 - u) * (1.0 + u))

        out.append(_run_quad(g, points, cfg))
    return np.array(out)


def _run_quad(g, points, cfg: OracleConfig) -> float:
    res = integrate.quad(g, -1.0, 1.0, points=points or None, epsabs=cfg.abs_tol,
                         epsrel=cfg.rel_tol, limit=cfg.max_subdivisions, full_output=1)
    value, err = res[0], res[1]
    if len(res) > 3:
        # QUADPACK flagged a problem; accept only if its own error bound meets the tolerance
        if not err <= max(cfg.abs_tol, cfg.rel_tol * abs(value)):
            msg = str(res[3]).strip().splitlines()[0]
            raise QuadratureError(f"quadrature did not converge within {cfg.max_subdivisions} "
                                  f"subdivisions: {msg} (error estimate {err:.3g})")
    return value


# ----------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class _Moments:
    """Pooled mean and centered cross-product sums (pairwise merge)."""

    n: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def of(cls, cols: Sequence[np.ndarray]) -> "_Moments":
        # column by column, so an estimate does not depend on which other
        # integrands share its samples
        n = cols[0].size
        mean = np.array([np.sum(c) / n for c in cols])
        centered = [c - mu for c, mu in zip(cols, mean)]
        k = len(cols)
        m2 = np.empty((k, k))
        for i in range(k):
            for j in range(i, k):
                m2[i, j] = m2[j, i] = float(np.dot(centered[i], centered[j]))
        return cls(n, mean, m2)

    def merge(self, other: "_Moments") -> "_Moments":
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.n / n)
        m2 = self.m2 + other.m2 + np.outer(delta, delta) * (self.n * other.n / n)
        return _Moments(n, mean, m2)

    def covariance_of_mean(self) -> np.ndarray:
        return self.m2 / (self.n - 1) / self.n


def _mc_chunk(specs, m, m2, seed_seq, size) -> _Moments:
    rng = np.random.Generator(np.random.Philox(seed_seq))
    proposal = m + m2
    x = sample_mixture(proposal, rng, size)
    T, _ = expfam.sufficient_statistics(m.family, x)
    comp = T @ proposal.packed.T - proposal.log_partitions + np.log(proposal.weights)
    lm = logsumexp(comp[:, :m.k], axis=1)
    lm2 = logsumexp(comp[:, m.k:], axis=1)
    lq = logsumexp(comp, axis=1) - math.log(proposal.total_weight)
    return _Moments.of([np.exp(_log_integrand(s, lm, lm2) - lq) for s in specs])


def _monte_carlo(specs, m, m2, cfg: OracleConfig) -> tuple[np.ndarray, np.ndarray]:
    sizes = [cfg.chunk_size] * (cfg.samples // cfg.chunk_size)
    if cfg.samples % cfg.chunk_size:
        sizes.append(cfg.samples % cfg.chunk_size)
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(sizes))

    def run(i):
        return _mc_chunk(specs, m, m2, seeds[i], sizes[i])

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(i) for i in range(len(sizes))]
    # merge in chunk order: the estimate depends on the chunking, not on the workers
    acc = parts[0]
    for p in parts[1:]:
        acc = acc.merge(p)
    return acc.mean, acc.covariance_of_mean()


# ----------------------------------------------------------------------------
# assembling estimates


def _root(v: float, alpha: float) -> float:
    return max(v, 0.0) ** (1.0 / alpha)


def _recipe(kind: DistanceKind) -> tuple[list[Spec], Callable[[np.ndarray], float]]:
    """Integrands needed for ``kind`` and how to combine them."""
    a = float(kind.alpha)
    metric = kind.metric
    if metric is Metric.TV:
        return [("abs", 1.0)], lambda v: 0.5 * v[0]
    if metric is Metric.M:
        return [("abs", a)], lambda v: _root(v[0], a)
    if metric in (Metric.D, Metric.L):
        if not a > 1:
            raise ValueError(f"{metric.value} needs alpha > 1, got {a}")
        specs = [("pow", "m", a), ("pow", "m2", a), ("pow", "sum", a)]
        if metric is Metric.D:
            return specs, lambda v: _root(v[0], a) + _root(v[1], a) - _root(v[2], a)
        return specs, lambda v: math.log(_root(v[0], a) + _root(v[1], a)) - math.log(v[2]) / a
    if metric is Metric.CS:
        specs = [("prod",), ("pow", "m", 2.0), ("pow", "m2", 2.0)]
        return specs, lambda v: -math.log(v[0]) + 0.5 * math.log(v[1]) + 0.5 * math.log(v[2])
    raise AssertionError(metric)


def _gradient(combine, x: np.ndarray) -> np.ndarray:
    """Finite-difference gradient for first-order error propagation."""
    g = np.zeros_like(x)
    for i in range(x.size):
        h = 1e-6 * abs(x[i])
        if h == 0:
            continue
        up, down = x.copy(), x.copy()
        up[i] += h
        down[i] -= h
        g[i] = (combine(up) - combine(down)) / (2 * h)
    return g


def _evaluate(recipes, m: MixtureModel, m2: MixtureModel, cfg: OracleConfig) -> list[OracleEstimate]:
    if m.family != m2.family:
        raise ValueError(f"mixtures belong to different families: {m.family} vs {m2.family}")
    specs = list(dict.fromkeys(s for spec_list, _ in recipes for s in spec_list))
    where = {s: i for i, s in enumerate(specs)}
    if cfg.method is Method.MC:
        mean, cov = _monte_carlo(specs, m, m2, cfg)
    elif cfg.method is Method.EXACT:
        mean, cov = _exact(specs, m, m2), None
    else:
        mean, cov = _quad(specs, m, m2, cfg), None
    out = []
    for spec_list, combine in recipes:
        idx = [where[s] for s in spec_list]
        v = mean[idx]
        value = float(combine(v))
        stderr = 0.0
        if cov is not None:
            g = _gradient(combine, v)
            stderr = math.sqrt(max(float(g @ cov[np.ix_(idx, idx)] @ g), 0.0))
        out.append(OracleEstimate(value, stderr, cfg.samples if cov is not None else 0, cfg.method))
    return out


def integrate_abs_power(m: MixtureModel, m2: MixtureModel, alpha: float, cfg: OracleConfig) -> OracleEstimate:
    """Estimate of ``integral |m - m'|^alpha dmu`` for real ``alpha >= 1``."""
    if not alpha >= 1:
        raise ValueError(f"alpha must be >= 1, got {alpha!r}")
    return _evaluate([([("abs", float(alpha))], lambda v: v[0])], m, m2, cfg)[0]


def integrate_power(m: MixtureModel, alpha: float, cfg: OracleConfig) -> OracleEstimate:
    """Estimate of ``integral m^alpha dmu`` for real ``alpha >= 1``.

    The Monte Carlo proposal is m itself (normalized).
    """
    if not alpha >= 1:
        raise ValueError(f"alpha must be >= 1, got {alpha!r}")
    return _evaluate([([("pow", "m", float(alpha))], lambda v: v[0])], m, m, cfg)[0]


def oracle_norm(m: MixtureModel, alpha: float, cfg: OracleConfig) -> OracleEstimate:
    """``||m||_alpha`` with first-order error propagation."""
    a = float(alpha)
    return _evaluate([([("pow", "m", a)], lambda v: _root(v[0], a))], m, m, cfg)[0]


def inner_product(m: MixtureModel, m2: MixtureModel, cfg: OracleConfig) -> OracleEstimate:
    """Estimate of ``integral m m' dmu``."""
    return _evaluate([([("prod",)], lambda v: v[0])], m, m2, cfg)[0]


def oracle_distance(kind: DistanceKind, m: MixtureModel, m2: MixtureModel, cfg: OracleConfig) -> OracleEstimate:
    """Assemble M/D/L/CS/TV from numerically integrated pieces."""
    return _evaluate([_recipe(kind)], m, m2, cfg)[0]


def oracle_distances(kinds: Sequence[DistanceKind], m: MixtureModel, m2: MixtureModel,
                     cfg: OracleConfig, norm_alphas: Sequence[float] = ()) -> tuple[list[OracleEstimate], list[OracleEstimate]]:
    """Several distances (and norms of m) from one shared set of integrals.

    With Monte Carlo every estimate comes from the same samples, so each
    reported standard error includes the correlation between its pieces.
    """
    recipes = [_recipe(k) for k in kinds]
    recipes += [([("pow", "m", float(a))], lambda v, a=float(a): _root(v[0], a)) for a in norm_alphas]
    est = _evaluate(recipes, m, m2, cfg)
    return est[:len(kinds)], est[len(kinds):]
