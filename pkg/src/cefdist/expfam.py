"""
Conic exponential families.

Every density is written canonically as ``p(x) = exp(<t(x), theta> - F(theta))``
with a zero carrier term, so that products of powers of same-family densities
integrate in closed form.  The matrix parts of the Gaussian and Wishart natural
parameters pair with their sufficient statistic through ``-1/2 tr(theta_M X)``.

Families and natural coordinates
--------------------------------
* Bernoulli: ``theta = log(lambda / (1 - lambda))``, t(x) = x on {0, 1}.
* Multinoulli: ``theta_i = log(lambda_i / lambda_d)``, t(x) = (x_1..x_{d-1})
  on one-hot vectors of length d.
* Zero-centered Laplacian: ``theta = -1/sigma``, t(x) = |x|.
* Multivariate Gaussian: ``(Sigma^{-1} mu, Sigma^{-1})``, t(x) = (x, x x^T).
* Wishart: ``((n - d - 1)/2, S^{-1})``, t(X) = (log|X|, X).

Internally a natural parameter is also handled as a flat "packed" vector
(scalar part, vector part, then the row-major matrix part).  Packing is linear,
so non-negative combinations of parameters are plain matrix products of the
packed rows, which is what the mixture engine relies on.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

LOG_2PI = math.log(2.0 * math.pi)
LOG_2 = math.log(2.0)
LOG_PI = math.log(math.pi)


class ParameterDomainError(ValueError):
    """A source or natural parameter lies outside its domain."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class ConeViolationError(ParameterDomainError):
    """A natural parameter is not in the family's natural parameter cone."""


class SupportError(ValueError):
    """An observation lies outside the support of the family."""


class InternalInvariantError(RuntimeError):
    """A guaranteed invariant failed; points at a family misconfiguration."""


class Kind(str, enum.Enum):
    BERNOULLI = "bernoulli"
    MULTINOULLI = "multinoulli"
    LAPLACIAN = "laplacian"
    GAUSSIAN = "gaussian"
    WISHART = "wishart"

    @classmethod
    def parse(cls, name: str) -> "Kind":
        key = name.strip().lower().replace("-", "_")
        aliases = {
            "zero_centered_laplacian": "laplacian",
            "zerocenteredlaplacian": "laplacian",
            "multivariate_gaussian": "gaussian",
            "multivariategaussian": "gaussian",
            "normal": "gaussian",
            "categorical": "multinoulli",
        }
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown family kind {name!r} (expected one of {valid})") from None


@dataclass(frozen=True)
class Family:
    """Which conic exponential family, and its dimension.

    ``dim`` is forced to 1 for Bernoulli and Laplacian, is the number of
    categories (>= 2) for Multinoulli and the matrix side for Wishart.
    """

    kind: Kind
    dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if isinstance(self.dim, bool) or int(self.dim) != self.dim:
            raise ValueError(f"dim must be an integer, got {self.dim!r}")
        object.__setattr__(self, "dim", int(self.dim))
        if self.kind in (Kind.BERNOULLI, Kind.LAPLACIAN) and self.dim != 1:
            raise ValueError(f"{self.kind.value} family has dim 1, got {self.dim}")
        if self.kind is Kind.MULTINOULLI and self.dim < 2:
            raise ValueError(f"multinoulli needs at least 2 categories, got {self.dim}")
        if self.dim < 1:
            raise ValueError(f"dim must be positive, got {self.dim}")

    @classmethod
    def bernoulli(cls) -> "Family":
        return cls(Kind.BERNOULLI, 1)

    @classmethod
    def multinoulli(cls, categories: int) -> "Family":
        return cls(Kind.MULTINOULLI, categories)

    @classmethod
    def laplacian(cls) -> "Family":
        return cls(Kind.LAPLACIAN, 1)

    @classmethod
    def gaussian(cls, dim: int = 1) -> "Family":
        return cls(Kind.GAUSSIAN, dim)

    @classmethod
    def wishart(cls, dim: int) -> "Family":
        return cls(Kind.WISHART, dim)

    @property
    def discrete(self) -> bool:
        return self.kind in (Kind.BERNOULLI, Kind.MULTINOULLI)

    @property
    def has_scalar(self) -> bool:
        return self.kind is Kind.WISHART

    @property
    def vector_len(self) -> int:
        if self.kind is Kind.MULTINOULLI:
            return self.dim - 1
        if self.kind is Kind.WISHART:
            return 0
        return self.dim

    @property
    def has_matrix(self) -> bool:
        return self.kind in (Kind.GAUSSIAN, Kind.WISHART)

    @property
    def packed_size(self) -> int:
        d = self.dim
        return int(self.has_scalar) + self.vector_len + (d * d if self.has_matrix else 0)

    def __str__(self) -> str:
        return f"{self.kind.value}(d={self.dim})"


def _frozen_array(x, ndim: int) -> np.ndarray:
    arr = np.array(x, dtype=float, ndmin=ndim)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class NaturalParameter:
    """Natural parameter split into its scalar, vector and matrix parts.

    Unused parts are ``None``.  Arrays are stored read-only.
    """

    scalar: float | None = None
    vector: np.ndarray | None = None
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.scalar is not None:
            object.__setattr__(self, "scalar", float(self.scalar))
        if self.vector is not None:
            object.__setattr__(self, "vector", _frozen_array(self.vector, 1))
        if self.matrix is not None:
            object.__setattr__(self, "matrix", _frozen_array(self.matrix, 2))

    def identical(self, other: "NaturalParameter") -> bool:
        """Exact (bitwise value) equality of every part."""
        if (self.scalar is None) != (other.scalar is None) or self.scalar != other.scalar:
            return False
        for a, b in ((self.vector, other.vector), (self.matrix, other.matrix)):
            if (a is None) != (b is None):
                return False
            if a is not None and (a.shape != b.shape or not np.array_equal(a, b)):
                return False
        return True

    def __repr__(self) -> str:
        parts = []
        if self.scalar is not None:
            parts.append(f"scalar={self.scalar!r}")
        if self.vector is not None:
            parts.append(f"vector={self.vector.tolist()!r}")
        if self.matrix is not None:
            parts.append(f"matrix={self.matrix.tolist()!r}")
        return f"NaturalParameter({', '.join(parts)})"


# ----------------------------------------------------------------------------
# packing


def _check_shape(fam: Family, theta: NaturalParameter) -> None:
    d = fam.dim
    if fam.has_scalar != (theta.scalar is not None):
        raise ValueError(f"{fam}: scalar part {'required' if fam.has_scalar else 'not used'}")
    nv = fam.vector_len
    if nv:
        if theta.vector is None or theta.vector.shape != (nv,):
            got = None if theta.vector is None else theta.vector.shape
            raise ValueError(f"{fam}: vector part must have shape ({nv},), got {got}")
    elif theta.vector is not None:
        raise ValueError(f"{fam}: vector part not used")
    if fam.has_matrix:
        if theta.matrix is None or theta.matrix.shape != (d, d):
            got = None if theta.matrix is None else theta.matrix.shape
            raise ValueError(f"{fam}: matrix part must have shape ({d}, {d}), got {got}")
    elif theta.matrix is not None:
        raise ValueError(f"{fam}: matrix part not used")


def pack(fam: Family, theta: NaturalParameter) -> np.ndarray:
    """Flatten ``theta`` into a vector of length ``fam.packed_size``."""
    _check_shape(fam, theta)
    chunks = []
    if fam.has_scalar:
        chunks.append([theta.scalar])
    if fam.vector_len:
        chunks.append(theta.vector)
    if fam.has_matrix:
        chunks.append(theta.matrix.ravel())
    return np.concatenate([np.asarray(c, dtype=float) for c in chunks])


def unpack(fam: Family, row: np.ndarray) -> NaturalParameter:
    row = np.asarray(row, dtype=float)
    if row.shape != (fam.packed_size,):
        raise ValueError(f"{fam}: packed parameter must have length {fam.packed_size}")
    i = 0
    scalar = vector = matrix = None
    if fam.has_scalar:
        scalar = float(row[0])
        i = 1
    if fam.vector_len:
        vector = row[i:i + fam.vector_len]
        i += fam.vector_len
    if fam.has_matrix:
        matrix = row[i:].reshape(fam.dim, fam.dim)
    return NaturalParameter(scalar, vector, matrix)


def _split_packed(fam: Family, rows: np.ndarray):
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    n = rows.shape[0]
    i = 0
    scalar = vector = matrix = None
    if fam.has_scalar:
        scalar = rows[:, 0]
        i = 1
    if fam.vector_len:
        vector = rows[:, i:i + fam.vector_len]
        i += fam.vector_len
    if fam.has_matrix:
        matrix = rows[:, i:].reshape(n, fam.dim, fam.dim)
    return scalar, vector, matrix


def symmetrize_packed(fam: Family, rows: np.ndarray) -> np.ndarray:
    """Average the matrix part with its transpose (rows modified in place)."""
    if fam.has_matrix:
        d = fam.dim
        m = rows[:, -d * d:].reshape(-1, d, d)
        rows[:, -d * d:] = (0.5 * (m + np.swapaxes(m, 1, 2))).reshape(-1, d * d)
    return rows


def _cholesky(mats: np.ndarray) -> np.ndarray | None:
    """Batched lower Cholesky factor, or None if any matrix is not PD."""
    try:
        L = np.linalg.cholesky(mats)
    except np.linalg.LinAlgError:
        return None
    # LAPACK reports zero pivots; a NaN slipping through is also a failure
    if not np.all(np.isfinite(L)):
        return None
    return L


def _logdet_from_chol(L: np.ndarray) -> np.ndarray:
    return 2.0 * np.log(np.diagonal(L, axis1=-2, axis2=-1)).sum(axis=-1)


def _is_symmetric(m: np.ndarray) -> np.ndarray:
    return np.all(m == np.swapaxes(m, -1, -2), axis=(-2, -1))


def log_multigamma(a, d: int):
    """log Gamma_d(a) from the product of univariate Gamma functions."""
    a = np.asarray(a, dtype=float)
    j = np.arange(1, d + 1)
    out = 0.25 * d * (d - 1) * LOG_PI + gammaln(a[..., None] + (1.0 - j) / 2.0).sum(axis=-1)
    return out if out.ndim else float(out)


def in_cone_packed(fam: Family, rows: np.ndarray) -> np.ndarray:
    """Boolean mask of cone membership for each packed row."""
    scalar, vector, matrix = _split_packed(fam, rows)
    n = np.atleast_2d(rows).shape[0]
    ok = np.all(np.isfinite(np.atleast_2d(rows)), axis=1)
    if fam.kind is Kind.LAPLACIAN:
        ok &= vector[:, 0] < 0
    if fam.kind is Kind.WISHART:
        ok &= scalar > 0
    if fam.has_matrix:
        ok &= _is_symmetric(matrix)
        for i in range(n):
            if ok[i] and _cholesky(matrix[i]) is None:
                ok[i] = False
    return ok


def log_partition_packed(fam: Family, rows: np.ndarray) -> np.ndarray:
    """Vectorized log-partition over packed natural parameters (one per row).

    Raises ConeViolationError if any row is outside the cone.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    scalar, vector, matrix = _split_packed(fam, rows)
    kind = fam.kind
    if not np.all(np.isfinite(rows)):
        raise ConeViolationError("theta", "non-finite natural parameter")
    if kind is Kind.BERNOULLI:
        return np.logaddexp(0.0, vector[:, 0])
    if kind is Kind.MULTINOULLI:
        padded = np.concatenate([np.zeros((rows.shape[0], 1)), vector], axis=1)
        return logsumexp(padded, axis=1)
    if kind is Kind.LAPLACIAN:
        t = vector[:, 0]
        if np.any(t >= 0):
            raise ConeViolationError("theta_v", "laplacian natural parameter must be negative")
        return LOG_2 - np.log(-t)

    d = fam.dim
    if not np.all(_is_symmetric(matrix)):
        raise ConeViolationError("theta_M", "matrix part must be symmetric")
    L = _cholesky(matrix)
    if L is None:
        raise ConeViolationError("theta_M", "matrix part is not positive definite")
    logdet = _logdet_from_chol(L)
    if kind is Kind.GAUSSIAN:
        # ||L^{-1} theta_v||^2 = theta_v^T theta_M^{-1} theta_v
        y = np.linalg.solve(L, vector[..., None])[..., 0]
        quad = np.einsum("ni,ni->n", y, y)
        return 0.5 * quad - 0.5 * logdet + 0.5 * d * LOG_2PI
    if kind is Kind.WISHART:
        if np.any(scalar <= 0):
            raise ConeViolationError("theta_s", "wishart scalar part must be positive")
        a = scalar + 0.5 * (d + 1)
        return a * (d * LOG_2 - logdet) + log_multigamma(a, d)
    raise AssertionError(kind)


# ----------------------------------------------------------------------------
# public single-parameter API


def in_cone(fam: Family, theta: NaturalParameter) -> bool:
    return bool(in_cone_packed(fam, pack(fam, theta)[None, :])[0])


def log_partition(fam: Family, theta: NaturalParameter) -> float:
    return float(log_partition_packed(fam, pack(fam, theta)[None, :])[0])


def linear_combination(fam: Family, thetas: Sequence[NaturalParameter],
                       alphas: Sequence[float]) -> NaturalParameter:
    """Componentwise ``sum_i alphas[i] * thetas[i]`` for non-negative alphas."""
    if len(thetas) == 0 or len(thetas) != len(alphas):
        raise ValueError("thetas and alphas must be non-empty and of equal length")
    a = np.asarray(alphas, dtype=float)
    if np.any(a < 0) or not np.all(np.isfinite(a)) or not np.any(a > 0):
        raise ValueError("alphas must be finite, non-negative and not all zero")
    rows = np.stack([pack(fam, t) for t in thetas])
    if not np.all(in_cone_packed(fam, rows)):
        raise ConeViolationError("theta", "every combined parameter must lie in the cone")
    combo = symmetrize_packed(fam, (a @ rows)[None, :])[0]
    if not in_cone_packed(fam, combo[None, :])[0]:
        raise InternalInvariantError(f"{fam}: non-negative combination left the natural cone")
    return unpack(fam, combo)


# ----------------------------------------------------------------------------
# source <-> natural


def _pd_matrix(field: str, value, d: int) -> np.ndarray:
    m = np.array(value, dtype=float)
    if m.size == d * d and m.ndim <= 1:
        m = m.reshape(d, d)
    if m.shape != (d, d):
        raise ParameterDomainError(field, f"expected a {d}x{d} matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ParameterDomainError(field, "matrix entries must be finite")
    if not np.array_equal(m, m.T):
        raise ParameterDomainError(field, "matrix must be symmetric")
    if _cholesky(m) is None:
        raise ParameterDomainError(field, "matrix is not positive definite (Cholesky failed)")
    return m


def _spd_inverse(m: np.ndarray) -> np.ndarray:
    """Inverse of an SPD matrix through its Cholesky factor, symmetrized."""
    L = np.linalg.cholesky(m)
    Linv = np.linalg.solve(L, np.eye(m.shape[0]))
    inv = Linv.T @ Linv
    return 0.5 * (inv + inv.T)


def to_natural(fam: Family, src: Mapping[str, Any]) -> NaturalParameter:
    """Convert conventional (source) parameters to natural parameters.

    Source keys per family: ``lambda`` (Bernoulli scalar, Multinoulli vector),
    ``sigma`` (Laplacian scale), ``mu``/``sigma`` (Gaussian mean/covariance),
    ``n``/``S`` (Wishart degrees of freedom/scale matrix).
    """
    kind, d = fam.kind, fam.dim
    try:
        if kind is Kind.BERNOULLI:
            lam = float(src["lambda"])
            if not 0.0 < lam < 1.0:
                raise ParameterDomainError("lambda", f"must lie in (0, 1), got {lam!r}")
            return NaturalParameter(vector=[math.log(lam) - math.log1p(-lam)])
        if kind is Kind.MULTINOULLI:
            lam = np.array(src["lambda"], dtype=float).ravel()
            if lam.shape != (d,):
                raise ParameterDomainError("lambda", f"expected {d} probabilities, got {lam.size}")
            if not np.all(lam > 0) or not np.all(np.isfinite(lam)):
                raise ParameterDomainError("lambda", "probabilities must be positive")
            if abs(math.fsum(lam) - 1.0) > 1e-12:
                raise ParameterDomainError("lambda", f"probabilities must sum to 1, got {math.fsum(lam)!r}")
            return NaturalParameter(vector=np.log(lam[:-1]) - math.log(lam[-1]))
        if kind is Kind.LAPLACIAN:
            sigma = float(src["sigma"])
            if not (sigma > 0 and math.isfinite(sigma)):
                raise ParameterDomainError("sigma", f"must be positive, got {sigma!r}")
            return NaturalParameter(vector=[-1.0 / sigma])
        if kind is Kind.GAUSSIAN:
            mu = np.array(src["mu"], dtype=float).ravel()
            if mu.shape != (d,) or not np.all(np.isfinite(mu)):
                raise ParameterDomainError("mu", f"expected {d} finite values")
            prec = _spd_inverse(_pd_matrix("sigma", src["sigma"], d))
            return NaturalParameter(vector=prec @ mu, matrix=prec)
        if kind is Kind.WISHART:
            n = float(src["n"])
            if not n > d - 1:
                raise ParameterDomainError("n", f"degrees of freedom must exceed d-1={d - 1}, got {n!r}")
            if not n > d + 1:
                # (n-d-1)/2 must be positive to stay in the conic parameter space
                raise ParameterDomainError("n", f"conic Wishart requires n > d+1={d + 1}, got {n!r}")
            S = _pd_matrix("S", src["S"], d)
            return NaturalParameter(scalar=0.5 * (n - d - 1), matrix=_spd_inverse(S))
    except KeyError as exc:
        raise ParameterDomainError(str(exc.args[0]), "missing source parameter") from None
    raise AssertionError(kind)


def from_natural(fam: Family, theta: NaturalParameter) -> dict[str, Any]:
    """Inverse of :func:`to_natural`."""
    if not in_cone(fam, theta):
        raise ConeViolationError("theta", f"parameter is outside the {fam} cone")
    kind, d = fam.kind, fam.dim
    if kind is Kind.BERNOULLI:
        t = theta.vector[0]
        # logistic, stable for either sign
        lam = 1.0 / (1.0 + math.exp(-t)) if t >= 0 else math.exp(t) / (1.0 + math.exp(t))
        return {"lambda": lam}
    if kind is Kind.MULTINOULLI:
        logits = np.concatenate([theta.vector, [0.0]])
        return {"lambda": np.exp(logits - logsumexp(logits))}
    if kind is Kind.LAPLACIAN:
        return {"sigma": -1.0 / theta.vector[0]}
    cov = _spd_inverse(np.asarray(theta.matrix))
    if kind is Kind.GAUSSIAN:
        mu = np.linalg.solve(theta.matrix, theta.vector)
        return {"mu": mu, "sigma": cov}
    if kind is Kind.WISHART:
        return {"n": 2.0 * theta.scalar + d + 1, "S": cov}
    raise AssertionError(kind)


# ----------------------------------------------------------------------------
# densities


def _support_points(fam: Family, x):
    """Validate ``x`` against the support and return (batch, is_single)."""
    kind, d = fam.kind, fam.dim
    x = np.asarray(x, dtype=float)
    if kind in (Kind.BERNOULLI, Kind.LAPLACIAN):
        single = x.ndim == 0
        xb = np.atleast_1d(x)
        if xb.ndim != 1:
            raise SupportError(f"{fam}: expected scalars, got shape {x.shape}")
        if kind is Kind.BERNOULLI and not np.all((xb == 0) | (xb == 1)):
            raise SupportError("bernoulli support is {0, 1}")
        if not np.all(np.isfinite(xb)):
            raise SupportError(f"{fam}: observations must be finite")
        return xb, single
    if kind in (Kind.MULTINOULLI, Kind.GAUSSIAN):
        single = x.ndim == 1
        xb = np.atleast_2d(x)
        if xb.ndim != 2 or xb.shape[1] != d:
            raise SupportError(f"{fam}: expected vectors of length {d}, got shape {x.shape}")
        if kind is Kind.MULTINOULLI:
            binary = np.all((xb == 0) | (xb == 1), axis=1)
            if not np.all(binary & (xb.sum(axis=1) == 1)):
                raise SupportError("multinoulli support is the set of one-hot vectors")
        elif not np.all(np.isfinite(xb)):
            raise SupportError(f"{fam}: observations must be finite")
        return xb, single
    single = x.ndim == 2
    xb = x[None] if single else x
    if xb.ndim != 3 or xb.shape[1:] != (d, d):
        raise SupportError(f"{fam}: expected {d}x{d} matrices, got shape {x.shape}")
    return xb, single


def sufficient_statistics(fam: Family, x) -> tuple[np.ndarray, bool]:
    """Sufficient statistics of a point or batch, laid out like packed parameters.

    Matrix statistics carry the ``-1/2`` factor, so ``T @ pack(theta) - F(theta)``
    is the log-density.  Returns ``(T, single)`` with ``T`` of shape ``(n, P)``.
    """
    xb, single = _support_points(fam, x)
    kind = fam.kind
    if kind is Kind.BERNOULLI:
        T = xb[:, None]
    elif kind is Kind.MULTINOULLI:
        T = xb[:, :-1]
    elif kind is Kind.LAPLACIAN:
        T = np.abs(xb)[:, None]
    elif kind is Kind.GAUSSIAN:
        outer = np.einsum("ni,nj->nij", xb, xb).reshape(xb.shape[0], -1)
        T = np.concatenate([xb, -0.5 * outer], axis=1)
    else:
        if not np.all(_is_symmetric(xb)):
            raise SupportError("wishart support is symmetric positive definite matrices")
        L = _cholesky(xb)
        if L is None:
            raise SupportError("wishart support is symmetric positive definite matrices")
        T = np.concatenate([_logdet_from_chol(L)[:, None], -0.5 * xb.reshape(xb.shape[0], -1)], axis=1)
    return T, single


def log_density(fam: Family, theta: NaturalParameter, x):
    """``<t(x), theta> - F(theta)`` at one support point or a leading batch."""
    F = log_partition(fam, theta)
    T, single = sufficient_statistics(fam, x)
    out = T @ pack(fam, theta) - F
    return float(out[0]) if single else out
