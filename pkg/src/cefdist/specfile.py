"""
Mixture specification files.

One mixture per JSON document::

    {
      "family": {"kind": "gaussian", "dim": 2},
      "parameterization": "source",
      "components": [
        {"weight": 0.5, "params": {"mu": [0, 0], "sigma": [1, 0, 0, 1]}},
        {"weight": 0.5, "params": {"mu": [1, 1], "sigma": [[2, 0.5], [0.5, 1]]}}
      ]
    }

Source parameters per family: ``lambda`` (Bernoulli scalar or Multinoulli
vector), ``sigma`` (Laplacian scale), ``mu`` + ``sigma`` (Gaussian mean and
covariance), ``n`` + ``S`` (Wishart).  Natural parameters use ``theta_s``,
``theta_v`` and ``theta_M``.  Matrices are nested lists or flat row-major
lists of length d*d.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

import numpy as np

from . import expfam
from .expfam import Family, Kind, NaturalParameter
from .minkdist import MixtureModel

SYMMETRY_RTOL = 1e-12

_SOURCE_KEYS = {
    Kind.BERNOULLI: {"lambda"},
    Kind.MULTINOULLI: {"lambda"},
    Kind.LAPLACIAN: {"sigma"},
    Kind.GAUSSIAN: {"mu", "sigma"},
    Kind.WISHART: {"n", "S"},
}
_MATRIX_KEYS = {"sigma", "S", "theta_M"}


class SpecError(ValueError):
    """A mixture specification that does not validate; names the offending field."""

    def __init__(self, where: str, message: str, source: str | None = None):
        self.where = where
        self.source = source
        prefix = f"{source}: " if source else ""
        super().__init__(f"{prefix}{where}: {message}")


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SpecError(where, f"expected a number, got {value!r}")
    x = float(value)
    if not math.isfinite(x):
        raise SpecError(where, "value must be finite")
    return x


def _vector(value, where: str, length: int) -> np.ndarray:
    if isinstance(value, (int, float)) and not isinstance(value, bool) and length == 1:
        value = [value]
    if not isinstance(value, list):
        raise SpecError(where, f"expected a list of {length} numbers")
    out = np.array([_number(v, f"{where}[{i}]") for i, v in enumerate(value)])
    if out.shape != (length,):
        raise SpecError(where, f"expected {length} values, got {out.size}")
    return out


def _matrix(value, where: str, d: int) -> np.ndarray:
    if isinstance(value, (int, float)) and not isinstance(value, bool) and d == 1:
        value = [value]
    if not isinstance(value, list):
        raise SpecError(where, f"expected a {d}x{d} matrix")
    if value and all(isinstance(r, list) for r in value):
        if len(value) != d or any(len(r) != d for r in value):
            raise SpecError(where, f"expected {d} rows of {d} values")
        flat = [x for r in value for x in r]
    else:
        flat = value
    m = _vector(flat, where, d * d).reshape(d, d)
    scale = max(float(np.max(np.abs(m))), np.finfo(float).tiny)
    if np.max(np.abs(m - m.T)) > SYMMETRY_RTOL * scale:
        raise SpecError(where, "matrix is not symmetric")
    return 0.5 * (m + m.T)


def _family(doc: dict) -> Family:
    raw = doc.get("family")
    if raw is None:
        raise SpecError("family", "missing")
    if isinstance(raw, str):
        raw = {"kind": raw}
    if not isinstance(raw, dict) or "kind" not in raw:
        raise SpecError("family", 'expected {"kind": ..., "dim": ...}')
    try:
        kind = expfam.Kind.parse(str(raw["kind"]))
    except ValueError as exc:
        raise SpecError("family.kind", str(exc)) from None
    dim = raw.get("dim", 1)
    if isinstance(dim, bool) or not isinstance(dim, int):
        raise SpecError("family.dim", f"expected an integer, got {dim!r}")
    try:
        return Family(kind, dim)
    except ValueError as exc:
        raise SpecError("family.dim", str(exc)) from None


def _source_params(fam: Family, raw: dict, where: str) -> dict[str, Any]:
    kind, d = fam.kind, fam.dim
    expected = _SOURCE_KEYS[kind]
    unknown = set(raw) - expected
    if unknown:
        raise SpecError(f"{where}.{sorted(unknown)[0]}", f"unknown parameter for {kind.value}")
    for key in sorted(expected - set(raw)):
        raise SpecError(f"{where}.{key}", "missing")
    if kind is Kind.BERNOULLI:
        return {"lambda": _number(raw["lambda"], f"{where}.lambda")}
    if kind is Kind.MULTINOULLI:
        return {"lambda": _vector(raw["lambda"], f"{where}.lambda", d)}
    if kind is Kind.LAPLACIAN:
        return {"sigma": _number(raw["sigma"], f"{where}.sigma")}
    if kind is Kind.GAUSSIAN:
        return {"mu": _vector(raw["mu"], f"{where}.mu", d),
                "sigma": _matrix(raw["sigma"], f"{where}.sigma", d)}
    return {"n": _number(raw["n"], f"{where}.n"), "S": _matrix(raw["S"], f"{where}.S", d)}


def _natural_params(fam: Family, raw: dict, where: str) -> NaturalParameter:
    expected = set()
    if fam.has_scalar:
        expected.add("theta_s")
    if fam.vector_len:
        expected.add("theta_v")
    if fam.has_matrix:
        expected.add("theta_M")
    unknown = set(raw) - expected
    if unknown:
        raise SpecError(f"{where}.{sorted(unknown)[0]}", f"unknown natural parameter for {fam.kind.value}")
    for key in sorted(expected - set(raw)):
        raise SpecError(f"{where}.{key}", "missing")
    theta = NaturalParameter(
        scalar=_number(raw["theta_s"], f"{where}.theta_s") if fam.has_scalar else None,
        vector=_vector(raw["theta_v"], f"{where}.theta_v", fam.vector_len) if fam.vector_len else None,
        matrix=_matrix(raw["theta_M"], f"{where}.theta_M", fam.dim) if fam.has_matrix else None,
    )
    if not expfam.in_cone(fam, theta):
        raise SpecError(where, f"natural parameter outside the {fam} cone")
    return theta


def mixture_from_dict(doc: Any, source: str | None = None) -> MixtureModel:
    """Validate a decoded specification document into a :class:`MixtureModel`."""
    try:
        if not isinstance(doc, dict):
            raise SpecError("<root>", "expected a JSON object")
        fam = _family(doc)
        param = doc.get("parameterization", "source")
        if param not in ("source", "natural"):
            raise SpecError("parameterization", f"expected 'source' or 'natural', got {param!r}")
        comps = doc.get("components")
        if not isinstance(comps, list) or not comps:
            raise SpecError("components", "expected a non-empty list")
        weights, thetas = [], []
        for i, comp in enumerate(comps):
            where = f"components[{i}]"
            if not isinstance(comp, dict):
                raise SpecError(where, "expected an object with 'weight' and 'params'")
            if "weight" not in comp:
                raise SpecError(f"{where}.weight", "missing")
            w = _number(comp["weight"], f"{where}.weight")
            if w <= 0:
                raise SpecError(f"{where}.weight", f"weights must be positive, got {w!r}")
            raw = comp.get("params")
            if not isinstance(raw, dict):
                raise SpecError(f"{where}.params", "expected an object")
            if param == "source":
                src = _source_params(fam, raw, f"{where}.params")
                try:
                    theta = expfam.to_natural(fam, src)
                except expfam.ParameterDomainError as exc:
                    raise SpecError(f"{where}.params.{exc.field}", str(exc).split(": ", 1)[-1]) from None
            else:
                theta = _natural_params(fam, raw, f"{where}.params")
            weights.append(w)
            thetas.append(theta)
        return MixtureModel(fam, weights, tuple(thetas))
    except SpecError as exc:
        if source and exc.source is None:
            raise SpecError(exc.where, str(exc).split(": ", 1)[-1], source) from None
        raise


def load_mixture(path: str | Path) -> MixtureModel:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SpecError("<file>", f"cannot read: {exc.strerror}", str(path)) from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"line {exc.lineno}, column {exc.colno}", exc.msg, str(path)) from None
    return mixture_from_dict(doc, str(path))


def _matrix_out(m: np.ndarray) -> list[list[float]]:
    return [[float(v) for v in row] for row in np.asarray(m)]


def mixture_to_dict(m: MixtureModel, parameterization: str = "natural") -> dict:
    """Inverse of :func:`mixture_from_dict`."""
    fam = m.family
    comps = []
    for w, theta in zip(m.weights, m.params):
        if parameterization == "natural":
            params: dict[str, Any] = {}
            if fam.has_scalar:
                params["theta_s"] = theta.scalar
            if fam.vector_len:
                params["theta_v"] = [float(v) for v in theta.vector]
            if fam.has_matrix:
                params["theta_M"] = _matrix_out(theta.matrix)
        elif parameterization == "source":
            src = expfam.from_natural(fam, theta)
            params = {}
            for key, value in src.items():
                if key in _MATRIX_KEYS and fam.has_matrix:
                    params[key] = _matrix_out(value)
                elif np.ndim(value):
                    params[key] = [float(v) for v in value]
                else:
                    params[key] = float(value)
        else:
            raise ValueError(f"unknown parameterization {parameterization!r}")
        comps.append({"weight": float(w), "params": params})
    return {"family": {"kind": fam.kind.value, "dim": fam.dim},
            "parameterization": parameterization, "components": comps}
