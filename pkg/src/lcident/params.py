"""Parameter spaces for the plug-in mortality models.

Four families are supported, each one a log-rate factor model
``log(m[x, t]) = alpha[x] + loadings * latent(t) + noise`` with the latent
period (and, for the cohort family, cohort) factor driven by an integrated
time-series process:

========================  ==============================================
``ApRwParams``            age-period, random walk with drift
``ApArima110Params``      age-period, integrated AR(1) with drift
``ApArima011Params``      age-period, integrated MA(1) with drift
``ApcRwParams``           age-period-cohort, two independent random walks
========================  ==============================================

``FullyParametricApcParams`` holds the classical treatment where the period
and cohort paths are finite parameter vectors rather than processes.

Constructing a parameter value never raises: membership in the parameter
space is checked by :func:`validate` (verdict-returning) or enforced by
:func:`ensure_valid`.  Counterexample generators deliberately build values
just outside a space, so construction and validation are kept separate.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Union

import numpy as np

__all__ = [
    "PanelDims",
    "InitialConditions",
    "ApRwParams",
    "ApArima110Params",
    "ApArima011Params",
    "ApcRwParams",
    "FullyParametricApcParams",
    "ModelParams",
    "ValidationVerdict",
    "InvalidParamsError",
    "validate",
    "ensure_valid",
    "normalize_betas",
    "params_to_dict",
    "params_from_dict",
    "load_params_json",
    "save_params_json",
    "SUM_TOL",
    "STATIONARITY_GUARD",
]

# Sum-to-one tolerance applied at validation time.
SUM_TOL = 1e-12

# Validation admits any |rho|, |phi| < 1; simulation and recovery apply this
# guard band to avoid conditioning blow-ups near the boundary.
STATIONARITY_GUARD = 0.999


class InvalidParamsError(ValueError):
    """Raised by :func:`ensure_valid` when a parameter value violates its space."""


def _as_vector(v) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-d real vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class PanelDims:
    """Panel extent: ages 0..X (X+1 of them) and periods 1..T."""

    X: int
    T: int

    def __post_init__(self):
        if self.X < 0:
            raise ValueError(f"X must be >= 0, got {self.X}")
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")

    @property
    def n_ages(self) -> int:
        return self.X + 1

    @property
    def n_cells(self) -> int:
        return (self.X + 1) * self.T


@dataclass(frozen=True)
class InitialConditions:
    """Fixed, known starting values of the latent paths (not part of theta).

    ``c`` starts the period factor in the age-period families, ``c0`` the
    cohort factor and ``c1`` the period factor in the cohort family.
    """

    c: float = 0.0
    c0: float = 0.0
    c1: float = 0.0

    def __post_init__(self):
        for name in ("c", "c0", "c1"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValueError(f"initial condition {name} must be finite, got {v}")


@dataclass(frozen=True)
class ApRwParams:
    """Age-period family, random-walk-with-drift period factor."""

    alpha: np.ndarray
    beta: np.ndarray
    mu: float
    sigma2_e: float
    sigma2_eps: float

    model = "ap_rw"

    def __post_init__(self):
        object.__setattr__(self, "alpha", _as_vector(self.alpha))
        object.__setattr__(self, "beta", _as_vector(self.beta))

    @property
    def n_ages(self) -> int:
        return len(self.alpha)


@dataclass(frozen=True)
class ApArima110Params(ApRwParams):
    """Age-period family, integrated AR(1) period factor (coefficient rho)."""

    rho: float = 0.0

    model = "ap_arima110"


@dataclass(frozen=True)
class ApArima011Params(ApRwParams):
    """Age-period family, integrated MA(1) period factor (coefficient phi)."""

    phi: float = 0.0

    model = "ap_arima011"


@dataclass(frozen=True)
class ApcRwParams:
    """Age-period-cohort family, two independent random walks with drift.

    ``beta0`` loads the cohort factor, ``beta1`` the period factor;
    ``sigma2_e0`` / ``sigma2_e1`` are the matching innovation variances.
    """

    alpha: np.ndarray
    beta0: np.ndarray
    beta1: np.ndarray
    mu0: float
    mu1: float
    sigma2_e0: float
    sigma2_e1: float
    sigma2_eps: float

    model = "apc_rw"

    def __post_init__(self):
        object.__setattr__(self, "alpha", _as_vector(self.alpha))
        object.__setattr__(self, "beta0", _as_vector(self.beta0))
        object.__setattr__(self, "beta1", _as_vector(self.beta1))

    @property
    def n_ages(self) -> int:
        return len(self.alpha)


@dataclass(frozen=True)
class FullyParametricApcParams:
    """Classical age-period-cohort parameterisation with factor-score vectors.

    ``kappa`` covers periods 1..T; ``iota`` covers cohorts 1-X..T (length
    T+X, oldest cohort first).  ``constraint_set`` records which published
    identification scheme the value is meant to satisfy:

    * ``"A"`` : sum(beta0) = sum(beta1) = 1, kappa[0] = 0, beta1 > 0;
    * ``"B"`` : sum(beta0) = sum(beta1) = 1, sum(kappa) = 0, sum(iota) = 0.
    """

    alpha: np.ndarray
    beta0: np.ndarray
    beta1: np.ndarray
    kappa: np.ndarray
    iota: np.ndarray
    constraint_set: str = "B"

    model = "apc_fully_parametric"

    def __post_init__(self):
        for name in ("alpha", "beta0", "beta1", "kappa", "iota"):
            object.__setattr__(self, name, _as_vector(getattr(self, name)))
        if self.constraint_set not in ("A", "B"):
            raise ValueError(f"constraint_set must be 'A' or 'B', got {self.constraint_set!r}")

    @property
    def n_ages(self) -> int:
        return len(self.alpha)

    @property
    def n_periods(self) -> int:
        return len(self.kappa)


ModelParams = Union[
    ApRwParams,
    ApArima110Params,
    ApArima011Params,
    ApcRwParams,
    FullyParametricApcParams,
]


@dataclass(frozen=True)
class ValidationVerdict:
    ok: bool
    violations: tuple = ()

    def __bool__(self) -> bool:
        return self.ok


def _check_lengths(violations, params, names, n):
    for name in names:
        v = getattr(params, name)
        if len(v) != n:
            violations.append(f"len({name})={len(v)} != {n}")
        if not np.all(np.isfinite(v)):
            violations.append(f"{name} contains non-finite entries")


def _check_sum_one(violations, name, vec):
    s = float(np.sum(vec))
    if abs(s - 1.0) > SUM_TOL:
        violations.append(f"sum({name})={s!r} != 1")


def _check_positive(violations, params, names):
    for name in names:
        v = getattr(params, name)
        if not (np.isfinite(v) and v > 0):
            violations.append(f"{name}={v!r} must be > 0")


def _check_open_unit(violations, name, v):
    if not (np.isfinite(v) and -1.0 < v < 1.0):
        violations.append(f"{name}={v!r} must lie strictly in (-1, 1)")


def validate(params: ModelParams, dims: PanelDims | None = None) -> ValidationVerdict:
    """Check membership of ``params`` in its parameter space.

    Returns a verdict rather than raising; each violation names the
    constraint and the offending value.  When ``dims`` is given the vector
    lengths are checked against it as well.
    """
    violations: list = []
    n = params.n_ages
    if dims is not None and n != dims.n_ages:
        violations.append(f"n_ages={n} != X+1={dims.n_ages}")

    if isinstance(params, ApRwParams):
        _check_lengths(violations, params, ("alpha", "beta"), n)
        _check_sum_one(violations, "beta", params.beta)
        _check_positive(violations, params, ("sigma2_e", "sigma2_eps"))
        if not np.isfinite(params.mu):
            violations.append(f"mu={params.mu!r} must be finite")
        if isinstance(params, ApArima110Params):
            _check_open_unit(violations, "rho", params.rho)
        if isinstance(params, ApArima011Params):
            _check_open_unit(violations, "phi", params.phi)

    elif isinstance(params, ApcRwParams):
        _check_lengths(violations, params, ("alpha", "beta0", "beta1"), n)
        _check_sum_one(violations, "beta0", params.beta0)
        _check_sum_one(violations, "beta1", params.beta1)
        if len(params.beta0) == len(params.beta1):
            gap = float(np.max(np.abs(params.beta0 - params.beta1)))
            if gap <= SUM_TOL:
                violations.append("beta0 = beta1 excluded (max|beta0-beta1| <= 1e-12)")
        _check_positive(violations, params, ("sigma2_e0", "sigma2_e1", "sigma2_eps"))
        for name in ("mu0", "mu1"):
            if not np.isfinite(getattr(params, name)):
                violations.append(f"{name} must be finite")

    elif isinstance(params, FullyParametricApcParams):
        _check_lengths(violations, params, ("alpha", "beta0", "beta1"), n)
        _check_sum_one(violations, "beta0", params.beta0)
        _check_sum_one(violations, "beta1", params.beta1)
        T = params.n_periods
        if len(params.iota) != T + n - 1:
            violations.append(f"len(iota)={len(params.iota)} != T+X={T + n - 1}")
        if dims is not None and T != dims.T:
            violations.append(f"len(kappa)={T} != T={dims.T}")
        if params.constraint_set == "A":
            if abs(params.kappa[0]) > SUM_TOL:
                violations.append(f"kappa[0]={params.kappa[0]!r} != 0 (set A)")
            if not np.all(params.beta1 > 0):
                violations.append("beta1 must be componentwise > 0 (set A)")
        else:
            if abs(float(np.sum(params.kappa))) > SUM_TOL:
                violations.append(f"sum(kappa)={float(np.sum(params.kappa))!r} != 0 (set B)")
            if abs(float(np.sum(params.iota))) > SUM_TOL:
                violations.append(f"sum(iota)={float(np.sum(params.iota))!r} != 0 (set B)")

    else:
        violations.append(f"unknown parameter type {type(params).__name__}")

    return ValidationVerdict(ok=not violations, violations=tuple(violations))


def ensure_valid(params: ModelParams, dims: PanelDims | None = None) -> ModelParams:
    """Raise :class:`InvalidParamsError` listing all violations, or return ``params``."""
    verdict = validate(params, dims)
    if not verdict.ok:
        raise InvalidParamsError("; ".join(verdict.violations))
    return params


def normalize_betas(beta_raw) -> np.ndarray:
    """Rescale a loading vector to sum to one.

    Rejects (near-)zero-sum input, for which no rescaling exists.
    """
    beta_raw = _as_vector(beta_raw)
    s = float(np.sum(beta_raw))
    if abs(s) < 1e-12:
        raise ValueError(f"cannot normalize loadings with sum {s!r} (zero within 1e-12)")
    return beta_raw / s


# ---------------------------------------------------------------------------
# JSON parameter files
# ---------------------------------------------------------------------------

_MODEL_TAGS = {
    "ap_rw": ApRwParams,
    "ap_arima110": ApArima110Params,
    "ap_arima011": ApArima011Params,
    "apc_rw": ApcRwParams,
}

_SCALAR_FIELDS = {
    "ap_rw": ("mu", "sigma2_e", "sigma2_eps"),
    "ap_arima110": ("mu", "sigma2_e", "sigma2_eps", "rho"),
    "ap_arima011": ("mu", "sigma2_e", "sigma2_eps", "phi"),
    "apc_rw": ("mu0", "mu1", "sigma2_e0", "sigma2_e1", "sigma2_eps"),
}

_VECTOR_FIELDS = {
    "ap_rw": ("alpha", "beta"),
    "ap_arima110": ("alpha", "beta"),
    "ap_arima011": ("alpha", "beta"),
    "apc_rw": ("alpha", "beta0", "beta1"),
}


def params_to_dict(
    params: ModelParams,
    dims: PanelDims | None = None,
    init: InitialConditions | None = None,
) -> dict:
    """Serialize a parameter value (plus optional dims/init) to a plain dict."""
    tag = params.model
    if tag not in _MODEL_TAGS:
        raise ValueError(f"no JSON schema for parameter type {type(params).__name__}")
    out: dict = {"model": tag}
    for name in _VECTOR_FIELDS[tag]:
        out[name] = [float(v) for v in getattr(params, name)]
    for name in _SCALAR_FIELDS[tag]:
        out[name] = float(getattr(params, name))
    if dims is not None:
        out["dims"] = {"X": dims.X, "T": dims.T}
    if init is not None:
        out["init"] = {"c": init.c, "c0": init.c0, "c1": init.c1}
    return out


def params_from_dict(obj: dict):
    """Inverse of :func:`params_to_dict`.

    Returns ``(params, dims, init)``; dims/init are None when absent.
    """
    try:
        tag = obj["model"]
    except KeyError:
        raise ValueError("parameter object lacks a 'model' tag") from None
    if tag not in _MODEL_TAGS:
        raise ValueError(f"unknown model tag {tag!r}; expected one of {sorted(_MODEL_TAGS)}")
    cls = _MODEL_TAGS[tag]
    fields = {}
    for name in _VECTOR_FIELDS[tag] + _SCALAR_FIELDS[tag]:
        if name not in obj:
            raise ValueError(f"model {tag!r} requires field {name!r}")
        fields[name] = obj[name]
    params = cls(**fields)
    dims = None
    if "dims" in obj:
        dims = PanelDims(X=int(obj["dims"]["X"]), T=int(obj["dims"]["T"]))
    init = None
    if "init" in obj:
        d = obj["init"]
        init = InitialConditions(
            c=float(d.get("c", 0.0)), c0=float(d.get("c0", 0.0)), c1=float(d.get("c1", 0.0))
        )
    return params, dims, init


def load_params_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return params_from_dict(json.load(fh))


def save_params_json(path, params, dims=None, init=None):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(params_to_dict(params, dims, init), fh, indent=2)
        fh.write("\n")


def replace(params: ModelParams, **changes) -> ModelParams:
    """Dataclass ``replace`` re-exported for convenience."""
    return dataclasses.replace(params, **changes)
