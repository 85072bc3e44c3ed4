"""Exact first and second moments of the plug-in mortality models.

For every family the model determines closed forms for

* the mean surface  ``E log(m[x, t])``  and
* the covariance kernel  ``Cov(log m[x, s], log m[y, t])``

as functions of theta alone.  This module provides scalar kernels, a dense
:class:`MomentGrid` container over the whole panel, and independent
double-sum oracles that recompute the latent covariances directly from
innovation-level expectations (no shared code with the closed forms).

Conventions: ages ``x, y`` run 0..X, periods ``s, t`` run 1..T, ``min``/
``max`` are taken over period indices, and the measurement-noise variance
enters only on the exact diagonal ``x == y and s == t``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import (
    ApArima011Params,
    ApArima110Params,
    ApcRwParams,
    ApRwParams,
    InitialConditions,
    ModelParams,
    PanelDims,
)

__all__ = [
    "MomentGrid",
    "mean_ap_rw",
    "cov_ap_rw",
    "mean_apc_rw",
    "cov_apc_rw",
    "cov_latent_arima110",
    "cov_ap_arima110",
    "cov_latent_arima011",
    "cov_ap_arima011",
    "moment_grid",
    "oracle_cov_doublesum",
    "oracle_cov_table",
    "ARIMA110_SMALL_RHO",
]

# Below this |rho| the integrated-AR(1) closed form switches to its
# random-walk limit plus the first-order correction in rho.
ARIMA110_SMALL_RHO = 1e-4


def _check_age(x: int, n_ages: int) -> None:
    if not 0 <= x < n_ages:
        raise IndexError(f"age index {x} outside 0..{n_ages - 1}")


def _check_period(t: int) -> None:
    if t < 1:
        raise IndexError(f"period index {t} must be >= 1")


def _as_periods(t) -> np.ndarray:
    """Coerce period indices to an integer array, rejecting non-integral input."""
    arr = np.asarray(t)
    if arr.dtype.kind not in "iu":
        rounded = np.rint(arr)
        if not np.all(arr == rounded):
            raise ValueError("period indices must be integers")
        arr = rounded.astype(np.int64)
    if np.any(arr < 1):
        raise IndexError("period indices must be >= 1")
    return arr


# ---------------------------------------------------------------------------
# Age-period kernels, random-walk period factor
# ---------------------------------------------------------------------------


def mean_ap_rw(params: ApRwParams, init: InitialConditions, x: int, t: int) -> float:
    """alpha[x] + beta[x]*mu*t + beta[x]*c."""
    _check_age(x, params.n_ages)
    _check_period(t)
    return float(params.alpha[x] + params.beta[x] * params.mu * t + params.beta[x] * init.c)


def cov_ap_rw(params: ApRwParams, x: int, y: int, s: int, t: int) -> float:
    """beta[x]*beta[y]*sigma2_e*min(s, t), plus sigma2_eps on the diagonal."""
    _check_age(x, params.n_ages)
    _check_age(y, params.n_ages)
    _check_period(s)
    _check_period(t)
    out = params.beta[x] * params.beta[y] * params.sigma2_e * min(s, t)
    if x == y and s == t:
        out += params.sigma2_eps
    return float(out)


# ---------------------------------------------------------------------------
# Age-period-cohort kernels, independent random walks
# ---------------------------------------------------------------------------


def mean_apc_rw(params: ApcRwParams, init: InitialConditions, x: int, t: int) -> float:
    """Cohort factor contributes through age-offset time t - x + X."""
    _check_age(x, params.n_ages)
    _check_period(t)
    X = params.n_ages - 1
    return float(
        params.alpha[x]
        + params.beta0[x] * init.c0
        + params.beta0[x] * params.mu0 * (t - x + X)
        + params.beta1[x] * init.c1
        + params.beta1[x] * params.mu1 * t
    )


def cov_apc_rw(params: ApcRwParams, x: int, y: int, s: int, t: int) -> float:
    """Cohort term runs on the age-offset clock min(s-x+X, t-y+X)."""
    _check_age(x, params.n_ages)
    _check_age(y, params.n_ages)
    _check_period(s)
    _check_period(t)
    X = params.n_ages - 1
    out = params.beta0[x] * params.beta0[y] * params.sigma2_e0 * min(s - x + X, t - y + X)
    out += params.beta1[x] * params.beta1[y] * params.sigma2_e1 * min(s, t)
    if x == y and s == t:
        out += params.sigma2_eps
    return float(out)


# ---------------------------------------------------------------------------
# Integrated AR(1) latent factor
# ---------------------------------------------------------------------------


def cov_latent_arima110(rho: float, sigma2_e: float, t, q):
    """Covariance of the integrated stationary AR(1) path at periods t, q.

    Closed form::

        min(t,q) * s2 / (1-rho)^2
        - s2 * rho * (rho^max - rho^|t-q| + rho^min - 1) / ((rho-1)^3 (rho+1))

    For |rho| below :data:`ARIMA110_SMALL_RHO` the random-walk limit plus the
    first-order term ``s2 * rho * (2*min - 1 - [t==q])`` is used instead,
    avoiding cancellation in the vanishing numerator.  Accepts scalar or
    array ``t``, ``q`` (broadcast together).
    """
    if not -1.0 < rho < 1.0:
        raise ValueError(f"rho={rho!r} must lie strictly in (-1, 1)")
    t = _as_periods(t)
    q = _as_periods(q)
    m = np.minimum(t, q)  # integer exponents: rho may be negative
    mf = m.astype(float)
    if abs(rho) < ARIMA110_SMALL_RHO:
        eq = (t == q).astype(float)
        out = sigma2_e * (mf + rho * (2.0 * mf - 1.0 - eq))
    else:
        M = np.maximum(t, q)
        d = np.abs(t - q)
        denom = (rho - 1.0) ** 3 * (rho + 1.0)
        out = mf * sigma2_e / (1.0 - rho) ** 2 - sigma2_e * rho * (
            rho**M - rho**d + rho**m - 1.0
        ) / denom
    return out if out.ndim else float(out)


def cov_ap_arima110(params: ApArima110Params, x: int, y: int, s: int, t: int) -> float:
    _check_age(x, params.n_ages)
    _check_age(y, params.n_ages)
    out = params.beta[x] * params.beta[y] * cov_latent_arima110(
        params.rho, params.sigma2_e, s, t
    )
    if x == y and s == t:
        out += params.sigma2_eps
    return float(out)


# ---------------------------------------------------------------------------
# Integrated MA(1) latent factor
# ---------------------------------------------------------------------------


def cov_latent_arima011(phi: float, sigma2_e: float, t, q):
    """sigma2_e * [min(t,q) * (phi+1)^2 - (1 + [t==q]) * phi].

    Accepts scalar or array ``t``, ``q``.
    """
    if not -1.0 < phi < 1.0:
        raise ValueError(f"phi={phi!r} must lie strictly in (-1, 1)")
    t = _as_periods(t)
    q = _as_periods(q)
    m = np.minimum(t, q).astype(float)
    eq = (t == q).astype(float)
    out = sigma2_e * (m * (phi + 1.0) ** 2 - (1.0 + eq) * phi)
    return out if out.ndim else float(out)


def cov_ap_arima011(params: ApArima011Params, x: int, y: int, s: int, t: int) -> float:
    _check_age(x, params.n_ages)
    _check_age(y, params.n_ages)
    out = params.beta[x] * params.beta[y] * cov_latent_arima011(
        params.phi, params.sigma2_e, s, t
    )
    if x == y and s == t:
        out += params.sigma2_eps
    return float(out)


# ---------------------------------------------------------------------------
# Dense moment grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentGrid:
    """Dense moments over the panel.

    ``means[x, t-1]`` is the expected log rate; ``covs`` is the full
    symmetric covariance matrix over cells flattened as
    ``idx = x * T + (t - 1)``.
    """

    dims: PanelDims
    means: np.ndarray
    covs: np.ndarray

    def flat_index(self, x: int, t: int) -> int:
        _check_age(x, self.dims.n_ages)
        if not 1 <= t <= self.dims.T:
            raise IndexError(f"period index {t} outside 1..{self.dims.T}")
        return x * self.dims.T + (t - 1)

    def mean(self, x: int, t: int) -> float:
        return float(self.means[x, t - 1])

    def cov(self, x: int, y: int, s: int, t: int) -> float:
        return float(self.covs[self.flat_index(x, s), self.flat_index(y, t)])

    def max_abs_diff(self, other: "MomentGrid") -> float:
        """Max absolute difference over means and covariances."""
        return max(
            float(np.max(np.abs(self.means - other.means))),
            float(np.max(np.abs(self.covs - other.covs))),
        )

    def symmetry_error(self) -> float:
        return float(np.max(np.abs(self.covs - self.covs.T)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.covs)[0])

    def is_psd(self, rel_tol: float = 1e-8) -> bool:
        return self.min_eigenvalue() >= -rel_tol * float(np.trace(self.covs))


def _period_grid(T: int) -> np.ndarray:
    return np.arange(1, T + 1, dtype=float)


def _grid_ap(params: ApRwParams, init: InitialConditions, dims: PanelDims) -> MomentGrid:
    ts = _period_grid(dims.T)
    ti = np.arange(1, dims.T + 1)
    means = params.alpha[:, None] + params.beta[:, None] * (params.mu * ts + init.c)[None, :]

    if isinstance(params, ApArima110Params):
        latent = cov_latent_arima110(params.rho, params.sigma2_e, ti[:, None], ti[None, :])
    elif isinstance(params, ApArima011Params):
        latent = cov_latent_arima011(params.phi, params.sigma2_e, ti[:, None], ti[None, :])
    else:
        latent = params.sigma2_e * np.minimum.outer(ts, ts)

    load = np.outer(params.beta, params.beta)
    covs = np.kron(load, latent)
    covs[np.diag_indices_from(covs)] += params.sigma2_eps
    return MomentGrid(dims=dims, means=means, covs=covs)


def _grid_apc(params: ApcRwParams, init: InitialConditions, dims: PanelDims) -> MomentGrid:
    X = dims.X
    ts = _period_grid(dims.T)
    ages = np.arange(X + 1, dtype=float)
    offset_clock = ts[None, :] - ages[:, None] + X  # t - x + X, shape (X+1, T)

    means = (
        params.alpha[:, None]
        + params.beta0[:, None] * (init.c0 + params.mu0 * offset_clock)
        + params.beta1[:, None] * (init.c1 + params.mu1 * ts)[None, :]
    )

    clock0 = offset_clock.reshape(-1)
    clock1 = np.tile(ts, X + 1)
    b0 = np.repeat(params.beta0, dims.T)
    b1 = np.repeat(params.beta1, dims.T)

    covs = np.outer(b0, b0) * params.sigma2_e0 * np.minimum.outer(clock0, clock0)
    covs += np.outer(b1, b1) * params.sigma2_e1 * np.minimum.outer(clock1, clock1)
    covs[np.diag_indices_from(covs)] += params.sigma2_eps
    return MomentGrid(dims=dims, means=means, covs=covs)


def moment_grid(params: ModelParams, init: InitialConditions, dims: PanelDims) -> MomentGrid:
    """Evaluate the family's mean and covariance kernels over the full panel.

    Requires shape-compatible ``params`` with proper (positive, stationary)
    distributional parameters; sum-to-one and distinct-loading membership
    constraints are the concern of :func:`lcident.params.validate`, so
    deliberately off-space values (counterexample pairs) can still be
    evaluated.
    """
    if params.n_ages != dims.n_ages:
        raise ValueError(f"params have {params.n_ages} ages, dims expect {dims.n_ages}")
    if isinstance(params, ApcRwParams):
        for name in ("sigma2_e0", "sigma2_e1", "sigma2_eps"):
            if not getattr(params, name) > 0:
                raise ValueError(f"{name} must be > 0")
        return _grid_apc(params, init, dims)
    if isinstance(params, ApRwParams):
        for name in ("sigma2_e", "sigma2_eps"):
            if not getattr(params, name) > 0:
                raise ValueError(f"{name} must be > 0")
        return _grid_ap(params, init, dims)
    raise TypeError(f"no moment grid for parameter type {type(params).__name__}")


# ---------------------------------------------------------------------------
# Independent double-sum oracles
# ---------------------------------------------------------------------------
#
# The latent factor at period t is an accumulation of per-period increments
# delta_1..delta_t, so Cov(latent_t, latent_q) = sum_{s<=t} sum_{r<=q}
# E(delta_s delta_r).  The oracles evaluate exactly this double sum from the
# increment covariances and never touch the closed forms above:
#
#   rw        : E(delta_s delta_r) = s2 * [s == r]
#   arima110  : E(delta_s delta_r) = s2 * rho^|s-r| / (1 - rho^2)
#   arima011  : delta_s = e_s + phi*e_{s-1}, hence
#               E(delta_s delta_r) = s2 * ((1+phi^2)*[s==r] + phi*[|s-r|==1])


def _increment_cov(model: str, h: int, sigma2_e: float, rho: float, phi: float) -> float:
    h = abs(h)
    if model == "rw":
        return sigma2_e if h == 0 else 0.0
    if model == "arima110":
        return sigma2_e * rho**h / (1.0 - rho**2)
    if model == "arima011":
        if h == 0:
            return sigma2_e * (1.0 + phi**2)
        if h == 1:
            return sigma2_e * phi
        return 0.0
    raise ValueError(f"unknown latent model tag {model!r}")


def oracle_cov_doublesum(
    model: str, t: int, q: int, *, sigma2_e: float, rho: float = 0.0, phi: float = 0.0
) -> float:
    """Latent covariance at (t, q) by direct double summation."""
    if abs(rho) >= 1.0 or abs(phi) >= 1.0:
        raise ValueError("|rho| and |phi| must be < 1")
    if t < 1 or q < 1:
        raise IndexError("period indices must be >= 1")
    total = 0.0
    for s in range(1, t + 1):
        for r in range(1, q + 1):
            total += _increment_cov(model, s - r, sigma2_e, rho, phi)
    return total


def oracle_cov_table(
    model: str, T: int, *, sigma2_e: float, rho: float = 0.0, phi: float = 0.0
) -> np.ndarray:
    """All latent covariances for 1 <= t, q <= T via cumulative double sums.

    ``table[t-1, q-1]`` equals :func:`oracle_cov_doublesum` at (t, q): the
    increment-covariance matrix is summed with two cumulative sums, which is
    the same double sum evaluated with shared prefixes.
    """
    if abs(rho) >= 1.0 or abs(phi) >= 1.0:
        raise ValueError("|rho| and |phi| must be < 1")
    idx = np.arange(1, T + 1)
    lags = np.abs(np.subtract.outer(idx, idx))
    if model == "rw":
        inc = sigma2_e * (lags == 0).astype(float)
    elif model == "arima110":
        inc = sigma2_e * rho**lags / (1.0 - rho**2)
    elif model == "arima011":
        inc = sigma2_e * ((1.0 + phi**2) * (lags == 0) + phi * (lags == 1))
    else:
        raise ValueError(f"unknown latent model tag {model!r}")
    return np.cumsum(np.cumsum(inc, axis=0), axis=1)
