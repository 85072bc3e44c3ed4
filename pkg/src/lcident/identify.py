"""Observational equivalence and constructive moment inversion.

Three kinds of machinery:

* :func:`check_equivalence` decides whether two parameter values produce
  the same mean/covariance grid (up to tolerances);
* ``*_pair`` generators construct the known observational-equivalence
  counterexamples exactly;
* ``recover_*`` functions invert an exact moment grid back to the
  generating parameter value by executing the constructive uniqueness
  argument for each family: affine (or geometric-second-difference) fits of
  the variance sequences, product-matrix reconstruction of the loadings,
  and sign/scale resolution through the sum-to-one constraint.

:func:`search_equivalent` complements the constructive route with a
multistart numerical search for a distinct moment-equivalent parameter;
a failed search supports, but never proves, identifiability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .moments import (
    MomentGrid,
    cov_latent_arima011,
    cov_latent_arima110,
    moment_grid,
)
from .params import (
    ApArima011Params,
    ApArima110Params,
    ApcRwParams,
    ApRwParams,
    FullyParametricApcParams,
    InitialConditions,
    ModelParams,
    PanelDims,
    STATIONARITY_GUARD,
    validate,
)
from .simulate import RngSpec

__all__ = [
    "EquivalenceReport",
    "RecoveryResult",
    "RecoveryError",
    "BETA_ZERO_TOL",
    "canonical_vector",
    "param_distance",
    "fully_parametric_mean_surface",
    "check_equivalence",
    "ap_mean_pair_zero_drift",
    "fully_parametric_cohort_pair",
    "apc_drift_swap_pair",
    "apc_x0_variance_trade_pair",
    "recover_ap_rw",
    "recover_apc_rw",
    "recover_ap_arima110",
    "recover_ap_arima011",
    "search_equivalent",
]

# Loadings with |beta| below this are treated as exact zeros during recovery.
BETA_ZERO_TOL = 1e-10

# Default verdict tolerances.
EPS_MOMENT = 1e-10
DELTA_PARAM = 1e-6


class RecoveryError(RuntimeError):
    """Moment inversion failed: the grid is inconsistent with the family,
    or the panel violates the premise under which inversion is possible."""


# ---------------------------------------------------------------------------
# Canonical parameter flattening and distance
# ---------------------------------------------------------------------------


def canonical_vector(params: ModelParams) -> np.ndarray:
    """Flatten theta into comparable coordinates (variances on log scale)."""
    if isinstance(params, ApcRwParams):
        return np.concatenate(
            [
                params.alpha,
                params.beta0,
                params.beta1,
                [
                    params.mu0,
                    params.mu1,
                    math.log(params.sigma2_e0),
                    math.log(params.sigma2_e1),
                    math.log(params.sigma2_eps),
                ],
            ]
        )
    if isinstance(params, ApRwParams):
        tail = [params.mu, math.log(params.sigma2_e), math.log(params.sigma2_eps)]
        if isinstance(params, ApArima110Params):
            tail.append(params.rho)
        elif isinstance(params, ApArima011Params):
            tail.append(params.phi)
        return np.concatenate([params.alpha, params.beta, tail])
    if isinstance(params, FullyParametricApcParams):
        return np.concatenate(
            [params.alpha, params.beta0, params.beta1, params.kappa, params.iota]
        )
    raise TypeError(f"no canonical flattening for {type(params).__name__}")


def param_distance(theta_a: ModelParams, theta_b: ModelParams) -> float:
    """Max-norm distance between canonical flattenings (same family only)."""
    if type(theta_a) is not type(theta_b):
        raise ValueError(
            f"family mismatch: {type(theta_a).__name__} vs {type(theta_b).__name__}"
        )
    va, vb = canonical_vector(theta_a), canonical_vector(theta_b)
    if va.shape != vb.shape:
        raise ValueError("parameter dimensions differ")
    return float(np.max(np.abs(va - vb)))


# ---------------------------------------------------------------------------
# Equivalence checking
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EquivalenceReport:
    theta_a: ModelParams
    theta_b: ModelParams
    mean_residual: float
    cov_residual: float | None
    moment_residual: float
    param_distance: float
    verdict: str  # "equivalent" | "distinct" | "inconclusive"
    notes: tuple = ()


def _verdict(moment_residual: float, distance: float, eps_m: float, delta: float) -> str:
    if moment_residual <= eps_m:
        return "equivalent"
    if distance >= delta:
        return "distinct"
    return "inconclusive"


def fully_parametric_mean_surface(
    params: FullyParametricApcParams, dims: PanelDims
) -> np.ndarray:
    """alpha[x] + beta1[x]*kappa[t] + beta0[x]*iota[t-x] over the panel."""
    X, T = dims.X, dims.T
    if params.n_ages != X + 1 or params.n_periods != T:
        raise ValueError("parameter dimensions do not match the panel")
    xs = np.arange(X + 1)
    cohort_idx = np.arange(1, T + 1)[None, :] - xs[:, None] + X - 1
    return (
        params.alpha[:, None]
        + params.beta1[:, None] * params.kappa[None, :]
        + params.beta0[:, None] * params.iota[cohort_idx]
    )


def check_equivalence(
    theta_a: ModelParams,
    theta_b: ModelParams,
    init: InitialConditions,
    dims: PanelDims,
    *,
    eps_m: float = EPS_MOMENT,
    delta: float = DELTA_PARAM,
    include_covariances: bool = True,
) -> EquivalenceReport:
    """Compare the full moment grids of two same-family parameter values.

    Values outside the strict parameter space (the counterexample pairs)
    are accepted; only shape compatibility is required.
    """
    if type(theta_a) is not type(theta_b):
        raise ValueError(
            f"family mismatch: {type(theta_a).__name__} vs {type(theta_b).__name__}"
        )
    distance = param_distance(theta_a, theta_b)

    if isinstance(theta_a, FullyParametricApcParams):
        fa = fully_parametric_mean_surface(theta_a, dims)
        fb = fully_parametric_mean_surface(theta_b, dims)
        mean_res = float(np.max(np.abs(fa - fb)))
        cov_res = None
        moment_res = mean_res
    else:
        ga = moment_grid(theta_a, init, dims)
        gb = moment_grid(theta_b, init, dims)
        mean_res = float(np.max(np.abs(ga.means - gb.means)))
        cov_res = float(np.max(np.abs(ga.covs - gb.covs)))
        moment_res = max(mean_res, cov_res) if include_covariances else mean_res

    return EquivalenceReport(
        theta_a=theta_a,
        theta_b=theta_b,
        mean_residual=mean_res,
        cov_residual=cov_res if include_covariances else None,
        moment_residual=moment_res,
        param_distance=distance,
        verdict=_verdict(moment_res, distance, eps_m, delta),
    )


# ---------------------------------------------------------------------------
# Counterexample generators
# ---------------------------------------------------------------------------


def ap_mean_pair_zero_drift(
    beta,
    beta_tilde,
    alpha,
    c: float,
    *,
    sigma2_e: float = 1.0,
    sigma2_eps: float = 1.0,
) -> tuple[ApRwParams, ApRwParams]:
    """Two age-period parameter values with identical mean grids.

    With zero drift the constant start c can be traded between the age
    intercepts and the loadings: alpha_tilde = alpha + c * (beta - beta_tilde)
    leaves every expected log rate unchanged while the loadings differ.
    The covariance grids do differ, which is what restores identifiability
    once second moments are used.
    """
    beta = np.asarray(beta, dtype=float)
    beta_tilde = np.asarray(beta_tilde, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    for name, b in (("beta", beta), ("beta_tilde", beta_tilde)):
        if abs(float(np.sum(b)) - 1.0) > 1e-12:
            raise ValueError(f"sum({name}) must equal 1")
    if np.max(np.abs(beta - beta_tilde)) <= 1e-12:
        raise ValueError("beta and beta_tilde must differ")
    theta_a = ApRwParams(
        alpha=alpha, beta=beta, mu=0.0, sigma2_e=sigma2_e, sigma2_eps=sigma2_eps
    )
    theta_b = ApRwParams(
        alpha=alpha + c * (beta - beta_tilde),
        beta=beta_tilde,
        mu=0.0,
        sigma2_e=sigma2_e,
        sigma2_eps=sigma2_eps,
    )
    return theta_a, theta_b


def fully_parametric_cohort_pair(
    X: int, T: int
) -> tuple[FullyParametricApcParams, FullyParametricApcParams]:
    """Two distinct fully parametric cohort parameterisations with equal fits.

    The cohort mass sitting on the loading vector can be shifted onto the
    cohort path: (0.75, 0.25) loadings with path values (-2, 1, 1) produce
    the same product grid as (0.5, 0.5) loadings with (-2, 0.5, 1.5).  Both
    satisfy the usual zero-sum constraints, so those constraints do not pin
    the parameters down.
    """
    if not (X > 2 and T > 2):
        raise ValueError("requires X > 2 and T > 2")
    n = X + 1
    alpha = np.linspace(-3.0, -1.0, n)
    beta1 = np.full(n, 1.0 / n)
    kappa = np.zeros(T)
    kappa[1], kappa[2] = 1.0, -1.0  # kappa[0] = 0 and sum(kappa) = 0

    beta0 = np.zeros(n)
    beta0[0], beta0[1] = 0.75, 0.25
    iota = np.zeros(T + X)
    iota[0] = -2.0  # cohort 1 - X
    iota[X - 1] = 1.0  # cohort 0
    iota[T + X - 1] = 1.0  # cohort T

    beta0_t = np.zeros(n)
    beta0_t[0], beta0_t[1] = 0.5, 0.5
    iota_t = np.zeros(T + X)
    iota_t[0] = -2.0
    iota_t[X - 1] = 0.5
    iota_t[T + X - 1] = 1.5

    theta_a = FullyParametricApcParams(
        alpha=alpha, beta0=beta0, beta1=beta1, kappa=kappa, iota=iota, constraint_set="B"
    )
    theta_b = FullyParametricApcParams(
        alpha=alpha, beta0=beta0_t, beta1=beta1, kappa=kappa, iota=iota_t,
        constraint_set="B",
    )
    return theta_a, theta_b


def apc_drift_swap_pair(params: ApcRwParams) -> tuple[ApcRwParams, ApcRwParams]:
    """Moment-equal pair when cohort and period loadings coincide.

    Requires ``beta0 == beta1`` (deliberately outside the parameter space)
    and distinct drifts.  Swapping the drifts and absorbing the age-offset
    shift into alpha leaves both the mean and the covariance grid unchanged.
    """
    if np.max(np.abs(params.beta0 - params.beta1)) > 1e-12:
        raise ValueError("requires beta0 == beta1 (componentwise)")
    if params.mu0 == params.mu1:
        raise ValueError("requires mu0 != mu1")
    X = params.n_ages - 1
    offsets = X - np.arange(X + 1, dtype=float)
    alpha_t = (
        params.alpha
        - offsets * params.beta0 * params.mu1
        + offsets * params.beta1 * params.mu0
    )
    theta_b = ApcRwParams(
        alpha=alpha_t,
        beta0=params.beta0,
        beta1=params.beta1,
        mu0=params.mu1,
        mu1=params.mu0,
        sigma2_e0=params.sigma2_e0,
        sigma2_e1=params.sigma2_e1,
        sigma2_eps=params.sigma2_eps,
    )
    return params, theta_b


def apc_x0_variance_trade_pair(
    params: ApcRwParams, z: float
) -> tuple[ApcRwParams, ApcRwParams]:
    """Single-age (X=0) pair trading variance between cohort and period walks.

    With one age both factors load with weight one, so only the sum
    sigma2_e0 + sigma2_e1 enters the covariances; any z in the open
    interval (-sigma2_e0, sigma2_e1) shifts variance from one walk to the
    other without changing a single moment.
    """
    if params.n_ages != 1:
        raise ValueError("requires a single-age panel (X = 0)")
    if not (-params.sigma2_e0 < z < params.sigma2_e1):
        raise ValueError(
            f"z={z!r} outside the open interval (-{params.sigma2_e0}, {params.sigma2_e1})"
        )
    theta_b = ApcRwParams(
        alpha=params.alpha,
        beta0=params.beta0,
        beta1=params.beta1,
        mu0=params.mu0,
        mu1=params.mu1,
        sigma2_e0=params.sigma2_e0 + z,
        sigma2_e1=params.sigma2_e1 - z,
        sigma2_eps=params.sigma2_eps,
    )
    return params, theta_b


# ---------------------------------------------------------------------------
# Recovery (constructive moment inversion)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RecoveryResult:
    theta_hat: ModelParams
    residual: float
    steps_log: tuple


def _variance_sequences(grid: MomentGrid) -> np.ndarray:
    """Var(log m[x, t]) as an (X+1, T) array."""
    n, T = grid.dims.n_ages, grid.dims.T
    d = np.diag(grid.covs)
    return d.reshape(n, T)


def _period_block(grid: MomentGrid, s: int, t: int) -> np.ndarray:
    """The (X+1, X+1) matrix of g(x, y, s, t) over all age pairs."""
    T = grid.dims.T
    rows = np.arange(grid.dims.n_ages) * T + (s - 1)
    cols = np.arange(grid.dims.n_ages) * T + (t - 1)
    return grid.covs[np.ix_(rows, cols)]


def _loading_from_products(products: np.ndarray, log: list, label: str) -> np.ndarray:
    """Solve v from the rank-1 system v_x * v_y = products[x, y], sum(v) > 0.

    The pivot is the age with the largest diagonal product; relative signs
    come from the pivot column, and the overall sign is fixed by requiring a
    positive sum, which is the only choice compatible with loadings that sum
    to one and a positive innovation variance.
    """
    diag = np.diag(products)
    pivot = int(np.argmax(diag))
    if diag[pivot] <= 0:
        raise RecoveryError(f"{label}: no age carries a positive diagonal product")
    v = products[:, pivot] / math.sqrt(diag[pivot])
    total = float(np.sum(v))
    if total < 0:
        v = -v
        total = -total
        log.append(f"{label}: pivot column sign flipped to make the loading sum positive")
    if total <= BETA_ZERO_TOL:
        raise RecoveryError(f"{label}: loading sum vanishes; scale cannot be fixed")
    log.append(f"{label}: pivot age {pivot}, scale {total!r}")
    return v


def _finish_betas(v: np.ndarray, log: list, label: str) -> tuple[np.ndarray, float]:
    """Zero-snap tiny loadings, then read (betas, sigma2) off v = beta * sqrt(sigma2)."""
    scale = float(np.sum(v))
    small = np.abs(v) < BETA_ZERO_TOL * max(1.0, scale)
    if np.any(small):
        v = np.where(small, 0.0, v)
        scale = float(np.sum(v))
        log.append(f"{label}: zero-loading branch at ages {np.nonzero(small)[0].tolist()}")
    if scale <= 0:
        raise RecoveryError(f"{label}: loading sum not positive after zero-snapping")
    return v / scale, scale**2


def _mean_fits(grid: MomentGrid) -> tuple[np.ndarray, np.ndarray]:
    """Two-point slope and intercept of the mean surface in t, per age."""
    if grid.dims.T < 2:
        raise RecoveryError("mean structure needs T >= 2")
    m1 = grid.means[:, 0]
    m2 = grid.means[:, 1]
    slope = m2 - m1
    return slope, m1 - slope


def _recover_ap_family(
    grid: MomentGrid,
    init: InitialConditions,
    latent_var,
    latent_slope_unit: float,
    log: list,
) -> dict:
    """Shared tail of the age-period inversions once the latent shape is known.

    ``latent_var(t)`` is the unit-variance latent variance at period t and
    ``latent_slope_unit`` its increment between periods 1 and 2; the product
    matrix beta_x beta_y sigma2_e is the (1 -> 2) slope of the equal-time
    covariance blocks divided by that increment.
    """
    var = _variance_sequences(grid)
    products = (_period_block(grid, 2, 2) - _period_block(grid, 1, 1)) / latent_slope_unit
    sigma2_eps = float(np.mean(var[:, 0] - np.diag(products) * latent_var(1)))
    if sigma2_eps <= 0:
        raise RecoveryError(f"recovered measurement variance {sigma2_eps!r} not positive")
    log.append(f"measurement variance from variance intercepts: {sigma2_eps!r}")

    v = _loading_from_products(products, log, "period loadings")
    beta, sigma2_e = _finish_betas(v, log, "period loadings")

    mean_slope, mean_intercept = _mean_fits(grid)
    denom = float(beta @ beta)
    mu = float(beta @ mean_slope) / denom
    alpha = mean_intercept - beta * init.c
    log.append(f"drift from mean slopes: {mu!r}")
    return {
        "alpha": alpha,
        "beta": beta,
        "mu": mu,
        "sigma2_e": sigma2_e,
        "sigma2_eps": sigma2_eps,
    }


def _finalize(theta_hat, grid, init, dims, log) -> RecoveryResult:
    verdict = validate(theta_hat, dims)
    if not verdict.ok:
        raise RecoveryError(
            "recovered value violates the parameter space: " + "; ".join(verdict.violations)
        )
    residual = grid.max_abs_diff(moment_grid(theta_hat, init, dims))
    log.append(f"reconstruction residual {residual!r}")
    return RecoveryResult(theta_hat=theta_hat, residual=residual, steps_log=tuple(log))


def recover_ap_rw(
    grid: MomentGrid, init: InitialConditions, dims: PanelDims
) -> RecoveryResult:
    """Invert an exact age-period random-walk moment grid (needs T >= 2).

    Variance sequences are affine in t with common intercept sigma2_eps and
    slopes beta_x^2 sigma2_e; equal-time covariance slopes supply the signed
    products beta_x beta_y sigma2_e; the sum-to-one constraint fixes sign
    and scale; the mean surface then yields alpha and the drift.
    """
    if dims.T < 2:
        raise RecoveryError("inversion needs T >= 2")
    log: list = []
    var = _variance_sequences(grid)
    if dims.T >= 3:
        slopes = var[:, 1] - var[:, 0]
        fitted = var[:, 0][:, None] + slopes[:, None] * np.arange(dims.T)[None, :]
        dev = float(np.max(np.abs(var - fitted)))
        scale = max(1.0, float(np.max(np.abs(var))))
        if dev > 1e-8 * scale:
            raise RecoveryError(
                f"variance sequences deviate from affine-in-t by {dev!r}; "
                "grid is not from this family"
            )
    parts = _recover_ap_family(grid, init, lambda t: float(t), 1.0, log)
    theta_hat = ApRwParams(**parts)
    return _finalize(theta_hat, grid, init, dims, log)


def recover_ap_arima110(
    grid: MomentGrid, init: InitialConditions, dims: PanelDims
) -> RecoveryResult:
    """Invert an exact integrated-AR(1) age-period grid (needs T >= 4).

    Second differences of any nonzero-loading variance sequence form a
    geometric progression with ratio rho; the all-zero case degenerates to
    the random-walk inversion.  With rho known the latent variance shape is
    explicit and the random-walk tail applies unchanged.
    """
    if dims.T < 4:
        raise RecoveryError("inversion needs T >= 4")
    log: list = []
    var = _variance_sequences(grid)
    d2 = var[:, 2:] - 2.0 * var[:, 1:-1] + var[:, :-2]  # columns t = 3..T
    scale = max(1.0, float(np.max(np.abs(var))))
    if float(np.max(np.abs(d2))) <= 1e-12 * scale:
        log.append("vanishing second differences: random-walk branch (rho = 0)")
        parts = _recover_ap_family(grid, init, lambda t: float(t), 1.0, log)
        theta_hat = ApArima110Params(**parts, rho=0.0)
        return _finalize(theta_hat, grid, init, dims, log)

    x_star = int(np.argmax(np.abs(d2[:, 0])))
    if abs(d2[x_star, 0]) <= 1e-12 * scale:
        raise RecoveryError("second differences vanish at t=3 but not later; not this family")
    rho = float(d2[x_star, 1] / d2[x_star, 0])
    if not -1.0 < rho < 1.0:
        raise RecoveryError(f"second-difference ratio {rho!r} outside (-1, 1)")
    # every later ratio must agree: the progression is geometric
    predicted = d2[x_star, 0] * rho ** np.arange(d2.shape[1])
    dev = float(np.max(np.abs(d2[x_star] - predicted)))
    if dev > 1e-8 * max(1.0, float(np.max(np.abs(d2)))):
        raise RecoveryError(
            f"second differences are not geometric (max deviation {dev!r})"
        )
    log.append(f"autoregressive coefficient from second-difference ratio: {rho!r}")

    def latent_var(t: int) -> float:
        return float(cov_latent_arima110(rho, 1.0, t, t))

    unit_slope = latent_var(2) - latent_var(1)
    parts = _recover_ap_family(grid, init, latent_var, unit_slope, log)
    theta_hat = ApArima110Params(**parts, rho=rho)
    return _finalize(theta_hat, grid, init, dims, log)


def recover_ap_arima011(
    grid: MomentGrid, init: InitialConditions, dims: PanelDims
) -> RecoveryResult:
    """Invert an exact integrated-MA(1) age-period grid (needs T >= 2).

    At the age with the largest variance slope, the slope s = A(phi+1)^2 and
    the off-period covariance q = A((phi+1)^2 - phi) give p = s - q = A*phi;
    the quadratic p*phi^2 + (2p - s)*phi + p = 0 has the true coefficient
    and its reciprocal as roots, and only the root inside (-1, 1) is
    admissible.  The random-walk tail then applies.
    """
    if dims.T < 2:
        raise RecoveryError("inversion needs T >= 2")
    log: list = []
    var = _variance_sequences(grid)
    s_all = var[:, 1] - var[:, 0]
    x_star = int(np.argmax(s_all))
    s = float(s_all[x_star])
    if s <= 0:
        raise RecoveryError("no age shows a positive variance slope; not this family")
    q = grid.cov(x_star, x_star, 1, 2)
    p = s - q
    if abs(p) <= 1e-12 * s:
        phi = 0.0
        log.append("vanishing lag term: unique root phi = 0")
    else:
        disc = (2.0 * p - s) ** 2 - 4.0 * p**2
        if disc < 0:
            if disc < -1e-10 * s**2:
                raise RecoveryError(f"negative root discriminant {disc!r}; not this family")
            disc = 0.0
        roots = ((s - 2.0 * p) + np.sqrt(disc)) / (2.0 * p), (
            (s - 2.0 * p) - np.sqrt(disc)
        ) / (2.0 * p)
        inside = [r for r in roots if -1.0 < r < 1.0]
        log.append(f"moving-average roots {roots!r}; reciprocal pair, keeping the invertible one")
        if not inside:
            raise RecoveryError(f"both candidate coefficients {roots!r} outside (-1, 1)")
        phi = float(min(inside, key=abs))

    def latent_var(t: int) -> float:
        return float(cov_latent_arima011(phi, 1.0, t, t))

    unit_slope = (phi + 1.0) ** 2
    parts = _recover_ap_family(grid, init, latent_var, unit_slope, log)
    theta_hat = ApArima011Params(**parts, phi=phi)
    return _finalize(theta_hat, grid, init, dims, log)


def recover_apc_rw(
    grid: MomentGrid, init: InitialConditions, dims: PanelDims
) -> RecoveryResult:
    """Invert an exact age-period-cohort grid (needs X > 0 and T > X + 2).

    Lagged covariances at cohort offset d = max(1, x-y+1) are affine in t
    with slope P0 + P1 and intercept P0*(X-y), separating the cohort and
    period product matrices entry by entry; each is then a rank-1 system
    solved as in the age-period case.  Distinct loading vectors are required
    for the drifts to separate, so recovering equal loadings aborts rather
    than returning one of the continuum of drift splittings.
    """
    X, T = dims.X, dims.T
    if X == 0:
        raise RecoveryError(
            "single-age panels are not invertible: cohort and period variance "
            "trade freely (X > 0 is required)"
        )
    if T <= X + 2:
        raise RecoveryError(f"inversion needs T > X + 2 (got T={T}, X={X})")
    log: list = []
    n = X + 1
    var = _variance_sequences(grid)
    var_slope = var[:, 1] - var[:, 0]
    sigma2_eps = float(var[X, 0] - var_slope[X])  # age X: offset clock equals t
    if sigma2_eps <= 0:
        raise RecoveryError(f"recovered measurement variance {sigma2_eps!r} not positive")
    log.append(f"measurement variance from the oldest-age intercept: {sigma2_eps!r}")

    p0 = np.full((n, n), np.nan)
    p1 = np.full((n, n), np.nan)
    for x in range(n):
        for y in range(n - 1):  # intercept carries the factor X - y, so y < X
            d = max(1, x - y + 1)
            g1 = grid.cov(x, y, 1 + d, 1)
            g2 = grid.cov(x, y, 2 + d, 2)
            slope = g2 - g1
            p0[x, y] = (g1 - slope) / (X - y)
            p1[x, y] = slope - p0[x, y]
    p0[: n - 1, X] = p0[X, : n - 1]
    p1[: n - 1, X] = p1[X, : n - 1]
    # The (X, X) diagonal products are not read off any lagged covariance;
    # mark them unusable as pivots (the pivot column recovers v[X] anyway).
    p0[X, X] = -1.0
    p1[X, X] = -1.0

    diag0 = np.diag(p0)[: n - 1]
    diag1 = np.diag(p1)[: n - 1]
    tol0 = 1e-12 * max(1.0, float(np.max(np.abs(var))))
    cohort_concentrated = bool(np.max(diag0) <= tol0)
    period_concentrated = bool(np.max(diag1) <= tol0)
    if cohort_concentrated and period_concentrated:
        raise RecoveryError(
            "both loading vectors concentrate on the oldest age; outside the space"
        )

    if cohort_concentrated:
        # beta0 = e_X: the period side resolves first, then the oldest-age
        # variance slope splits into the two diagonal products.
        log.append("cohort loadings concentrated at the oldest age")
        w = _loading_from_products(p1, log, "period loadings")
        beta1, sigma2_e1 = _finish_betas(w, log, "period loadings")
        p0_xx = float(var_slope[X] - w[X] ** 2)
        if p0_xx <= 0:
            raise RecoveryError("residual cohort variance at the oldest age not positive")
        beta0 = np.zeros(n)
        beta0[X] = 1.0
        sigma2_e0 = p0_xx
    elif period_concentrated:
        log.append("period loadings concentrated at the oldest age")
        v = _loading_from_products(p0, log, "cohort loadings")
        beta0, sigma2_e0 = _finish_betas(v, log, "cohort loadings")
        p1_xx = float(var_slope[X] - v[X] ** 2)
        if p1_xx <= 0:
            raise RecoveryError("residual period variance at the oldest age not positive")
        beta1 = np.zeros(n)
        beta1[X] = 1.0
        sigma2_e1 = p1_xx
    else:
        v = _loading_from_products(p0, log, "cohort loadings")
        beta0, sigma2_e0 = _finish_betas(v, log, "cohort loadings")
        w = _loading_from_products(p1, log, "period loadings")
        beta1, sigma2_e1 = _finish_betas(w, log, "period loadings")

    if float(np.max(np.abs(beta0 - beta1))) <= 1e-12:
        raise RecoveryError(
            "recovered equal cohort and period loadings: outside the parameter "
            "space, and the drifts only determine their weighted sum"
        )

    mean_slope, mean_intercept = _mean_fits(grid)
    design = np.column_stack([beta0, beta1])
    sv = np.linalg.svd(design, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise RecoveryError("loading vectors are collinear; drifts not separable")
    drifts, *_ = np.linalg.lstsq(design, mean_slope, rcond=None)
    mu0, mu1 = float(drifts[0]), float(drifts[1])
    offsets = X - np.arange(n, dtype=float)
    alpha = (
        mean_intercept
        - beta0 * init.c0
        - beta0 * mu0 * offsets
        - beta1 * init.c1
    )
    log.append(f"drifts from mean slopes: mu0={mu0!r}, mu1={mu1!r}")

    theta_hat = ApcRwParams(
        alpha=alpha,
        beta0=beta0,
        beta1=beta1,
        mu0=mu0,
        mu1=mu1,
        sigma2_e0=sigma2_e0,
        sigma2_e1=sigma2_e1,
        sigma2_eps=sigma2_eps,
    )
    return _finalize(theta_hat, grid, init, dims, log)


# ---------------------------------------------------------------------------
# Numerical equivalence search
# ---------------------------------------------------------------------------


def _encode(params: ModelParams) -> np.ndarray:
    def enc_bounded(v: float) -> float:
        clipped = min(max(v / STATIONARITY_GUARD, -1.0 + 1e-12), 1.0 - 1e-12)
        return math.atanh(clipped)

    if isinstance(params, ApcRwParams):
        return np.concatenate(
            [
                params.alpha,
                params.beta0[:-1],
                params.beta1[:-1],
                [
                    params.mu0,
                    params.mu1,
                    math.log(params.sigma2_e0),
                    math.log(params.sigma2_e1),
                    math.log(params.sigma2_eps),
                ],
            ]
        )
    if isinstance(params, ApRwParams):
        tail = [params.mu, math.log(params.sigma2_e), math.log(params.sigma2_eps)]
        if isinstance(params, ApArima110Params):
            tail.append(enc_bounded(params.rho))
        elif isinstance(params, ApArima011Params):
            tail.append(enc_bounded(params.phi))
        return np.concatenate([params.alpha, params.beta[:-1], tail])
    raise TypeError(f"search is not defined for {type(params).__name__}")


def _decode(z: np.ndarray, template: ModelParams) -> ModelParams:
    n = template.n_ages

    def complete(free: np.ndarray) -> np.ndarray:
        return np.concatenate([free, [1.0 - float(np.sum(free))]])

    if isinstance(template, ApcRwParams):
        alpha = z[:n]
        beta0 = complete(z[n : n + n - 1])
        beta1 = complete(z[n + n - 1 : n + 2 * (n - 1)])
        mu0, mu1, l0, l1, le = z[n + 2 * (n - 1) :]
        return ApcRwParams(
            alpha=alpha,
            beta0=beta0,
            beta1=beta1,
            mu0=float(mu0),
            mu1=float(mu1),
            sigma2_e0=math.exp(l0),
            sigma2_e1=math.exp(l1),
            sigma2_eps=math.exp(le),
        )
    alpha = z[:n]
    beta = complete(z[n : n + n - 1])
    rest = z[n + n - 1 :]
    mu, ls, le = float(rest[0]), float(rest[1]), float(rest[2])
    base = dict(alpha=alpha, beta=beta, mu=mu, sigma2_e=math.exp(ls), sigma2_eps=math.exp(le))
    if isinstance(template, ApArima110Params):
        return ApArima110Params(**base, rho=STATIONARITY_GUARD * math.tanh(float(rest[3])))
    if isinstance(template, ApArima011Params):
        return ApArima011Params(**base, phi=STATIONARITY_GUARD * math.tanh(float(rest[3])))
    return ApRwParams(**base)


def search_equivalent(
    theta: ModelParams,
    init: InitialConditions,
    dims: PanelDims,
    *,
    delta: float = 1e-3,
    eps_m: float = EPS_MOMENT,
    n_starts: int = 32,
    max_evals: int = 50_000,
    rng: RngSpec = RngSpec(seed=0),
    report_threshold: float = 1e-6,
) -> EquivalenceReport:
    """Multistart search for a distinct parameter with the same moments.

    The search runs over the family's free coordinates (loadings with the
    last component eliminated, variances on log scale, bounded coefficients
    through tanh).  Internally each start minimizes the smooth mean-square
    moment mismatch (same zero set as the reported max residual, but far
    better conditioned for a simplex search) plus an exterior penalty
    repelling candidates closer than ``delta`` to ``theta``; every start is
    polished by a second simplex run from its own optimum.  Only evaluated
    points at distance >= delta compete for the reported candidate, and the
    report always quotes the max moment residual.

    A best residual above ``report_threshold`` means the search found no
    equivalent: that outcome supports moment identifiability at these
    panel dimensions but does not prove it.
    """
    target = moment_grid(theta, init, dims)
    z0 = _encode(theta)
    gen = rng.generator()
    scale_menu = (0.02, 0.1, 0.5)
    obj_scale = max(
        1.0, float(np.max(np.abs(target.means))), float(np.max(np.abs(target.covs)))
    )
    penalty_weight = 10.0 * obj_scale

    best_residual = math.inf
    best_theta = None
    n_evals = 0

    def objective(z: np.ndarray) -> float:
        nonlocal best_residual, best_theta, n_evals
        n_evals += 1
        try:
            cand = _decode(z, theta)
            cand_grid = moment_grid(cand, init, dims)
        except (ValueError, OverflowError, FloatingPointError):
            return 1e12 * obj_scale
        dmeans = cand_grid.means - target.means
        dcovs = cand_grid.covs - target.covs
        residual = max(float(np.max(np.abs(dmeans))), float(np.max(np.abs(dcovs))))
        dist = param_distance(theta, cand)
        if dist >= delta and residual < best_residual:
            best_residual = residual
            best_theta = cand
        smooth = float(np.mean(dmeans**2)) + float(np.mean(dcovs**2))
        if dist < delta:
            return smooth + penalty_weight * ((delta - dist) / delta) ** 2
        return smooth

    nm_options = {"fatol": 1e-30, "xatol": 1e-14, "adaptive": True}
    for start in range(n_starts):
        scale = scale_menu[start % len(scale_menu)]
        x0 = z0 + scale * (1.0 + np.abs(z0)) * gen.standard_normal(z0.shape)
        res = scipy.optimize.minimize(
            objective, x0, method="Nelder-Mead",
            options={"maxfev": max_evals // 2, **nm_options},
        )
        # fresh-simplex restart from the found point polishes the valley floor
        scipy.optimize.minimize(
            objective, res.x, method="Nelder-Mead",
            options={"maxfev": max_evals - res.nfev, **nm_options},
        )

    if best_theta is None:
        return EquivalenceReport(
            theta_a=theta,
            theta_b=theta,
            mean_residual=math.inf,
            cov_residual=math.inf,
            moment_residual=math.inf,
            param_distance=0.0,
            verdict="inconclusive",
            notes=("no candidate at distance >= delta was evaluated",),
        )

    report = check_equivalence(theta, best_theta, init, dims, eps_m=eps_m, delta=delta)
    if report.moment_residual > report_threshold:
        note = (
            f"no equivalent found: best residual {report.moment_residual!r} over "
            f"{n_starts} starts ({n_evals} evaluations) exceeds {report_threshold!r}; "
            "this supports identifiability at these dims but does not prove it"
        )
    else:
        note = (
            f"equivalent candidate found at parameter distance "
            f"{report.param_distance!r} with residual {report.moment_residual!r}"
        )
    return EquivalenceReport(
        theta_a=report.theta_a,
        theta_b=report.theta_b,
        mean_residual=report.mean_residual,
        cov_residual=report.cov_residual,
        moment_residual=report.moment_residual,
        param_distance=report.param_distance,
        verdict=report.verdict,
        notes=(note,),
    )
