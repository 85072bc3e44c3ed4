"""Seeded simulation of latent factor paths and mortality surfaces.

Replicates are driven by a counter-based generator (Philox) keyed from a
:class:`RngSpec`, so one ``(seed, stream)`` pair always reproduces the same
draws and distinct streams are independent.  The innovation law is
pluggable: anything iid with mean zero and unit variance preserves the
model's first two moments, which is all the moment machinery relies on.
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
    STATIONARITY_GUARD,
)
from .moments import MomentGrid

__all__ = [
    "RngSpec",
    "Surface",
    "McMoments",
    "gaussian_innovations",
    "uniform_innovations",
    "student_t_innovations",
    "simulate_kappa_rw",
    "simulate_kappa_arima110",
    "simulate_kappa_arima011",
    "simulate_cohort_paths",
    "simulate_surface",
    "simulate_surfaces",
    "mc_moments",
    "compare_mc_to_grid",
]


@dataclass(frozen=True)
class RngSpec:
    """Seed plus substream index; same pair gives bit-identical output."""

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class Surface:
    """An (X+1) x T panel of log central death rates; column t-1 is period t."""

    dims: PanelDims
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.shape != (self.dims.n_ages, self.dims.T):
            raise ValueError(
                f"surface shape {values.shape} != {(self.dims.n_ages, self.dims.T)}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("surface contains non-finite entries")


@dataclass(frozen=True)
class McMoments:
    """Sample moments over replicates, with standard errors.

    ``se_cov`` uses the Gaussian normal-theory approximation
    ``Var(cov_hat[i, j]) ~= (cov[i,i]*cov[j,j] + cov[i,j]^2) / n``.
    """

    mean_hat: np.ndarray
    cov_hat: np.ndarray
    n_reps: int
    se_mean: np.ndarray
    se_cov: np.ndarray


# ---------------------------------------------------------------------------
# Innovation laws (unit variance, mean zero)
# ---------------------------------------------------------------------------


def gaussian_innovations(rng: np.random.Generator, size) -> np.ndarray:
    return rng.standard_normal(size)


def uniform_innovations(rng: np.random.Generator, size) -> np.ndarray:
    # U(-sqrt(3), sqrt(3)) has mean 0, variance 1
    return rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size)


def student_t_innovations(df: float = 6.0):
    """Student-t scaled to unit variance; df > 4 keeps fourth moments finite."""
    if df <= 4:
        raise ValueError("df must exceed 4 for finite fourth moments")
    scale = np.sqrt((df - 2.0) / df)

    def draw(rng: np.random.Generator, size) -> np.ndarray:
        return scale * rng.standard_t(df, size)

    return draw


def _check_guard(name: str, value: float) -> None:
    if abs(value) > STATIONARITY_GUARD:
        raise ValueError(
            f"|{name}|={abs(value)!r} exceeds the simulation guard band {STATIONARITY_GUARD}"
        )


# ---------------------------------------------------------------------------
# Latent paths.  All simulators take an optional leading replicate axis via
# n_reps; the public single-path functions return 1-d arrays.
# ---------------------------------------------------------------------------


def _kappa_rw(mu, sigma2_e, c, T, rng, innovations, n_reps):
    e = np.sqrt(sigma2_e) * innovations(rng, (n_reps, T))
    t = np.arange(1, T + 1, dtype=float)
    return c + mu * t + np.cumsum(e, axis=1)


def _kappa_arima110(mu, rho, sigma2_e, c, T, rng, innovations, n_reps):
    # Stationary start: u_0 has the stationary increment variance, so the
    # finite recursion reproduces the infinite-history covariances exactly.
    e = np.sqrt(sigma2_e) * innovations(rng, (n_reps, T))
    u0 = np.sqrt(sigma2_e / (1.0 - rho**2)) * innovations(rng, (n_reps,))
    u = np.empty((n_reps, T))
    prev = u0
    for i in range(T):
        prev = rho * prev + e[:, i]
        u[:, i] = prev
    t = np.arange(1, T + 1, dtype=float)
    return c + mu * t + np.cumsum(u, axis=1)


def _kappa_arima011(mu, phi, sigma2_e, c, T, rng, innovations, n_reps):
    e = np.sqrt(sigma2_e) * innovations(rng, (n_reps, T + 1))  # e_0 .. e_T
    inc = e[:, 1:] + phi * e[:, :-1]
    t = np.arange(1, T + 1, dtype=float)
    return c + mu * t + np.cumsum(inc, axis=1)


def simulate_kappa_rw(mu, sigma2_e, c, T, rng: RngSpec, innovations=gaussian_innovations):
    """Random walk with drift: kappa_t = c + mu*t + sum of innovations."""
    if T < 1:
        raise ValueError("T must be >= 1")
    return _kappa_rw(mu, sigma2_e, c, T, rng.generator(), innovations, 1)[0]


def simulate_kappa_arima110(
    mu, rho, sigma2_e, c, T, rng: RngSpec, innovations=gaussian_innovations
):
    """Integrated stationary AR(1) with drift."""
    _check_guard("rho", rho)
    return _kappa_arima110(mu, rho, sigma2_e, c, T, rng.generator(), innovations, 1)[0]


def simulate_kappa_arima011(
    mu, phi, sigma2_e, c, T, rng: RngSpec, innovations=gaussian_innovations
):
    """Integrated MA(1) with drift."""
    _check_guard("phi", phi)
    return _kappa_arima011(mu, phi, sigma2_e, c, T, rng.generator(), innovations, 1)[0]


def _cohort_paths(params, init, dims, rng, innovations, n_reps):
    X, T = dims.X, dims.T
    e1 = np.sqrt(params.sigma2_e1) * innovations(rng, (n_reps, T))
    t = np.arange(1, T + 1, dtype=float)
    kappa = init.c1 + params.mu1 * t + np.cumsum(e1, axis=1)

    # Cohort path over h = 1-X .. T; entry j holds cohort h = j + 1 - X,
    # accumulated over the h+X = j+1 leading increments.
    e0 = np.sqrt(params.sigma2_e0) * innovations(rng, (n_reps, T + X))
    steps = np.arange(1, T + X + 1, dtype=float)
    iota = init.c0 + params.mu0 * steps + np.cumsum(e0, axis=1)
    return kappa, iota


def simulate_cohort_paths(
    params: ApcRwParams,
    init: InitialConditions,
    dims: PanelDims,
    rng: RngSpec,
    innovations=gaussian_innovations,
):
    """One draw of the two independent paths: (kappa over 1..T, iota over 1-X..T)."""
    kappa, iota = _cohort_paths(params, init, dims, rng.generator(), innovations, 1)
    return kappa[0], iota[0]


# ---------------------------------------------------------------------------
# Surfaces
# ---------------------------------------------------------------------------


def _surface_values(params, init, dims, rng, innovations, n_reps):
    X, T = dims.X, dims.T
    if isinstance(params, ApcRwParams):
        kappa, iota = _cohort_paths(params, init, dims, rng, innovations, n_reps)
        # iota column for cell (x, t): cohort h = t - x, stored at j = t - x + X - 1
        xs = np.arange(X + 1)
        cohort_idx = (np.arange(1, T + 1)[None, :] - xs[:, None] + X - 1).reshape(-1)
        latent = (
            np.repeat(params.beta0, T)[None, :] * iota[:, cohort_idx]
            + np.repeat(params.beta1, T)[None, :] * np.tile(kappa, (1, X + 1))
        )
        mean_part = np.repeat(params.alpha, T)[None, :]
    elif isinstance(params, ApArima110Params):
        _check_guard("rho", params.rho)
        kappa = _kappa_arima110(
            params.mu, params.rho, params.sigma2_e, init.c, T, rng, innovations, n_reps
        )
        latent = np.repeat(params.beta, T)[None, :] * np.tile(kappa, (1, X + 1))
        mean_part = np.repeat(params.alpha, T)[None, :]
    elif isinstance(params, ApArima011Params):
        _check_guard("phi", params.phi)
        kappa = _kappa_arima011(
            params.mu, params.phi, params.sigma2_e, init.c, T, rng, innovations, n_reps
        )
        latent = np.repeat(params.beta, T)[None, :] * np.tile(kappa, (1, X + 1))
        mean_part = np.repeat(params.alpha, T)[None, :]
    elif isinstance(params, ApRwParams):
        kappa = _kappa_rw(
            params.mu, params.sigma2_e, init.c, T, rng, innovations, n_reps
        )
        latent = np.repeat(params.beta, T)[None, :] * np.tile(kappa, (1, X + 1))
        mean_part = np.repeat(params.alpha, T)[None, :]
    else:
        raise TypeError(f"cannot simulate parameter type {type(params).__name__}")

    eps = np.sqrt(params.sigma2_eps) * innovations(rng, (n_reps, (X + 1) * T))
    return mean_part + latent + eps  # flattened cells, idx = x*T + (t-1)


def simulate_surface(
    params: ModelParams,
    init: InitialConditions,
    dims: PanelDims,
    rng: RngSpec,
    innovations=gaussian_innovations,
) -> Surface:
    """One surface draw: shared latent path(s) plus iid measurement noise."""
    flat = _surface_values(params, init, dims, rng.generator(), innovations, 1)[0]
    return Surface(dims=dims, values=flat.reshape(dims.n_ages, dims.T))


def simulate_surfaces(
    params: ModelParams,
    init: InitialConditions,
    dims: PanelDims,
    n_reps: int,
    rng: RngSpec,
    innovations=gaussian_innovations,
) -> np.ndarray:
    """``n_reps`` independent surface draws, shape (n_reps, X+1, T).

    Replicates share one generator (vectorised draws); stream separation via
    :class:`RngSpec` remains available for parallel workers.
    """
    flat = _surface_values(params, init, dims, rng.generator(), innovations, n_reps)
    return flat.reshape(n_reps, dims.n_ages, dims.T)


def mc_moments(
    params: ModelParams,
    init: InitialConditions,
    dims: PanelDims,
    n_reps: int,
    rng: RngSpec,
    innovations=gaussian_innovations,
) -> McMoments:
    """Unbiased sample mean and covariance of the surface over replicates."""
    if n_reps < 100:
        raise ValueError("n_reps must be >= 100")
    flat = _surface_values(params, init, dims, rng.generator(), innovations, n_reps)
    mean_hat = flat.mean(axis=0)
    cov_hat = np.cov(flat, rowvar=False, ddof=1)
    se_mean = flat.std(axis=0, ddof=1) / np.sqrt(n_reps)
    diag = np.diag(cov_hat)
    se_cov = np.sqrt((np.outer(diag, diag) + cov_hat**2) / n_reps)
    return McMoments(
        mean_hat=mean_hat.reshape(dims.n_ages, dims.T),
        cov_hat=cov_hat,
        n_reps=n_reps,
        se_mean=se_mean.reshape(dims.n_ages, dims.T),
        se_cov=se_cov,
    )


def compare_mc_to_grid(mc: McMoments, grid: MomentGrid, n_se: float = 4.0) -> dict:
    """Fractions of MC entries within ``n_se`` standard errors of the exact grid."""
    mean_ok = np.abs(mc.mean_hat - grid.means) <= n_se * mc.se_mean
    cov_ok = np.abs(mc.cov_hat - grid.covs) <= n_se * mc.se_cov
    return {
        "n_reps": mc.n_reps,
        "n_se": n_se,
        "frac_mean_within": float(np.mean(mean_ok)),
        "frac_cov_within": float(np.mean(cov_ok)),
        "max_mean_abs_dev_se": float(np.max(np.abs(mc.mean_hat - grid.means) / mc.se_mean)),
        "max_cov_abs_dev_se": float(
            np.max(np.abs(mc.cov_hat - grid.covs) / np.maximum(mc.se_cov, 1e-300))
        ),
    }
