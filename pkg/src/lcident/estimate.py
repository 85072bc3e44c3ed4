"""Classical two-step estimation and the constraint-inconsistency demos.

Stage one treats the period path as a parameter vector and fits the usual
rank-1 decomposition of the age-centered log-rate matrix under the ad hoc
constraints sum(beta) = 1, sum(kappa) = 0.  Stage two fits a time-series
model to the estimated path.  The demo functions make the two structural
problems of constraining realizations of a stochastic process executable:
the forced-zero update and the measure-zero constraint event.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import PanelDims
from .simulate import RngSpec, Surface, gaussian_innovations

__all__ = [
    "Stage2Fit",
    "FitResult",
    "DegenerateSurfaceError",
    "fit_lee_carter_stage1",
    "fit_stage2",
    "fit_lee_carter",
    "demo_distributional_constraint",
    "demo_dynamic_constraint",
    "rank1_surface",
]


class DegenerateSurfaceError(ValueError):
    """Stage one cannot factorize: the age-centered matrix is (near) zero."""


@dataclass(frozen=True)
class Stage2Fit:
    model: str  # "rw" | "arima110" | "arima011"
    mu: float
    sigma2_e: float
    rho: float | None = None
    phi: float | None = None


@dataclass(frozen=True)
class FitResult:
    alpha_hat: np.ndarray
    beta_hat: np.ndarray
    kappa_hat: np.ndarray
    second_stage: Stage2Fit | None
    residual_sigma2: float


def fit_lee_carter_stage1(surface: Surface) -> FitResult:
    """Rank-1 fit of the age-centered log rates under the ad hoc constraints.

    alpha is the age-wise time average; the leading singular triple of the
    centered matrix gives loadings and path, rescaled so the loadings sum to
    one and the path sums to zero (the path shift is absorbed into alpha).
    The reconstruction alpha + beta*kappa is the least-squares-optimal
    rank-1 approximation.
    """
    M = surface.values
    if surface.dims.T < 2:
        raise ValueError("stage one needs T >= 2")
    alpha = M.mean(axis=1)
    centered = M - alpha[:, None]
    scale = float(np.max(np.abs(M))) + 1.0
    if float(np.max(np.abs(centered))) < 1e-12 * scale:
        raise DegenerateSurfaceError("age-centered surface is zero; loadings undefined")

    u_mat, sv, vh = np.linalg.svd(centered, full_matrices=False)
    u = u_mat[:, 0]
    v = vh[0, :]
    u_sum = float(np.sum(u))
    if abs(u_sum) < 1e-12:
        raise DegenerateSurfaceError("leading loading direction sums to zero; cannot rescale")
    if u_sum < 0:
        u, v = -u, -v
        u_sum = -u_sum
    beta = u / u_sum
    kappa = sv[0] * v * u_sum
    shift = float(np.mean(kappa))
    alpha = alpha + beta * shift
    kappa = kappa - shift

    resid = M - (alpha[:, None] + np.outer(beta, kappa))
    return FitResult(
        alpha_hat=alpha,
        beta_hat=beta,
        kappa_hat=kappa,
        second_stage=None,
        residual_sigma2=float(np.mean(resid**2)),
    )


def fit_stage2(kappa_hat: np.ndarray, model: str) -> Stage2Fit:
    """Fit a differenced time-series model to an estimated period path.

    ``rw``       : drift = mean of differences, innovation variance their
                   sample variance.
    ``arima110`` : least squares of the differences on their lag with
                   intercept; drift = intercept / (1 - coefficient).
    ``arima011`` : method of moments on the difference autocovariances;
                   requires |gamma1/gamma0| <= 1/2 for a real invertible
                   root.
    """
    kappa_hat = np.asarray(kappa_hat, dtype=float)
    d = np.diff(kappa_hat)
    if model == "rw":
        if len(kappa_hat) < 3:
            raise ValueError("rw fit needs at least 3 path values")
        mu = float(np.mean(d))
        return Stage2Fit(model="rw", mu=mu, sigma2_e=float(np.var(d, ddof=1)))

    if len(kappa_hat) < 4:
        raise ValueError(f"{model} fit needs at least 4 path values")

    if model == "arima110":
        y, ylag = d[1:], d[:-1]
        design = np.column_stack([np.ones_like(ylag), ylag])
        (a, rho), *_ = np.linalg.lstsq(design, y, rcond=None)
        if abs(1.0 - rho) < 1e-10:
            raise ValueError(f"unit autoregressive root (rho={rho!r}); drift undefined")
        resid = y - a - rho * ylag
        ddof = max(len(y) - 2, 1)
        return Stage2Fit(
            model="arima110",
            mu=float(a / (1.0 - rho)),
            sigma2_e=float(np.sum(resid**2) / ddof),
            rho=float(rho),
        )

    if model == "arima011":
        mu = float(np.mean(d))
        centered = d - mu
        n = len(centered)
        gamma0 = float(centered @ centered) / n
        gamma1 = float(centered[1:] @ centered[:-1]) / n
        if gamma0 <= 0:
            raise ValueError("degenerate differences: zero variance")
        r = gamma1 / gamma0
        if abs(r) > 0.5:
            raise ValueError(
                f"lag-1 autocorrelation {r!r} exceeds 1/2; no real invertible "
                "moving-average root exists"
            )
        phi = 0.0 if r == 0 else float((1.0 - np.sqrt(1.0 - 4.0 * r**2)) / (2.0 * r))
        return Stage2Fit(
            model="arima011",
            mu=mu,
            sigma2_e=gamma0 / (1.0 + phi**2),
            phi=phi,
        )

    raise ValueError(f"unknown second-stage model {model!r}; expected rw|arima110|arima011")


def fit_lee_carter(surface: Surface, model: str = "rw") -> FitResult:
    """Stage one followed by stage two on the estimated path."""
    stage1 = fit_lee_carter_stage1(surface)
    stage2 = fit_stage2(stage1.kappa_hat, model)
    return FitResult(
        alpha_hat=stage1.alpha_hat,
        beta_hat=stage1.beta_hat,
        kappa_hat=stage1.kappa_hat,
        second_stage=stage2,
        residual_sigma2=stage1.residual_sigma2,
    )


# ---------------------------------------------------------------------------
# Constraint demonstrations
# ---------------------------------------------------------------------------


def demo_distributional_constraint(
    mu: float,
    sigma2_e: float,
    c: float,
    T: int,
    n_reps: int,
    rng: RngSpec,
    *,
    tols: tuple = (1e-3, 1e-6),
    innovations=gaussian_innovations,
    n_hist_bins: int = 20,
) -> dict:
    """How often does a simulated walk satisfy the zero-sum constraint?

    Simulates ``n_reps`` period paths, sums each, and reports the empirical
    distribution of the sum together with the fraction falling inside
    +-tol.  For any continuous innovation law the constraint set is a
    hyperplane and the fraction should be numerically zero; the exact
    moments of the sum are reported alongside for calibration.
    """
    if n_reps < 1000:
        raise ValueError("n_reps must be >= 1000")
    gen = rng.generator()
    e = np.sqrt(sigma2_e) * innovations(gen, (n_reps, T))
    t = np.arange(1, T + 1, dtype=float)
    kappa = c + mu * t + np.cumsum(e, axis=1)
    sums = kappa.sum(axis=1)

    s, tt = np.meshgrid(t, t)
    var_exact = sigma2_e * float(np.minimum(s, tt).sum())
    mean_exact = T * c + mu * T * (T + 1) / 2.0
    sample_var = float(np.var(sums, ddof=1))
    # Gaussian sums: Var(sample variance) = 2 sigma^4 / (n - 1)
    se_var = float(np.sqrt(2.0 / (n_reps - 1)) * var_exact)

    counts, edges = np.histogram(sums, bins=n_hist_bins)
    return {
        "n_reps": n_reps,
        "T": T,
        "fractions_within_tol": {
            repr(tol): float(np.mean(np.abs(sums) < tol)) for tol in tols
        },
        "min_abs_sum": float(np.min(np.abs(sums))),
        "sample_mean_sum": float(np.mean(sums)),
        "exact_mean_sum": mean_exact,
        "sample_var_sum": sample_var,
        "exact_var_sum": var_exact,
        "var_se": se_var,
        "var_within_4se": bool(abs(sample_var - var_exact) <= 4.0 * se_var),
        "histogram": {"edges": edges.tolist(), "counts": counts.tolist()},
    }


def demo_dynamic_constraint(surface_t: Surface, surface_tplus1: Surface) -> dict:
    """What happens to the fitted path when one more period arrives?

    Refitting moves every previously estimated path value (reported as the
    max change over the common window), while holding the old realization
    fixed under the zero-sum constraint would force the new value - and,
    applied sequentially, every later value - to be exactly zero.
    """
    T = surface_t.dims.T
    if surface_tplus1.dims.T != T + 1 or surface_tplus1.dims.X != surface_t.dims.X:
        raise ValueError("second surface must extend the first by exactly one period")
    if not np.array_equal(surface_tplus1.values[:, :T], surface_t.values):
        raise ValueError("second surface does not extend the first (common window differs)")

    fit_old = fit_lee_carter_stage1(surface_t)
    fit_new = fit_lee_carter_stage1(surface_tplus1)
    max_shift = float(np.max(np.abs(fit_new.kappa_hat[:T] - fit_old.kappa_hat)))

    old_sum = float(np.sum(fit_old.kappa_hat))
    forced_next = -old_sum  # = 0 whenever the old window satisfied the constraint
    return {
        "T": T,
        "kappa_refit_max_change": max_shift,
        "old_window_kappa_sum": old_sum,
        "forced_next_kappa_if_realization_fixed": forced_next,
        "sequential_consequence": "all later path values are forced to zero as well",
        "kappa_old": fit_old.kappa_hat.tolist(),
        "kappa_new": fit_new.kappa_hat.tolist(),
    }


def rank1_surface(alpha, beta, kappa) -> Surface:
    """Noiseless surface alpha[x] + beta[x]*kappa[t] (builder for tests/demos)."""
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    dims = PanelDims(X=len(alpha) - 1, T=len(kappa))
    return Surface(dims=dims, values=alpha[:, None] + np.outer(beta, kappa))
