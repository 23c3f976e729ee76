"""Residual curves, spherical autocorrelation and a permutation whiteness test."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import NonPositiveSigma, ZeroDeviation

logger = logging.getLogger(__name__)

ZERO_DEV = 1e-12
DEFAULT_LAGS = (3, 10)


@dataclass
class ResidualSet:
    curves: np.ndarray  # (N - p, r)
    scores: np.ndarray  # (N - p, K)
    mode: str
    sigma_path: np.ndarray  # (N - p, K) Z_hat used at each step


def sigma_path(fit, scores: np.ndarray) -> np.ndarray:
    """In-sample ``Z_hat_i`` for i = p+1..N from the clamped coefficients."""
    x2 = np.asarray(scores) ** 2
    N = x2.shape[0]
    p = fit.p
    z = np.tile(fit.delta_hat, (N - p, 1))
    for i in range(p):
        z += fit.alpha_hat[i] * x2[p - 1 - i : N - 1 - i]
    return z


def residuals(fit, panel, mode: str = "paper") -> ResidualSet:
    """Residual curves ``Sigma_i^dagger(X_i)``.

    ``mode="paper"`` divides each score by ``Z_hat``; ``mode="half"`` by
    ``sqrt(Z_hat)``, which inverts ``X = Sigma^{1/2} eps``.
    """
    if panel.K != fit.K:
        raise ValueError(f"panel K={panel.K} differs from fit K={fit.K}")
    if panel.N <= fit.p:
        raise ValueError("need more curves than the model order")
    z = sigma_path(fit, panel.scores)
    if np.any(z <= 0) or not np.all(np.isfinite(z)):
        raise NonPositiveSigma("non-positive fitted volatility coefficient")
    x = panel.scores[fit.p :]
    if mode == "paper":
        res = x / z
    elif mode == "half":
        res = x / np.sqrt(z)
    else:
        raise ValueError("mode must be 'paper' or 'half'")
    return ResidualSet(panel.basis.synthesize(res), res, mode, z)


def _unit_deviations(curves):
    Y = np.atleast_2d(np.asarray(curves, dtype=np.float64))
    D = Y - Y.mean(axis=0)
    nrm = np.sqrt(np.sum(D**2, axis=1) / Y.shape[1])
    return D, nrm


def sacf(curves, max_lag: int) -> np.ndarray:
    """Spherical autocorrelations ``rho_h``, h = 1..max_lag.

    ``rho_h = n^-1 sum_{i=1}^{n-h} <U_i, U_{i+h}>`` with ``U_i`` the centered
    curve scaled to unit L2 norm.  Curves whose deviation from the mean is
    below 1e-12 are dropped from every sum they enter.
    """
    D, nrm = _unit_deviations(curves)
    n, r = D.shape
    if not 1 <= max_lag < n:
        raise ValueError(f"max_lag must lie in [1, {n - 1}]")
    bad = nrm < ZERO_DEV
    if np.all(bad):
        raise ZeroDeviation("every curve equals the sample mean")
    if np.any(bad):
        logger.warning("sacf: skipping %d curves with zero deviation", int(bad.sum()))
    U = np.where(bad[:, None], 0.0, D / np.where(bad, 1.0, nrm)[:, None])
    return np.array([np.sum(U[:-h] * U[h:]) / r / n for h in range(1, max_lag + 1)])


def gram_matrix(curves) -> np.ndarray:
    D, _ = _unit_deviations(curves)
    return D @ D.T / D.shape[1]


def hs_statistic(curves, max_lag: int) -> float:
    """``N * sum_h ||gamma_h||_HS^2`` of the centered curves."""
    G = gram_matrix(curves)
    N = G.shape[0]
    return float(sum(np.sum(G[: N - h, : N - h] * G[h:, h:]) for h in range(1, max_lag + 1)) / N)


@dataclass
class WhitenessResult:
    max_lag: int
    stat: float
    p_value: float
    n_perm: int


def whiteness_test(curves, max_lag: int, n_perm: int = 999, seed=None) -> WhitenessResult:
    """Permutation portmanteau on ``T = N * sum_h ||gamma_h||_HS^2``.

    The p-value is ``(1 + #{T_perm >= T}) / (1 + n_perm)`` over random
    reshufflings of the time index.
    """
    Y = np.atleast_2d(np.asarray(curves, dtype=np.float64))
    N = Y.shape[0]
    if max_lag < 1:
        raise ValueError("max_lag must be at least 1")
    if N <= 4 * max_lag:
        raise ValueError(f"need N > 4 * max_lag, got N={N}, max_lag={max_lag}")
    if n_perm < 1:
        raise ValueError("n_perm must be positive")
    G = gram_matrix(Y)
    stat = float(kernels.perm_hs_stats(G, np.arange(N)[None, :], max_lag)[0])
    rng = np.random.default_rng(seed)
    perms = np.array([rng.permutation(N) for _ in range(n_perm)])
    null = kernels.perm_hs_stats(G, perms, max_lag)
    # relative slack so ties from rounding count as exceedances
    count = int(np.sum(null >= stat * (1 - 1e-12)))
    return WhitenessResult(max_lag, stat, (1 + count) / (1 + n_perm), n_perm)


def diagnose(fit, panel, max_lags=DEFAULT_LAGS, n_perm: int = 999, seed=None, mode: str = "paper", sacf_lags=10):
    """Residual SACF and squared-residual whiteness tests for both residual modes."""
    out = {"residual_mode": mode, "whiteness": [], "sacf": None, "alternate": {"whiteness": []}}
    for m, target in ((mode, out), ("half" if mode == "paper" else "paper", out["alternate"])):
        res = residuals(fit, panel, m)
        sq = res.curves**2
        n = sq.shape[0]
        target["sacf"] = sacf(sq, min(sacf_lags, n - 1)).tolist()
        for h in max_lags:
            if n > 4 * h:
                w = whiteness_test(sq, h, n_perm, seed)
                target["whiteness"].append({"max_lag": h, "stat": w.stat, "p_value": w.p_value})
    out["alternate"]["residual_mode"] = "half" if mode == "paper" else "paper"
    return out


def write_diagnostics(path, report: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
