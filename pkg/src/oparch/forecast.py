"""One-step volatility and quantile-curve forecasts, violation rates, backtests.

Under commutation the conditional covariance of ``X_{N+1}`` given the past is
diagonal in the innovation eigenbasis with coefficients ``Z_l * a_l``, so the
pointwise variance is ``v(t) = sum_l Z_l a_l e_l(t)^2``.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import GridMismatch
from .function_space import EigenBasis, GridFunction, KernelOperator, make_kernel, operator_sqrt

logger = logging.getLogger(__name__)

CLAMP = 1e-6
MODES = ("gaussian", "paper")


@dataclass
class SigmaForecast:
    z_hat: np.ndarray  # (K,)
    kernel: np.ndarray | None = None
    cond_cov: np.ndarray | None = None


def forecast_sigma(fit, last_scores) -> SigmaForecast:
    """``Z_l = d_l + sum_i a_{i,l} x_{N+1-i,l}^2`` with clamped coefficients.

    ``last_scores[i]`` holds the scores of ``X_{N-i}`` (row 0 = most recent).
    """
    last = np.atleast_2d(np.asarray(last_scores, dtype=np.float64))
    if last.shape != (fit.p, fit.K):
        raise ValueError(f"last_scores must have shape ({fit.p}, {fit.K}), got {last.shape}")
    z = fit.delta_hat + np.sum(fit.alpha_hat * last**2, axis=0)
    return SigmaForecast(z_hat=z)


def pointwise_variance(sf: SigmaForecast, basis: EigenBasis) -> np.ndarray:
    K = sf.z_hat.size
    E = basis.eigenfunctions[:K]
    return (sf.z_hat * basis.eigenvalues[:K]) @ E**2


def conditional_covariance(sf: SigmaForecast, basis: EigenBasis) -> KernelOperator:
    """Kernel of ``Sigma^{1/2} C_eps Sigma^{1/2}`` truncated to the first K terms."""
    K = sf.z_hat.size
    E = basis.eigenfunctions[:K]
    m = (E.T * (sf.z_hat * basis.eigenvalues[:K])) @ E
    m = 0.5 * (m + m.T)
    sf.cond_cov = m
    sf.kernel = (E.T * sf.z_hat) @ E
    return KernelOperator(basis.grid, m, "cond_cov")


_SQRT_DIAG_CACHE: dict = {}


def innovation_sqrt_diagonal(basis: EigenBasis) -> np.ndarray:
    """Diagonal of the operator square-root kernel of the innovation covariance."""
    key = (basis.kernel_name, basis.grid.r)
    if key not in _SQRT_DIAG_CACHE:
        root = operator_sqrt(make_kernel(basis.kernel_name, basis.grid.r))
        _SQRT_DIAG_CACHE[key] = np.diag(root.matrix).copy()
    return _SQRT_DIAG_CACHE[key]


def quantile_curve(sf: SigmaForecast, basis: EigenBasis, alpha_level: float, mode: str = "gaussian") -> GridFunction:
    """Pointwise lower ``alpha_level`` quantile of ``X_{N+1}``.

    ``mode="gaussian"`` returns ``sqrt(v) * Phi^-1(alpha)``.  ``mode="paper"``
    divides ``alpha`` by ``C_eps^{1/2}(t, t)`` inside ``Phi^-1`` and clamps the
    argument to ``[1e-6, 1 - 1e-6]``.
    """
    if not 0 < alpha_level < 1:
        raise ValueError("alpha_level must lie in (0, 1)")
    sd = np.sqrt(np.maximum(pointwise_variance(sf, basis), 0.0))
    if mode == "gaussian":
        return GridFunction(basis.grid, sd * norm.ppf(alpha_level))
    if mode != "paper":
        raise ValueError(f"mode must be one of {MODES}")
    root = innovation_sqrt_diagonal(basis)
    with np.errstate(divide="ignore"):
        arg = alpha_level / root
    pointwise = alpha_level / np.sqrt(np.diag(make_kernel(basis.kernel_name, basis.grid.r).matrix))
    clipped = np.clip(arg, CLAMP, 1 - CLAMP)
    if np.any(clipped != arg):
        logger.info(
            "divided-level quantile argument clamped at %d of %d nodes (pointwise-sd reading would clamp %d)",
            int(np.sum(clipped != arg)),
            arg.size,
            int(np.sum((pointwise > 1 - CLAMP) | (pointwise < CLAMP))),
        )
    return GridFunction(basis.grid, sd * norm.ppf(clipped))


def _values(curves):
    grids = []
    vals = []
    for c in curves:
        if isinstance(c, GridFunction):
            grids.append(c.grid)
            vals.append(c.values)
        else:
            vals.append(np.asarray(c, dtype=np.float64))
    return grids, np.atleast_2d(np.array(vals))


def violation_rate(forecasts, realized) -> float:
    """Mean over days of the integrated indicator ``1{R(t) < V(t)}``."""
    gf, F = _values(forecasts)
    gr, R = _values(realized)
    if F.shape != R.shape:
        raise GridMismatch(f"forecast array {F.shape} and realized array {R.shape} differ")
    if gf and gr and any(a != b for a, b in zip(gf, gr)):
        raise GridMismatch("forecast and realized curves live on different grids")
    return float(np.mean(np.mean(R < F, axis=1)))


def average_quantile_curve(forecasts) -> GridFunction:
    grids, F = _values(forecasts)
    if F.size == 0:
        raise ValueError("need at least one forecast")
    from .function_space import Grid

    grid = grids[0] if grids else Grid(F.shape[1])
    return GridFunction(grid, F.mean(axis=0))


def historical_quantiles(curves: np.ndarray, start: int, alpha_level: float) -> np.ndarray:
    """Pointwise empirical quantile of all curves before each test day."""
    curves = np.asarray(curves)
    out = np.empty((curves.shape[0] - start, curves.shape[1]))
    for idx, j in enumerate(range(start, curves.shape[0])):
        out[idx] = np.quantile(curves[:j], alpha_level, axis=0, method="linear")
    return out


@dataclass
class BacktestReport:
    levels: list  # [{alpha, vr, cv_err}]
    baseline: dict
    avg_curves: dict  # {(model, alpha): (r,) array}
    grid_nodes: np.ndarray
    config: dict

    def to_dict(self) -> dict:
        return {"levels": self.levels, "baseline": self.baseline, "config": self.config}

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    def write_avg_curves(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "model", "value"])
            for (model, a), vals in self.avg_curves.items():
                label = f"{model}@{a:g}"
                for t, v in zip(self.grid_nodes, vals):
                    w.writerow([format(t, ".17g"), label, format(v, ".17g")])


def backtest(
    curves,
    basis: EigenBasis,
    p: int = 1,
    method: str = "tikhonov",
    alpha_levels=(0.01, 0.05),
    split: float = 0.8,
    K: int | None = None,
    tve: float = 0.9,
    theta="rate",
    k_proj=None,
    mode: str = "gaussian",
    orientation: str = "realized",
    seed: int | None = None,
) -> BacktestReport:
    """Expanding-window one-step backtest with a daily refit.

    The first ``floor(split * N)`` curves train the first fit; each test day
    ``j`` is forecast from a model refit on ``curves[:j]``.  ``K`` and (for
    ``theta="auto"``) θ are chosen once on the training segment.
    """
    from . import estimate as est

    curves = np.asarray(curves, dtype=np.float64)
    N = curves.shape[0]
    start = est.train_size(N, split)
    train = curves[:start]
    if K is None:
        K = est.select_K_tve(train, basis, tve)
    if theta == "auto" and method != "mp":
        theta = est.cross_validate_theta(
            train, basis, p, alpha_levels[0], K=K, method=method, k_proj=k_proj, mode=mode, orientation=orientation
        )
    panel = est.compute_scores(curves, basis, K)
    q = est.expanding_forecasts(panel, curves, p, start, method, theta, k_proj, list(alpha_levels), mode)
    test = curves[start:]
    levels, avg, base = [], {}, {"name": "historical", "levels": []}
    for a in alpha_levels:
        levels.append(
            {
                "alpha": a,
                "vr": violation_rate(q[a], test),
                "cv_err": est.quantile_loss(q[a], test, a, orientation),
            }
        )
        avg[("ccc", a)] = q[a].mean(axis=0)
        h = historical_quantiles(curves, start, a)
        base["levels"].append(
            {"alpha": a, "vr": violation_rate(h, test), "cv_err": est.quantile_loss(h, test, a, orientation)}
        )
        avg[("historical", a)] = h.mean(axis=0)
    config = {
        "p": p,
        "K": int(K),
        "method": method,
        "theta": theta if isinstance(theta, str) else float(theta),
        "split": split,
        "n_train": int(start),
        "n_test": int(N - start),
        "mode": mode,
        "orientation": orientation,
        "seed": seed,
    }
    return BacktestReport(levels, base, avg, basis.grid.nodes.copy(), config)
