"""Yule-Walker estimation of CCC-op-ARCH(p) coefficients.

Working data are the squared basis scores ``s_{k,j} = <X_k, e_j>^2``.  With
the stacked vector ``y_k = (s_k, s_{k-1}, ..., s_{k-p+1})`` (length ``pK``)
and Tikhonov-scaled targets ``z_{k+1,j} = s_{k+1,j} / (a_j + theta)`` the
ARCH coefficients are the block diagonals of ``M = D_d C_d^{-1}``, where
``C_d`` is the lag-0 covariance of ``y`` and ``D_d`` (``K x pK``) the lag-1
cross-covariance between ``z`` and ``y``.

Three back-ends invert ``C_d``: exact (``finite``), ridge plus spectral
projection (``tikhonov``) and truncated spectral pseudo-inverse (``mp``).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from . import forecast as _fc
from .errors import (
    DegenerateSample,
    FormatError,
    GridMismatch,
    InsufficientBasis,
    NonConvergence,
    OparchError,
    RankDeficient,
    SingularCd,
    ZeroNorm,
)
from .function_space import EigenBasis

logger = logging.getLogger(__name__)

DELTA_FLOOR = 1e-12
COND_LIMIT = 1e12
RATE_CONSTANT = 3.0
METHODS = ("finite", "tikhonov", "mp")
ALIASES = {"moore-penrose": "mp"}


@dataclass(frozen=True, eq=False)
class ScorePanel:
    scores: np.ndarray  # (N, K)
    basis: EigenBasis
    K: int

    @property
    def squared(self) -> np.ndarray:
        return self.scores**2

    @property
    def N(self) -> int:
        return int(self.scores.shape[0])

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.basis.eigenvalues[: self.K]

    def head(self, n: int) -> ScorePanel:
        return ScorePanel(self.scores[:n], self.basis, self.K)


def compute_scores(curves, basis: EigenBasis, K: int) -> ScorePanel:
    curves = np.atleast_2d(np.asarray(curves, dtype=np.float64))
    if curves.shape[1] != basis.grid.r:
        raise GridMismatch(f"curves have {curves.shape[1]} nodes, basis grid has {basis.grid.r}")
    if not 1 <= K <= basis.size:
        raise ValueError(f"K must lie in [1, {basis.size}], got {K}")
    return ScorePanel(basis.scores(curves, K), basis, int(K))


def tve_profile(curves, basis: EigenBasis) -> np.ndarray:
    """Unexplained energy fraction after k = 1..size basis terms."""
    curves = np.atleast_2d(np.asarray(curves, dtype=np.float64))
    if curves.shape[1] != basis.grid.r:
        raise GridMismatch("curves and basis are on different grids")
    total = np.sum(curves**2) / basis.grid.r
    if total == 0:
        return np.zeros(basis.size)
    captured = np.cumsum(np.sum(basis.scores(curves) ** 2, axis=0))
    return np.clip(1.0 - captured / total, 0.0, None)


def select_K_tve(curves, basis: EigenBasis, tve: float = 0.9) -> int:
    """Smallest K whose basis reconstruction leaves at most ``1 - tve`` of the energy."""
    if not 0 < tve < 1:
        raise ValueError("tve must lie in (0, 1)")
    resid = tve_profile(curves, basis)
    # roundoff slack so that exact-span data stop at the right k
    hit = np.flatnonzero(resid <= (1.0 - tve) + 1e-12)
    if hit.size == 0:
        raise InsufficientBasis(
            f"{basis.size} basis functions explain only {1 - resid[-1]:.4f} < {tve} of the energy"
        )
    return int(hit[0] + 1)


@dataclass(frozen=True, eq=False)
class YwMatrices:
    c_d: np.ndarray  # (pK, pK)
    d_d: np.ndarray  # (K, pK)
    m_p: np.ndarray  # (pK,)
    m1_prime: np.ndarray  # (K,)
    theta: float
    p: int
    K: int
    eigenvalues: np.ndarray  # (K,) innovation eigenvalues a_j
    N: int


def stack_lags(squared: np.ndarray, p: int) -> np.ndarray:
    """Rows ``y_k`` for k = p..N (one-based), block ``i`` holding lag ``i``."""
    N = squared.shape[0]
    return np.hstack([squared[p - 1 - i : N - i] for i in range(p)])


def lag0_moments(panel: ScorePanel, p: int):
    """Stacked lags, their mean and covariance, normalized by N."""
    N = panel.N
    if N <= p + 1:
        raise DegenerateSample(f"need N > p + 1 curves, got N={N}, p={p}")
    s = panel.squared
    if np.any(np.ptp(s, axis=0) == 0):
        bad = np.flatnonzero(np.ptp(s, axis=0) == 0) + 1
        raise DegenerateSample(f"squared-score columns {bad.tolist()} are constant")
    Y = stack_lags(s, p)
    m_p = Y.sum(axis=0) / N
    Yc = Y - m_p
    c_d = Yc.T @ Yc / N
    return Y, m_p, 0.5 * (c_d + c_d.T)


def build_yw_matrices(panel: ScorePanel, p: int, theta: float) -> YwMatrices:
    if theta < 0:
        raise ValueError("theta must be non-negative")
    N, K = panel.N, panel.K
    Y, m_p, c_d = lag0_moments(panel, p)
    s = panel.squared
    lam = panel.eigenvalues
    scale = 1.0 / (lam + theta)
    nxt = s[p:]  # s_{k+1} for k = p..N-1
    m1 = nxt.sum(axis=0) / N
    zc = (nxt - m1) * scale
    d_d = zc.T @ (Y[:-1] - m_p) / N
    return YwMatrices(c_d, d_d, m_p, m1, float(theta), int(p), int(K), lam.copy(), N)


def theta_rate(panel: ScorePanel, p: int, constant: float | None = None) -> float:
    """``constant * min(a_K, lambda_min(C_d)) / sqrt(N)``, constant defaulting to RATE_CONSTANT."""
    constant = RATE_CONSTANT if constant is None else constant
    _, _, c_d = lag0_moments(panel, p)
    ev = np.linalg.eigvalsh(c_d)
    top = max(float(ev[-1]), 0.0)
    low = max(float(ev[0]), 1e-12 * top)
    return constant * min(float(panel.eigenvalues[-1]), low) / math.sqrt(panel.N)


def default_theta_grid(panel: ScorePanel, p: int, n: int = 12) -> np.ndarray:
    _, _, c_d = lag0_moments(panel, p)
    scale = np.trace(c_d) / c_d.shape[0]
    return np.logspace(-6, -1, n) * scale


@dataclass(eq=False)
class FitResult:
    p: int
    K: int
    method: str
    theta: float
    k_proj: int
    alpha_raw: np.ndarray  # (p, K) pre-clamp
    delta_raw: np.ndarray | None = None  # (K,)
    delta_matrix: np.ndarray | None = None  # (K, K)
    kernel: str = ""
    r: int = 0
    tve: float | None = None
    seed: int | None = None
    eigengaps: list | None = None

    @property
    def alpha_hat(self) -> np.ndarray:
        return np.maximum(self.alpha_raw, 0.0)

    @property
    def delta_hat(self) -> np.ndarray | None:
        if self.delta_raw is None:
            return None
        return np.maximum(self.delta_raw, DELTA_FLOOR)

    @property
    def clamped(self) -> dict:
        out = {"alpha": (self.alpha_raw < 0).tolist()}
        if self.delta_raw is not None:
            out["delta"] = (self.delta_raw < DELTA_FLOOR).tolist()
        return out

    @classmethod
    def from_params(cls, params) -> FitResult:
        """Wrap true model parameters so they can drive forecasts/residuals."""
        K = params.K_model
        return cls(
            p=params.p,
            K=K,
            method="true",
            theta=0.0,
            k_proj=params.p * K,
            alpha_raw=np.array(params.alpha, dtype=float),
            delta_raw=np.array(params.delta, dtype=float),
            delta_matrix=np.diag(params.delta),
            kernel=params.kernel,
            r=params.basis.grid.r,
        )

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "K": self.K,
            "method": self.method,
            "theta": self.theta,
            "k_proj": self.k_proj,
            "alpha_hat": self.alpha_hat.tolist(),
            "delta_hat": None if self.delta_raw is None else self.delta_hat.tolist(),
            "delta_matrix": None if self.delta_matrix is None else self.delta_matrix.tolist(),
            "clamped": self.clamped,
            "alpha_raw": self.alpha_raw.tolist(),
            "delta_raw": None if self.delta_raw is None else self.delta_raw.tolist(),
            "tve": self.tve,
            "seed": self.seed,
            "kernel": self.kernel,
            "r": self.r,
            "eigengaps": self.eigengaps,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> FitResult:
        try:
            alpha = np.array(obj.get("alpha_raw") or obj["alpha_hat"], dtype=float)
            dr = obj.get("delta_raw") or obj.get("delta_hat")
            dm = obj.get("delta_matrix")
            return cls(
                p=int(obj["p"]),
                K=int(obj["K"]),
                method=str(obj["method"]),
                theta=float(obj["theta"]),
                k_proj=int(obj["k_proj"]),
                alpha_raw=alpha.reshape(int(obj["p"]), int(obj["K"])),
                delta_raw=None if dr is None else np.array(dr, dtype=float),
                delta_matrix=None if dm is None else np.array(dm, dtype=float),
                kernel=obj.get("kernel", ""),
                r=int(obj.get("r", 0)),
                tve=obj.get("tve"),
                seed=obj.get("seed"),
                eigengaps=obj.get("eigengaps"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed fit JSON: {exc}") from None

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> FitResult:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def block_diagonals(M: np.ndarray, p: int, K: int) -> np.ndarray:
    """``a[i, j] = M[j, i*K + j]`` -- the diag* of each K x K block."""
    j = np.arange(K)
    return np.stack([M[j, i * K + j] for i in range(p)])


def sorted_eigh(c: np.ndarray):
    """Descending eigenpairs; ties keep the lower index, signs fixed so the
    largest-magnitude entry of each eigenvector is positive."""
    try:
        w, U = linalg.eigh(c)
    except linalg.LinAlgError as exc:  # pragma: no cover
        raise NonConvergence(f"eigensolver failed on C_d: {exc}") from exc
    order = np.argsort(-w, kind="stable")
    w, U = w[order], U[:, order]
    idx = np.argmax(np.abs(U), axis=0)
    U = U * np.sign(U[idx, np.arange(U.shape[1])])
    return w, U


def _eigengaps(w: np.ndarray) -> list:
    w = np.asarray(w)
    return (1.0 / np.maximum(w[:-1] - w[1:], 1e-300)).tolist() if w.size > 1 else []


def _result(yw: YwMatrices, M: np.ndarray, method: str, theta: float, k_proj: int, gaps=None) -> FitResult:
    return FitResult(
        p=yw.p,
        K=yw.K,
        method=method,
        theta=theta,
        k_proj=k_proj,
        alpha_raw=block_diagonals(M, yw.p, yw.K),
        eigengaps=gaps,
    )


def fit_alpha_finite(yw: YwMatrices) -> FitResult:
    c = yw.c_d
    cond = np.linalg.cond(c)
    if not np.isfinite(cond) or cond >= COND_LIMIT:
        raise SingularCd(f"C_d condition number {cond:.3g} >= {COND_LIMIT:.0e}; use tikhonov or mp")
    M = linalg.solve(c, yw.d_d.T, assume_a="sym").T
    return _result(yw, M, "finite", yw.theta, yw.p * yw.K)


def fit_alpha_tikhonov(yw: YwMatrices, theta: float, k_proj: int | None = None) -> FitResult:
    """``M = D_d (C_d + theta I)^-1 P`` with P projecting on the top ``k_proj``
    eigenvectors of ``C_d``."""
    pK = yw.p * yw.K
    k_proj = yw.K if k_proj is None else int(k_proj)
    if theta <= 0:
        raise ValueError("theta must be positive")
    if not 1 <= k_proj <= pK:
        raise ValueError(f"k_proj must lie in [1, {pK}]")
    w, U = sorted_eigh(yw.c_d)
    Uk = U[:, :k_proj]
    M = (yw.d_d @ Uk) / (w[:k_proj] + theta) @ Uk.T
    return _result(yw, M, "tikhonov", theta, k_proj, _eigengaps(w))


def fit_alpha_mp(yw: YwMatrices, k_mp: int | None = None) -> FitResult:
    """Unregularized targets and a rank-``k_mp`` spectral pseudo-inverse of C_d."""
    pK = yw.p * yw.K
    k_mp = yw.K if k_mp is None else int(k_mp)
    if not 1 <= k_mp <= pK:
        raise ValueError(f"k_mp must lie in [1, {pK}]")
    w, U = sorted_eigh(yw.c_d)
    if w[k_mp - 1] <= 1e-12 * w[0]:
        raise RankDeficient(f"eigenvalue {k_mp} of C_d is {w[k_mp - 1]:.3g}, below 1e-12 of the largest")
    # undo the ridge on the C_eps inverse: rows of D_d were scaled by 1/(a_j + theta)
    d_d = yw.d_d * ((yw.eigenvalues + yw.theta) / yw.eigenvalues)[:, None]
    Uk = U[:, :k_mp]
    M = (d_d @ Uk) / w[:k_mp] @ Uk.T
    return _result(yw, M, "mp", 0.0, k_mp, _eigengaps(w))


def fitted_operator(yw: YwMatrices, fit: FitResult) -> np.ndarray:
    """Full ``K x pK`` matrix M for a back-end (used for residual checks)."""
    if fit.method == "finite":
        return linalg.solve(yw.c_d, yw.d_d.T, assume_a="sym").T
    w, U = sorted_eigh(yw.c_d)
    Uk = U[:, : fit.k_proj]
    if fit.method == "tikhonov":
        return (yw.d_d @ Uk) / (w[: fit.k_proj] + fit.theta) @ Uk.T
    d_d = yw.d_d * ((yw.eigenvalues + yw.theta) / yw.eigenvalues)[:, None]
    return (d_d @ Uk) / w[: fit.k_proj] @ Uk.T


def fit_delta(yw: YwMatrices, alpha: FitResult, panel: ScorePanel, theta: float | None = None):
    """Intercept estimate from ``Delta C_eps = C_X - alpha(m_p) C_eps``.

    Returns ``(diagonal, full K x K matrix)`` of the raw estimate.
    """
    theta = yw.theta if theta is None else theta
    K, p = yw.K, yw.p
    x = panel.scores
    c_x = x.T @ x / panel.N
    lam = panel.eigenvalues
    m = yw.m_p.reshape(p, K)
    shift = np.sum(alpha.alpha_raw * m, axis=0) * lam
    mat = (c_x - np.diag(shift)) / (lam + theta)[None, :]
    return np.diag(mat).copy(), mat


def fit_panel(
    panel: ScorePanel,
    p: int,
    method: str = "tikhonov",
    theta: float | str = "rate",
    k_proj: int | None = None,
) -> FitResult:
    """Alpha and Delta from a score panel with a fixed θ policy ("rate" or a number)."""
    method = ALIASES.get(method, method)
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    if method == "mp":
        th = 0.0
    elif theta == "rate":
        th = theta_rate(panel, p)
    else:
        th = float(theta)
        if th <= 0:
            raise ValueError("theta must be positive")
    yw = build_yw_matrices(panel, p, th)
    if method == "finite":
        res = fit_alpha_finite(yw)
    elif method == "tikhonov":
        res = fit_alpha_tikhonov(yw, th, k_proj)
    else:
        res = fit_alpha_mp(yw, k_proj)
    d, dm = fit_delta(yw, res, panel, th)
    res.delta_raw, res.delta_matrix = d, dm
    res.kernel = panel.basis.kernel_name
    res.r = panel.basis.grid.r
    return res


def fit(
    curves,
    basis: EigenBasis,
    p: int = 1,
    K: int | None = None,
    tve: float = 0.9,
    method: str = "tikhonov",
    theta: float | str = "rate",
    k_proj: int | None = None,
    alpha_level: float = 0.05,
    theta_grid=None,
    seed: int | None = None,
) -> FitResult:
    """End-to-end fit.  ``K=None`` selects K by TVE; ``theta="auto"`` runs
    one-step cross-validation, ``"rate"`` uses ``theta_rate``."""
    curves = np.asarray(curves, dtype=np.float64)
    method = ALIASES.get(method, method)
    chosen_by_tve = K is None
    if K is None:
        K = select_K_tve(curves, basis, tve)
    panel = compute_scores(curves, basis, K)
    if theta == "auto" and method != "mp":
        theta = cross_validate_theta(curves, basis, p, alpha_level, theta_grid, K=K, method=method, k_proj=k_proj)
    res = fit_panel(panel, p, method, theta, k_proj)
    res.tve = tve if chosen_by_tve else None
    res.seed = seed
    return res


# ---------------------------------------------------------------------------
# cross-validation of theta
# ---------------------------------------------------------------------------


def check_loss(u, alpha_level: float):
    """``rho(u) = u * (alpha - 1{u < 0})``."""
    u = np.asarray(u, dtype=np.float64)
    return u * (alpha_level - (u < 0))


def quantile_loss(forecast, realized, alpha_level: float, orientation: str = "realized") -> float:
    """Integrated check loss of a quantile curve.

    ``orientation="realized"`` scores ``rho(X - V)`` (minimized by the true
    alpha-quantile); ``"forecast"`` scores ``rho(V - X)``.
    """
    diff = np.asarray(realized) - np.asarray(forecast)
    if orientation == "forecast":
        diff = -diff
    elif orientation != "realized":
        raise ValueError("orientation must be 'realized' or 'forecast'")
    return float(np.mean(check_loss(diff, alpha_level), axis=-1).mean())


def expanding_forecasts(
    panel: ScorePanel,
    curves: np.ndarray,
    p: int,
    start: int,
    method: str,
    theta,
    k_proj,
    alpha_levels,
    mode: str = "gaussian",
):
    """Refit on ``curves[:j]`` and forecast day ``j`` for every ``j >= start``.

    Returns ``{alpha: (n_test, r) quantile curves}``.
    """
    N = panel.N
    out = {a: np.empty((N - start, panel.basis.grid.r)) for a in alpha_levels}
    for idx, j in enumerate(range(start, N)):
        res = fit_panel(panel.head(j), p, method, theta, k_proj)
        last = panel.scores[j - p : j][::-1]
        sf = _fc.forecast_sigma(res, last)
        for a in alpha_levels:
            out[a][idx] = _fc.quantile_curve(sf, panel.basis, a, mode).values
    return out


def train_size(N: int, split: float) -> int:
    if not 0 < split < 1:
        raise ValueError("split must lie in (0, 1)")
    n = int(math.floor(split * N))
    return max(1, min(n, N - 1))


def cv_errors(
    curves,
    basis: EigenBasis,
    p: int,
    alpha_level: float,
    theta_grid,
    K: int,
    method: str = "tikhonov",
    k_proj=None,
    split: float = 0.8,
    mode: str = "gaussian",
    orientation: str = "realized",
) -> np.ndarray:
    """CV error for every θ in the grid; failing fits score +inf."""
    curves = np.asarray(curves, dtype=np.float64)
    panel = compute_scores(curves, basis, K)
    start = train_size(panel.N, split)
    errs = np.empty(len(theta_grid))
    for i, th in enumerate(theta_grid):
        try:
            q = expanding_forecasts(panel, curves, p, start, method, float(th), k_proj, [alpha_level], mode)
        except OparchError as exc:
            logger.info("theta=%g failed during CV: %s", th, exc)
            errs[i] = math.inf
            continue
        errs[i] = quantile_loss(q[alpha_level], curves[start:], alpha_level, orientation)
    return errs


def cross_validate_theta(
    curves,
    basis: EigenBasis,
    p: int,
    alpha_level: float = 0.05,
    theta_grid=None,
    tve: float = 0.9,
    K: int | None = None,
    method: str = "tikhonov",
    k_proj=None,
    split: float = 0.8,
    mode: str = "gaussian",
    orientation: str = "realized",
) -> float:
    """θ minimizing the one-step expanding-window CV error; ties go to the larger θ."""
    curves = np.asarray(curves, dtype=np.float64)
    if curves.shape[0] < 50:
        raise ValueError("cross-validation needs at least 50 curves")
    if K is None:
        K = select_K_tve(curves, basis, tve)
    if theta_grid is None:
        start = train_size(curves.shape[0], split)
        theta_grid = default_theta_grid(compute_scores(curves[:start], basis, K), p)
    grid = np.asarray(theta_grid, dtype=np.float64)
    if grid.size == 0 or np.any(grid <= 0):
        raise ValueError("theta grid must be non-empty and positive")
    errs = cv_errors(curves, basis, p, alpha_level, grid, K, method, k_proj, split, mode, orientation)
    if not np.any(np.isfinite(errs)):
        raise OparchError("every theta in the grid failed during cross-validation")
    best = np.min(errs)
    ties = np.flatnonzero(errs == best)
    return float(np.max(grid[ties]))


# ---------------------------------------------------------------------------
# error metrics
# ---------------------------------------------------------------------------


def _pad(a: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(a.shape[:-1] + (n,))
    out[..., : a.shape[-1]] = a
    return out


def replicate_errors(true, fit_res: FitResult) -> tuple[float, float]:
    """Relative errors of one fit (raw estimates) against true parameters."""
    if fit_res.p != true.p:
        raise ValueError(f"fit order {fit_res.p} differs from true order {true.p}")
    n = max(true.K_model, fit_res.K)
    a_true = _pad(true.alpha, n)
    a_hat = _pad(fit_res.alpha_raw, n)
    norms = np.linalg.norm(a_true, axis=1)
    if np.any(norms == 0):
        raise ZeroNorm("a true ARCH operator is identically zero")
    e_alpha = float(np.mean(np.linalg.norm(a_true - a_hat, axis=1) / norms))
    d_true = np.diag(_pad(true.delta, n))
    if fit_res.delta_matrix is not None:
        d_hat = np.zeros((n, n))
        d_hat[: fit_res.K, : fit_res.K] = fit_res.delta_matrix
    else:
        d_hat = np.diag(_pad(fit_res.delta_raw, n))
    e_delta = float(np.linalg.norm(d_true - d_hat) / np.linalg.norm(d_true))
    return e_alpha, e_delta


def relative_errors(true, fits) -> tuple[float, float]:
    """Mean relative errors ``(e_alpha, e_delta)`` over replicate fits."""
    errs = np.array([replicate_errors(true, f) for f in fits])
    return float(errs[:, 0].mean()), float(errs[:, 1].mean())
