"""CCC-op-ARCH(p) parameters, stationarity diagnostics and population moments.

In the eigenbasis ``(a_l, e_l)`` of the innovation covariance the volatility
operator is diagonal, ``Sigma_k = sum_l Z_{k,l} e_l (x) e_l`` with

    Z_{k,l} = d_l + sum_i a_{i,l} <X_{k-i}, e_l>^2 .
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import FourthMomentDiverges, InvalidParams, NonStationaryMean
from .function_space import EigenBasis, make_basis

DEFAULT_R = 50


@dataclass(frozen=True, eq=False)
class CccParams:
    """Model order, intercept ``d`` and ARCH coefficients ``alpha`` (p x K)."""

    p: int
    basis: EigenBasis
    delta: np.ndarray
    alpha: np.ndarray
    kernel: str = ""
    # Delta's coefficients beyond K_model, as a multiple of the innovation
    # eigenvalues.  Only the grid engine uses it.
    delta_tail: float = 0.0

    def __post_init__(self):
        d = np.atleast_1d(np.asarray(self.delta, dtype=np.float64)).copy()
        a = np.atleast_2d(np.asarray(self.alpha, dtype=np.float64)).copy()
        d.flags.writeable = False
        a.flags.writeable = False
        object.__setattr__(self, "delta", d)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "p", int(self.p))
        if not self.kernel:
            object.__setattr__(self, "kernel", self.basis.kernel_name)

    @property
    def K_model(self) -> int:
        return int(self.delta.size)

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.basis.eigenvalues[: self.K_model]

    @classmethod
    def from_arrays(cls, kernel: str, delta, alpha, r: int = DEFAULT_R, delta_tail: float = 0.0, check=True):
        alpha = np.atleast_2d(np.asarray(alpha, dtype=np.float64))
        basis = make_basis(kernel, r)
        params = cls(alpha.shape[0], basis, delta, alpha, kernel=kernel, delta_tail=delta_tail)
        if check:
            errs = validate(params)
            if errs:
                raise InvalidParams(errs)
        return params

    def to_dict(self) -> dict:
        out = {
            "p": self.p,
            "kernel": self.kernel,
            "K_model": self.K_model,
            "delta": self.delta.tolist(),
            "alpha": self.alpha.tolist(),
            "r": self.basis.grid.r,
        }
        if self.delta_tail:
            out["delta_tail"] = self.delta_tail
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> CccParams:
        try:
            params = cls.from_arrays(
                obj["kernel"],
                obj["delta"],
                obj["alpha"],
                r=int(obj.get("r", DEFAULT_R)),
                delta_tail=float(obj.get("delta_tail", 0.0)),
                check=False,
            )
        except KeyError as exc:
            raise InvalidParams([f"missing field {exc.args[0]!r}"]) from None
        errs = validate(params)
        if "p" in obj and int(obj["p"]) != params.p:
            errs.append(f"p={obj['p']} does not match {params.p} alpha rows")
        if "K_model" in obj and int(obj["K_model"]) != params.K_model:
            errs.append(f"K_model={obj['K_model']} does not match {params.K_model} delta entries")
        if errs:
            raise InvalidParams(errs)
        return params

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> CccParams:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def validate(params: CccParams) -> list[str]:
    """List every violated parameter constraint; empty when valid."""
    errs = []
    d, a = params.delta, params.alpha
    if params.p < 1:
        errs.append("order p must be a positive integer")
    if d.ndim != 1 or d.size < 1:
        errs.append("delta must be a non-empty vector")
    if a.shape != (params.p, d.size):
        errs.append(f"alpha must have shape (p, K_model)=({params.p}, {d.size}), got {a.shape}")
    if d.size > params.basis.size:
        errs.append(f"K_model={d.size} exceeds basis size {params.basis.size}")
    if not (np.all(np.isfinite(d)) and np.all(np.isfinite(a))):
        errs.append("coefficients must be finite")
    if np.any(d <= 0):
        errs.append("Δ not positive definite: every d_l must be > 0")
    if np.any(a < 0):
        errs.append("ARCH coefficients must be non-negative")
    if a.shape[0] >= 1 and a.ndim == 2 and not np.any(a[-1] > 0):
        errs.append("α_p ≠ 0 violated: last ARCH row is identically zero")
    if params.delta_tail < 0:
        errs.append("delta_tail must be non-negative")
    return errs


@dataclass
class StationarityReport:
    margin: float
    satisfied: bool
    lyapunov_estimate: float | None = None
    lyapunov_se: float | None = None


def alpha_norm_bound(params: CccParams) -> float:
    """Sum over lags of the component operator norms ``sup_l a_{i,l}``."""
    return float(np.sum(np.max(params.alpha, axis=1)))


def sufficient_margin_value(norm_bound: float, e_sq: float, p: int) -> float:
    x = norm_bound * e_sq
    return float(x * sum(l * x ** (p - l) for l in range(1, p + 1)))


def sufficient_stationarity_margin(params: CccParams) -> StationarityReport:
    """Crude sufficient condition for a strictly stationary solution.

    ``s = x * sum_{l=1}^p l * x^(p-l)`` with ``x = ||alpha|| E||eps||^2``;
    the condition holds iff ``s < 1``.
    """
    s = sufficient_margin_value(alpha_norm_bound(params), params.basis.expected_sq_norm, params.p)
    return StationarityReport(margin=s, satisfied=bool(s < 1.0))


def lyapunov_mc(params: CccParams, steps: int = 2000, reps: int = 50, seed: int = 0):
    """Monte-Carlo estimate of the top Lyapunov exponent.

    Replicate ``b`` uses ``default_rng(seed + b)``.  For each frequency the
    random companion matrices (top row ``a_{i,l} <eps_k, e_l>^2``, ones on the
    subdiagonal) are multiplied out; the estimate is
    ``max_l log ||P_l|| / steps`` averaged over replicates.

    Returns ``(gamma_hat, standard_error)``.
    """
    if steps < 100 or reps < 10:
        raise ValueError("lyapunov_mc needs steps >= 100 and reps >= 10")
    lam = params.eigenvalues
    K = params.K_model
    vals = np.empty(reps)
    for b in range(reps):
        rng = np.random.default_rng(seed + b)
        eps2 = rng.standard_normal((steps, K)) ** 2 * lam
        logs = kernels.lyapunov_log_norms(eps2, params.alpha)
        vals[b] = np.max(logs) / steps
    if np.all(np.isneginf(vals)):
        return -math.inf, 0.0
    gamma = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / np.sqrt(reps)) if np.all(np.isfinite(vals)) else math.inf
    return gamma, se


def stationarity_report(params: CccParams, steps=2000, reps=50, seed=0) -> StationarityReport:
    rep = sufficient_stationarity_margin(params)
    rep.lyapunov_estimate, rep.lyapunov_se = lyapunov_mc(params, steps, reps, seed)
    return rep


def mean_sigma(params: CccParams) -> np.ndarray:
    """Stationary mean of the volatility coefficients, ``d_l / (1 - a_l sum_i a_{i,l})``."""
    denom = 1.0 - params.eigenvalues * params.alpha.sum(axis=0)
    if np.any(denom <= 0):
        bad = np.flatnonzero(denom <= 0) + 1
        raise NonStationaryMean(f"frequencies {bad.tolist()} have a_l * sum_i a_il >= 1")
    return params.delta / denom


def mean_sigma_fixed_point(params: CccParams, mu: np.ndarray) -> np.ndarray:
    """``Delta + sum_i alpha_i(C_X)`` with ``C_X = mu * C_eps``, coordinatewise."""
    cx = mu * params.eigenvalues
    return params.delta + params.alpha.sum(axis=0) * cx


def population_cov_diag(params: CccParams) -> np.ndarray:
    """Variance of the squared scores ``<X, e_l>^2`` for p = 1 and Gaussian noise."""
    if params.p != 1:
        raise ValueError("closed-form squared-score variance is only available for p = 1")
    lam = params.eigenvalues
    a1 = params.alpha[0]
    d = params.delta
    la = lam * a1
    if np.any(3.0 * la**2 >= 1.0):
        bad = np.flatnonzero(3.0 * la**2 >= 1.0) + 1
        raise FourthMomentDiverges(f"frequencies {bad.tolist()} violate 3 a_l^2 a_1ll^2 < 1")
    return lam**2 * 2.0 * d**2 / ((1.0 - la) ** 2 * (1.0 - 3.0 * la**2))


def second_moment_z(params: CccParams) -> np.ndarray:
    """``E Z_l^2`` for p = 1 Gaussian innovations."""
    lam = params.eigenvalues
    la = lam * params.alpha[0]
    d = params.delta
    return d**2 * (1.0 + la) / ((1.0 - la) * (1.0 - 3.0 * la**2))
