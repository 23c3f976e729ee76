"""Sample paths of CCC-op-ARCH(p) processes.

Two engines share one RNG discipline so that equal seeds give comparable
paths:

* ``simulate_spectral`` iterates the scalar recursion per frequency and
  assembles curves in the eigenbasis.
* ``simulate_grid`` materializes ``Sigma_k`` as an ``r x r`` kernel each step
  and applies its operator square root to an innovation curve.

Innovations are drawn either by truncated Karhunen-Loeve expansion (``"kl"``,
one ``(T, K_model)`` block of standard normals) or by a Cholesky factor of
the full innovation kernel (``"cholesky"``, one ``(T, r)`` block).  ``T``
includes ``p`` pre-sample steps and the burn-in.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import FormatError, InvalidParams, NumericalBlowup
from .function_space import Grid, cholesky_factor, make_kernel, operator_sqrt, KernelOperator
from .model import CccParams, validate


@dataclass
class SimulatedSample:
    grid: Grid
    curves: np.ndarray  # (n, r)
    z_path: np.ndarray | None = None  # (n, K_model) true Z_{k,l}
    eps_scores: np.ndarray | None = None  # (n, K_model) true <eps_k, e_l>
    seed: int | None = None
    burn_in: int = 0
    engine: str = ""

    @property
    def n(self) -> int:
        return int(self.curves.shape[0])


def _z_init(params: CccParams) -> np.ndarray:
    denom = 1.0 - params.eigenvalues * params.alpha.sum(axis=0)
    safe = np.where(denom > 0, denom, 1.0)
    return np.where(denom > 0, params.delta / safe, params.delta)


def _check(params: CccParams, n: int, burn_in: int) -> None:
    errs = validate(params)
    if errs:
        raise InvalidParams(errs)
    if n < params.p:
        raise ValueError(f"n={n} must be at least p={params.p}")
    if burn_in < 0:
        raise ValueError("burn_in must be non-negative")


def _draw_innovations(params: CccParams, T: int, rng, innovations: str):
    """Innovation curves ``(T, r)`` and their scores ``(T, K_model)``."""
    basis = params.basis
    K = params.K_model
    if innovations == "kl":
        scores = rng.standard_normal((T, K)) * np.sqrt(params.eigenvalues)
        curves = basis.synthesize(scores)
    elif innovations == "cholesky":
        L = cholesky_factor(make_kernel(params.kernel, basis.grid.r))
        curves = rng.standard_normal((T, basis.grid.r)) @ L.T
        scores = basis.scores(curves, K)
    else:
        raise ValueError(f"unknown innovation mode {innovations!r}")
    return curves, scores


def simulate_spectral(
    params: CccParams,
    n: int,
    burn_in: int = 100,
    seed: int | None = None,
    innovations: str = "kl",
) -> SimulatedSample:
    """Simulate via the per-frequency recursion; curves live in span(e_1..e_K)."""
    _check(params, n, burn_in)
    rng = np.random.default_rng(seed)
    p = params.p
    T = p + burn_in + n
    _, eps = _draw_innovations(params, T, rng, innovations)
    z, x, blow = kernels.z_recursion(params.delta, params.alpha, eps, _z_init(params))
    if blow >= 0:
        raise NumericalBlowup(blow - p)
    keep = slice(T - n, T)
    curves = params.basis.synthesize(x[keep])
    return SimulatedSample(
        grid=params.basis.grid,
        curves=curves,
        z_path=z[keep].copy(),
        eps_scores=eps[keep].copy(),
        seed=seed,
        burn_in=burn_in,
        engine="spectral",
    )


def simulate_grid(
    params: CccParams,
    n: int,
    burn_in: int = 100,
    seed: int | None = None,
    innovations: str = "cholesky",
) -> SimulatedSample:
    """Simulate with ``X_k = Sigma_k^{1/2}(eps_k)`` on the grid.

    ``Sigma_k`` carries ``Z_{k,l}`` on the first ``K_model`` eigenfunctions and
    ``delta_tail * a_l`` on the remaining ones.
    """
    _check(params, n, burn_in)
    rng = np.random.default_rng(seed)
    basis = params.basis
    grid = basis.grid
    r = grid.r
    p, K = params.p, params.K_model
    T = p + burn_in + n
    eps_curves, eps = _draw_innovations(params, T, rng, innovations)

    E = basis.eigenfunctions[:K]
    tail = np.zeros((r, r))
    if params.delta_tail > 0 and basis.size > K:
        Et = basis.eigenfunctions[K:]
        tail = (Et.T * (params.delta_tail * basis.eigenvalues[K:])) @ Et

    X = np.empty((T, r))
    Zc = np.empty((T, K))
    z0 = _z_init(params)
    for t in range(T):
        if t < p:
            zt = z0
        else:
            past = basis.scores(X[t - p : t][::-1], K)  # row i = lag i+1
            zt = params.delta + np.sum(params.alpha * past**2, axis=0)
        if not np.all(zt <= kernels.BLOWUP_LIMIT):
            raise NumericalBlowup(t - p)
        Zc[t] = zt
        sigma = KernelOperator(grid, symmetrize((E.T * zt) @ E + tail))
        root = operator_sqrt(sigma)
        X[t] = root.matrix @ eps_curves[t] / r
    keep = slice(T - n, T)
    return SimulatedSample(
        grid=grid,
        curves=X[keep].copy(),
        z_path=Zc[keep].copy(),
        eps_scores=eps[keep].copy(),
        seed=seed,
        burn_in=burn_in,
        engine="grid",
    )


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def simulate(params: CccParams, n: int, burn_in: int = 100, seed=None, engine="spectral", innovations=None):
    if engine == "spectral":
        return simulate_spectral(params, n, burn_in, seed, innovations or "kl")
    if engine == "grid":
        return simulate_grid(params, n, burn_in, seed, innovations or "cholesky")
    raise ValueError(f"unknown engine {engine!r}")


# ---------------------------------------------------------------------------
# CSV formats
# ---------------------------------------------------------------------------


def write_curves(path, curves: np.ndarray, grid: Grid, days=None) -> None:
    """Long-format sample CSV with columns ``k,t,value`` (``k`` starts at 1)."""
    curves = np.asarray(curves)
    header = ["k", "t", "value"] if days is None else ["k", "day", "t", "value"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        ts = [format(t, ".17g") for t in grid.nodes]
        for k, row in enumerate(curves, start=1):
            for t, v in zip(ts, row):
                if days is None:
                    w.writerow([k, t, format(v, ".17g")])
                else:
                    w.writerow([k, days[k - 1], t, format(v, ".17g")])


def read_curves(path) -> tuple[np.ndarray, Grid]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"k", "t", "value"} <= set(reader.fieldnames):
            raise FormatError(f"{path}: expected columns k,t,value")
        data: dict[int, list[tuple[float, float]]] = {}
        for row in reader:
            data.setdefault(int(row["k"]), []).append((float(row["t"]), float(row["value"])))
    if not data:
        raise FormatError(f"{path}: no rows")
    ks = sorted(data)
    if ks != list(range(ks[0], ks[0] + len(ks))):
        raise FormatError(f"{path}: curve indices are not consecutive")
    r = len(data[ks[0]])
    grid = Grid(r)
    curves = np.empty((len(ks), r))
    for i, k in enumerate(ks):
        pts = sorted(data[k])
        if len(pts) != r:
            raise FormatError(f"{path}: curve {k} has {len(pts)} points, expected {r}")
        t = np.array([q[0] for q in pts])
        if not np.allclose(t, grid.nodes, atol=1e-9):
            raise FormatError(f"{path}: curve {k} is not on the midpoint grid")
        curves[i] = [q[1] for q in pts]
    return curves, grid


def write_z_path(path, z_path: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "ell", "z"])
        for k, row in enumerate(z_path, start=1):
            for ell, z in enumerate(row, start=1):
                w.writerow([k, ell, format(z, ".17g")])


def read_z_path(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [(int(r["k"]), int(r["ell"]), float(r["z"])) for r in csv.DictReader(fh)]
    n = max(r[0] for r in rows)
    K = max(r[1] for r in rows)
    out = np.full((n, K), np.nan)
    for k, ell, z in rows:
        out[k - 1, ell - 1] = z
    return out
