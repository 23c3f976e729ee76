"""Discretized L2[0, 1]: grids, kernels, eigenbases, square roots, inverses.

Functions live on a midpoint grid ``t_i = (2i - 1) / (2r)`` with flat
quadrature weights ``1/r``.  An integral operator with kernel ``C`` acts on a
grid function ``f`` as ``(C @ f) / r``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import linalg

from .errors import CholeskyFailure, DegenerateKernel, FormatError, GridMismatch, NonConvergence

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class Grid:
    """Midpoint grid with ``r`` nodes on [0, 1]."""

    r: int

    def __post_init__(self):
        if int(self.r) != self.r or self.r < 1:
            raise ValueError(f"grid size must be a positive integer, got {self.r!r}")

    @cached_property
    def nodes(self) -> np.ndarray:
        t = (2.0 * np.arange(1, self.r + 1) - 1.0) / (2.0 * self.r)
        t.flags.writeable = False
        return t

    @property
    def weight(self) -> float:
        return 1.0 / self.r

    def integrate(self, values) -> float | np.ndarray:
        """Quadrature along the last axis."""
        return np.sum(values, axis=-1) / self.r


@dataclass(frozen=True)
class GridFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.grid.r,):
            raise GridMismatch(f"expected {self.grid.r} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __add__(self, other: GridFunction) -> GridFunction:
        _check_same_grid(self.grid, other.grid)
        return GridFunction(self.grid, self.values + other.values)

    def __mul__(self, c: float) -> GridFunction:
        return GridFunction(self.grid, self.values * float(c))

    __rmul__ = __mul__


def _check_same_grid(g1: Grid, g2: Grid) -> None:
    if g1 != g2:
        raise GridMismatch(f"grid of size {g1.r} does not match grid of size {g2.r}")


def inner_product(f: GridFunction, g: GridFunction) -> float:
    _check_same_grid(f.grid, g.grid)
    return float(np.dot(f.values, g.values) / f.grid.r)


def norm(f: GridFunction) -> float:
    return float(np.sqrt(inner_product(f, f)))


@dataclass(frozen=True, eq=False)
class KernelOperator:
    """Integral operator given by its kernel values ``C(t_i, t_j)``.

    ``diagonal_jump`` is the drop in the slope ``dC/ds`` as ``s`` crosses
    ``t`` (1 for both ``min(t, s)`` and ``exp(-|t - s|/2)``).  Plain midpoint
    quadrature misses the kink and biases every eigenvalue up by about
    ``jump / (12 r^2)``; :meth:`operator_matrix` subtracts that from the
    diagonal.  Point covariances (``matrix``) are left untouched.
    """

    grid: Grid
    matrix: np.ndarray
    name: str = ""
    diagonal_jump: float = 0.0

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        r = self.grid.r
        if m.shape != (r, r):
            raise GridMismatch(f"kernel must be {r}x{r}, got {m.shape}")
        scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
        if np.max(np.abs(m - m.T)) > SYMMETRY_TOL * scale:
            raise ValueError("kernel matrix is not symmetric")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    def operator_matrix(self) -> np.ndarray:
        """Kernel matrix corrected for the diagonal kink, used for spectra."""
        if not self.diagonal_jump:
            return self.matrix
        r = self.grid.r
        return self.matrix - (self.diagonal_jump / (12.0 * r)) * np.eye(r)

    def apply(self, f: GridFunction) -> GridFunction:
        _check_same_grid(self.grid, f.grid)
        return GridFunction(self.grid, self.operator_matrix() @ f.values / self.grid.r)

    def compose(self, other: KernelOperator) -> KernelOperator:
        _check_same_grid(self.grid, other.grid)
        m = self.operator_matrix() @ other.operator_matrix() / self.grid.r
        return KernelOperator(self.grid, 0.5 * (m + m.T))

    def trace(self) -> float:
        """Nuclear-norm integral of the kernel diagonal."""
        return float(np.trace(self.matrix) / self.grid.r)


def bm_kernel(grid: Grid) -> KernelOperator:
    t = grid.nodes
    return KernelOperator(grid, np.minimum.outer(t, t), name="bm", diagonal_jump=1.0)


def ou_kernel(grid: Grid) -> KernelOperator:
    t = grid.nodes
    return KernelOperator(grid, np.exp(-np.abs(np.subtract.outer(t, t)) / 2.0), name="ou", diagonal_jump=1.0)


KERNELS = {"bm": bm_kernel, "ou": ou_kernel}


def make_kernel(name: str, r: int) -> KernelOperator:
    try:
        return KERNELS[name](Grid(r))
    except KeyError:
        raise ValueError(f"unknown kernel {name!r}; expected one of {sorted(KERNELS)}") from None


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """Leading eigenpairs of a covariance operator.

    ``eigenfunctions`` is a ``(count, r)`` array, row ``j`` holding ``e_j`` on
    the grid, orthonormal under the quadrature inner product.
    """

    grid: Grid
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    kernel_name: str = ""
    kernel_trace: float = float("nan")

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=np.float64)
        ef = np.asarray(self.eigenfunctions, dtype=np.float64)
        if ef.shape != (lam.size, self.grid.r):
            raise GridMismatch("eigenfunction array does not match eigenvalues/grid")
        if np.any(lam <= 0) or np.any(np.diff(lam) > 0):
            raise ValueError("eigenvalues must be positive and non-increasing")
        for a in (lam, ef):
            a.flags.writeable = False
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "eigenfunctions", ef)

    @property
    def size(self) -> int:
        return int(self.eigenvalues.size)

    def function(self, j: int) -> GridFunction:
        """Eigenfunction ``e_{j+1}`` (zero-based index)."""
        return GridFunction(self.grid, self.eigenfunctions[j])

    def scores(self, curves, K: int | None = None) -> np.ndarray:
        """``<X_k, e_j>`` for an ``(N, r)`` array of curves."""
        E = self.eigenfunctions if K is None else self.eigenfunctions[:K]
        return np.asarray(curves, dtype=np.float64) @ E.T / self.grid.r

    def synthesize(self, scores) -> np.ndarray:
        """Curves from basis coordinates, inverse of :meth:`scores` on the span."""
        scores = np.asarray(scores, dtype=np.float64)
        return scores @ self.eigenfunctions[: scores.shape[-1]]

    def diagonal_kernel(self, coeffs) -> KernelOperator:
        """Kernel of ``sum_j c_j e_j (x) e_j``."""
        c = np.asarray(coeffs, dtype=np.float64)
        E = self.eigenfunctions[: c.size]
        return KernelOperator(self.grid, (E.T * c) @ E)

    def coordinates(self, kernel: KernelOperator, K: int | None = None) -> np.ndarray:
        """Matrix ``<A e_j, e_i>`` of a kernel operator in this basis."""
        _check_same_grid(self.grid, kernel.grid)
        E = self.eigenfunctions if K is None else self.eigenfunctions[:K]
        return E @ kernel.matrix @ E.T / self.grid.r**2

    @cached_property
    def expected_sq_norm(self) -> float:
        """``E||eps||^2 = int C(t, t) dt``; the eigenvalue sum if no kernel trace is known."""
        if self.kernel_name == "bm":
            return 0.5
        if np.isfinite(self.kernel_trace):
            return float(self.kernel_trace)
        return float(np.sum(self.eigenvalues))


def _sym_eigh(m: np.ndarray):
    try:
        w, v = linalg.eigh(m)
    except linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NonConvergence(f"symmetric eigensolver failed: {exc}") from exc
    return w, v


def eigendecompose(kernel: KernelOperator, count: int | None = None) -> EigenBasis:
    """Leading ``count`` eigenpairs of the integral operator.

    Eigenfunctions are sign-normalized so that their integral is non-negative
    (ties resolved by a positive value at the first node).
    """
    r = kernel.grid.r
    if count is None:
        count = r
    if not 1 <= count <= r:
        raise ValueError(f"count must lie in [1, {r}], got {count}")
    w, v = _sym_eigh(kernel.operator_matrix() / r)
    order = np.argsort(-w, kind="stable")
    w = w[order]
    v = v[:, order]
    w = np.where(w > 0, w, 0.0)
    # eigenvalues at roundoff level are not trustworthy as "positive"
    floor = 1e-13 * max(w[0], 0.0)
    n_pos = int(np.sum(w > floor))
    if n_pos < count:
        raise DegenerateKernel(f"only {n_pos} positive eigenvalues, {count} requested")
    w = w[:count]
    E = v[:, :count].T * np.sqrt(r)
    integrals = E.sum(axis=1) / r
    sign = np.where(np.abs(integrals) > 1e-10, np.sign(integrals), np.sign(E[:, 0]))
    sign[sign == 0] = 1.0
    E *= sign[:, None]
    return EigenBasis(kernel.grid, w, E, kernel_name=kernel.name, kernel_trace=kernel.trace())


def positive_count(kernel: KernelOperator) -> int:
    w = np.linalg.eigvalsh(kernel.operator_matrix() / kernel.grid.r)
    return int(np.sum(w > 1e-13 * max(w.max(), 0.0)))


def make_basis(name: str, r: int, count: int | None = None) -> EigenBasis:
    kernel = make_kernel(name, r)
    if count is None:
        count = positive_count(kernel)
    return eigendecompose(kernel, count)


def operator_sqrt(kernel: KernelOperator) -> KernelOperator:
    """Spectral square root: negative eigenvalues clamped to zero first."""
    r = kernel.grid.r
    w, v = _sym_eigh(kernel.operator_matrix() / r)
    root = np.sqrt(np.clip(w, 0.0, None))
    m = r * (v * root) @ v.T
    return KernelOperator(kernel.grid, 0.5 * (m + m.T))


def tikhonov_scales(basis: EigenBasis, theta: float, K: int) -> np.ndarray:
    """Diagonal of ``(C_eps + theta I)^-1`` followed by projection on ``e_1..e_K``."""
    if K > basis.size:
        raise ValueError(f"K={K} exceeds basis size {basis.size}")
    if theta < 0:
        raise ValueError("theta must be non-negative")
    out = np.zeros(basis.size)
    out[:K] = 1.0 / (basis.eigenvalues[:K] + theta)
    return out


def tikhonov_apply_right(coords, basis: EigenBasis, theta: float, K: int) -> np.ndarray:
    """Compose an operator (in basis coordinates) on the right with the
    regularized inverse of ``C_eps`` projected onto the first ``K`` directions.

    ``coords`` has one column per basis function; column ``j`` is scaled by
    ``1/(a_j + theta)`` for ``j < K`` and zeroed otherwise.
    """
    if theta <= 0:
        raise ValueError("theta must be positive")
    coords = np.asarray(coords, dtype=np.float64)
    scales = tikhonov_scales(basis, theta, K)
    n = coords.shape[-1]
    if n > basis.size:
        raise ValueError("operator has more coordinates than the basis")
    return coords * scales[:n]


def sample_gaussian(kernel: KernelOperator, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Centered Gaussian curve(s) with covariance kernel ``kernel``.

    Returns ``(r,)`` values, or ``(size, r)`` when ``size`` is given.
    """
    L = cholesky_factor(kernel)
    shape = (kernel.grid.r,) if size is None else (size, kernel.grid.r)
    z = rng.standard_normal(shape)
    return z @ L.T


def cholesky_factor(kernel: KernelOperator, retries: int = 3) -> np.ndarray:
    m = kernel.matrix
    tr = kernel.trace()
    if tr == 0.0 and not np.any(m):
        return np.zeros_like(m)
    jitter = 1e-10 * abs(tr)
    eye = np.eye(kernel.grid.r)
    for attempt in range(retries + 1):
        try:
            return np.linalg.cholesky(m + jitter * eye)
        except np.linalg.LinAlgError:
            logger.debug("cholesky failed with jitter %.3g (attempt %d)", jitter, attempt)
            jitter *= 10.0
    raise CholeskyFailure(f"kernel not positive definite after {retries} jitter escalations")


# ---------------------------------------------------------------------------
# CSV formats
# ---------------------------------------------------------------------------


def write_grid_function(path, f: GridFunction) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "value"])
        for t, v in zip(f.grid.nodes, f.values):
            w.writerow([format(t, ".17g"), format(v, ".17g")])


def read_grid_function(path) -> GridFunction:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(rows[0]) < {"t", "value"}:
        raise FormatError(f"{path}: expected header t,value")
    values = np.array([float(row["value"]) for row in rows])
    grid = Grid(len(values))
    t = np.array([float(row["t"]) for row in rows])
    if not np.allclose(t, grid.nodes, atol=1e-9):
        raise FormatError(f"{path}: t column is not the midpoint grid of size {grid.r}")
    return GridFunction(grid, values)


def write_kernel(path, kernel: KernelOperator) -> None:
    np.savetxt(path, kernel.matrix, delimiter=",", fmt="%.17g")


def read_kernel(path) -> KernelOperator:
    m = np.loadtxt(Path(path), delimiter=",", ndmin=2)
    if m.shape[0] != m.shape[1]:
        raise FormatError(f"{path}: kernel CSV must be square, got {m.shape}")
    return KernelOperator(Grid(m.shape[0]), m)
