"""Hot inner loops.

Each kernel exists twice: a numba ``@njit`` version and a pure-numpy fallback
with identical semantics.  The active backend is chosen at import time; set
``OPARCH_DISABLE_NUMBA=1`` to force the numpy path (or run without numba
installed).  Random draws never happen inside a kernel, so both backends see
the same inputs and produce the same numbers up to floating-point rounding.
"""

from __future__ import annotations

import os

import numpy as np

BLOWUP_LIMIT = 1e300


def _numba_requested() -> bool:
    flag = os.environ.get("OPARCH_DISABLE_NUMBA", "").strip().lower()
    return flag not in ("1", "true", "yes", "on")


try:
    if not _numba_requested():
        raise ImportError("numba disabled by OPARCH_DISABLE_NUMBA")
    import numba
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


BACKEND = "numba" if HAVE_NUMBA else "numpy"


def set_threads(n: int | None) -> None:
    """Cap numba's thread pool (no-op on the numpy backend)."""
    if HAVE_NUMBA and n:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


# ---------------------------------------------------------------------------
# volatility recursion  Z_k = d + sum_i a_i x_{k-i}^2,  x_k = sqrt(Z_k) eps_k
# ---------------------------------------------------------------------------


@njit(cache=True)
def _z_recursion_jit(d, alpha, eps, z_init):
    T, K = eps.shape
    p = alpha.shape[0]
    z = np.empty((T, K))
    x = np.empty((T, K))
    for t in range(T):
        if t < p:
            for l in range(K):
                z[t, l] = z_init[l]
        else:
            for l in range(K):
                acc = d[l]
                for i in range(p):
                    xv = x[t - 1 - i, l]
                    acc += alpha[i, l] * xv * xv
                z[t, l] = acc
        for l in range(K):
            zv = z[t, l]
            if not (zv <= BLOWUP_LIMIT):
                return z, x, t
            x[t, l] = np.sqrt(zv) * eps[t, l]
    return z, x, -1


def _z_recursion_numpy(d, alpha, eps, z_init):
    T, K = eps.shape
    p = alpha.shape[0]
    z = np.empty((T, K))
    x = np.empty((T, K))
    for t in range(T):
        if t < p:
            z[t] = z_init
        else:
            # same summation order as the jitted loop
            acc = d.copy()
            for i in range(p):
                acc += alpha[i] * x[t - 1 - i] * x[t - 1 - i]
            z[t] = acc
        if not np.all(z[t] <= BLOWUP_LIMIT):
            return z, x, t
        x[t] = np.sqrt(z[t]) * eps[t]
    return z, x, -1


def z_recursion(d, alpha, eps, z_init):
    """Run the per-frequency volatility recursion.

    Parameters
    ----------
    d : (K,) intercept coefficients.
    alpha : (p, K) ARCH coefficients, row ``i`` is lag ``i + 1``.
    eps : (T, K) innovation scores; the first ``p`` rows are pre-sample.
    z_init : (K,) value of Z on the pre-sample rows.

    Returns
    -------
    z, x : (T, K) volatility path and scores.
    blowup : first step whose Z exceeded 1e300 (or went non-finite), -1 if none.
    """
    args = (
        np.ascontiguousarray(d, dtype=np.float64),
        np.ascontiguousarray(alpha, dtype=np.float64),
        np.ascontiguousarray(eps, dtype=np.float64),
        np.ascontiguousarray(z_init, dtype=np.float64),
    )
    if HAVE_NUMBA:
        z, x, t = _z_recursion_jit(*args)
    else:
        z, x, t = _z_recursion_numpy(*args)
    return z, x, int(t)


# ---------------------------------------------------------------------------
# Lyapunov products of random companion matrices
# ---------------------------------------------------------------------------


@njit(cache=True)
def _lyapunov_jit(eps2, alpha, renorm):
    steps, K = eps2.shape
    p = alpha.shape[0]
    out = np.empty(K)
    P = np.empty((p, p))
    row = np.empty(p)
    for l in range(K):
        for i in range(p):
            for j in range(p):
                P[i, j] = 1.0 if i == j else 0.0
        logacc = 0.0
        dead = False
        for k in range(steps):
            e2 = eps2[k, l]
            for j in range(p):
                s = 0.0
                for i in range(p):
                    s += alpha[i, l] * e2 * P[i, j]
                row[j] = s
            for i in range(p - 1, 0, -1):
                for j in range(p):
                    P[i, j] = P[i - 1, j]
            for j in range(p):
                P[0, j] = row[j]
            if (k + 1) % renorm == 0 or k == steps - 1:
                nrm = 0.0
                for i in range(p):
                    for j in range(p):
                        nrm += P[i, j] * P[i, j]
                nrm = np.sqrt(nrm)
                if nrm == 0.0:
                    dead = True
                    break
                logacc += np.log(nrm)
                for i in range(p):
                    for j in range(p):
                        P[i, j] /= nrm
        if dead:
            out[l] = -np.inf
        else:
            out[l] = logacc + np.log(np.linalg.norm(P, 2))
    return out


def _lyapunov_numpy(eps2, alpha, renorm):
    steps, K = eps2.shape
    p = alpha.shape[0]
    P = np.broadcast_to(np.eye(p), (K, p, p)).copy()
    logacc = np.zeros(K)
    dead = np.zeros(K, dtype=bool)
    coef = alpha.T  # (K, p)
    for k in range(steps):
        row = np.einsum("li,lij->lj", coef * eps2[k][:, None], P)
        P[:, 1:, :] = P[:, :-1, :].copy()
        P[:, 0, :] = row
        if (k + 1) % renorm == 0 or k == steps - 1:
            nrm = np.sqrt(np.einsum("lij,lij->l", P, P))
            dead |= nrm == 0.0
            safe = np.where(nrm > 0.0, nrm, 1.0)
            logacc += np.log(safe)
            P /= safe[:, None, None]
    final = np.linalg.norm(P, ord=2, axis=(1, 2))
    with np.errstate(divide="ignore"):
        out = logacc + np.log(np.where(dead, 1.0, final))
    out[dead] = -np.inf
    return out


def lyapunov_log_norms(eps2, alpha, renorm: int = 25):
    """Log spectral norm of the product of per-frequency companion matrices.

    ``eps2[k, l]`` is the squared innovation score driving step ``k`` at
    frequency ``l``.  Products are renormalized (Frobenius) every ``renorm``
    steps with the log scale accumulated separately.  Returns ``(K,)`` values;
    ``-inf`` where the product vanished exactly.
    """
    eps2 = np.ascontiguousarray(eps2, dtype=np.float64)
    alpha = np.ascontiguousarray(alpha, dtype=np.float64)
    if HAVE_NUMBA:
        return _lyapunov_jit(eps2, alpha, int(renorm))
    return _lyapunov_numpy(eps2, alpha, int(renorm))


# ---------------------------------------------------------------------------
# permutation portmanteau: sum of squared HS norms of lagged autocovariances
# ---------------------------------------------------------------------------


@njit(cache=True)
def _perm_stats_jit(gram, perms, max_lag):
    n_perm, N = perms.shape
    out = np.empty(n_perm)
    B = np.empty((N, N))
    for b in range(n_perm):
        pi = perms[b]
        for i in range(N):
            gi = pi[i]
            for j in range(N):
                B[i, j] = gram[gi, pi[j]]
        total = 0.0
        for h in range(1, max_lag + 1):
            m = N - h
            acc = 0.0
            for i in range(m):
                for j in range(m):
                    acc += B[i, j] * B[i + h, j + h]
            total += acc
        out[b] = total / N
    return out


def _perm_stats_numpy(gram, perms, max_lag):
    n_perm, N = perms.shape
    out = np.empty(n_perm)
    for b in range(n_perm):
        pi = perms[b]
        B = gram[np.ix_(pi, pi)]
        total = 0.0
        for h in range(1, max_lag + 1):
            m = N - h
            total += np.sum(B[:m, :m] * B[h:, h:])
        out[b] = total / N
    return out


def perm_hs_stats(gram, perms, max_lag: int):
    """``N * sum_h ||gamma_h||_HS^2`` for each row ordering in ``perms``.

    ``gram[i, j]`` must hold the L2 inner products of the centered curves, so
    that ``||gamma_h||^2 = N^-2 sum_{i,j<N-h} G[i,j] G[i+h,j+h]``.
    """
    gram = np.ascontiguousarray(gram, dtype=np.float64)
    perms = np.ascontiguousarray(perms, dtype=np.int64)
    if HAVE_NUMBA:
        return _perm_stats_jit(gram, perms, int(max_lag))
    return _perm_stats_numpy(gram, perms, int(max_lag))
