"""Hot numeric kernels: numba-compiled loops with a pure-numpy fallback.

The two runtime-dominant inner loops of the toolkit live here:

* the scaled forward/backward recursions driving every per-(user, hour)
  Baum-Welch fit, and
* the Lance-Williams update loop of Ward agglomerative clustering.

Each kernel exists twice with identical arithmetic: a ``*_np`` version
written against vectorized numpy, and a scalar-loop twin compiled with
``numba.njit``. The compiled twin is bound to the public name when numba
imports successfully and the environment variable ``TRISCOPE_DISABLE_NUMBA``
is unset (or "0"); otherwise the numpy version is used. Parity between the
two paths is pinned by ``tests/test_backends.py`` and their speed is
compared by ``benchmarks/bench_backends.py``.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

_env = os.environ.get("TRISCOPE_DISABLE_NUMBA", "").strip().lower()
NUMBA_DISABLED_BY_ENV = _env in {"1", "true", "yes", "on"}
NUMBA_ENABLED = HAVE_NUMBA and not NUMBA_DISABLED_BY_ENV

_LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def _log_gauss_np(obs: np.ndarray, means: np.ndarray, variances: np.ndarray) -> np.ndarray:
    """(T, N) matrix of per-state Gaussian log-densities."""
    diff = obs[:, None] - means[None, :]
    return -0.5 * (_LOG_2PI + np.log(variances)[None, :] + diff * diff / variances[None, :])


def forward_loglik_np(obs, trans, init, means, variances):
    """Scaled forward recursion; returns log P(obs | model)."""
    logb = _log_gauss_np(obs, means, variances)
    loglik = 0.0
    prev = init
    for t in range(obs.shape[0]):
        shift = logb[t].max()
        b = np.exp(logb[t] - shift)
        raw = (prev * b) if t == 0 else ((prev @ trans) * b)
        s = raw.sum()
        prev = raw / s
        loglik += np.log(s) + shift
    return float(loglik)


def viterbi_np(obs, log_trans, log_init, means, variances):
    """Most-probable state path in log space; ties prefer the lower state."""
    logb = _log_gauss_np(obs, means, variances)
    T, n = logb.shape
    psi = np.zeros((T, n), dtype=np.int64)
    delta = log_init + logb[0]
    for t in range(1, T):
        cand = delta[:, None] + log_trans
        psi[t] = np.argmax(cand, axis=0)  # first max <=> lowest predecessor
        delta = cand[psi[t], np.arange(n)] + logb[t]
    path = np.empty(T, dtype=np.int64)
    path[-1] = int(np.argmax(delta))
    for t in range(T - 2, -1, -1):
        path[t] = psi[t + 1, path[t + 1]]
    return path


def baum_welch_np(obs, trans, init, means, variances, var_floor, tol, max_iter):
    """EM loop for a Gaussian-emission HMM on one observation sequence.

    Returns the updated ``(trans, init, means, variances)`` plus the
    log-likelihood history (one entry per evaluated parameter set; the last
    entry always corresponds to the returned parameters).
    """
    T = obs.shape[0]
    n = init.shape[0]
    trans = trans.copy()
    init = init.copy()
    means = means.copy()
    variances = variances.copy()
    hist = np.empty(max_iter + 1)
    n_hist = 0

    for it in range(max_iter + 1):
        logb = _log_gauss_np(obs, means, variances)
        shifts = logb.max(axis=1)
        b = np.exp(logb - shifts[:, None])

        alpha = np.empty((T, n))
        raw = init * b[0]
        s = raw.sum()
        alpha[0] = raw / s
        ll = np.log(s) + shifts[0]
        for t in range(1, T):
            raw = (alpha[t - 1] @ trans) * b[t]
            s = raw.sum()
            alpha[t] = raw / s
            ll += np.log(s) + shifts[t]

        hist[n_hist] = ll
        n_hist += 1
        if n_hist > 1 and (ll - hist[n_hist - 2]) < tol:
            break
        if it == max_iter:
            break

        # backward pass, normalized per step (scale cancels in gamma/xi)
        beta = np.empty((T, n))
        beta[T - 1] = 1.0 / n
        for t in range(T - 2, -1, -1):
            v = trans @ (b[t + 1] * beta[t + 1])
            beta[t] = v / v.sum()

        gamma = alpha * beta
        gamma /= gamma.sum(axis=1, keepdims=True)

        xi_sum = np.zeros((n, n))
        for t in range(T - 1):
            m = (alpha[t][:, None] * trans) * (b[t + 1] * beta[t + 1])[None, :]
            xi_sum += m / m.sum()

        gsum_tr = gamma[: T - 1].sum(axis=0)
        gsum_all = gamma.sum(axis=0)
        init = gamma[0].copy()
        for i in range(n):
            if gsum_tr[i] > 0.0:
                row = xi_sum[i] / gsum_tr[i]
                trans[i] = row / row.sum()
        for i in range(n):
            if gsum_all[i] > 0.0:
                mu = float(gamma[:, i] @ obs) / gsum_all[i]
                dev = obs - mu
                var = float(gamma[:, i] @ (dev * dev)) / gsum_all[i]
                means[i] = mu
                variances[i] = var if var > var_floor else var_floor

    return trans, init, means, variances, hist[:n_hist]


def ward_linkage_np(points):
    """Ward agglomeration via Lance-Williams updates on squared distances.

    Leaves are nodes ``0..n-1``; the merge at step ``s`` creates node
    ``n+s``. Returns an ``(n-1, 4)`` float array of
    ``(left, right, height, size)`` rows with ``left < right`` node ids and
    ``height = sqrt(2 * increase in within-cluster SS)`` (so two singletons
    merge at their Euclidean distance). Ties on the merge criterion pick the
    lexicographically smallest ``(left, right)`` pair.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    total = 2 * n - 1
    d2 = np.full((total, total), np.inf)
    sq = (pts * pts).sum(axis=1)
    block = sq[:, None] + sq[None, :] - 2.0 * (pts @ pts.T)
    np.maximum(block, 0.0, out=block)
    d2[:n, :n] = block
    np.fill_diagonal(d2, np.inf)

    active = np.zeros(total, dtype=bool)
    active[:n] = True
    sizes = np.zeros(total, dtype=np.int64)
    sizes[:n] = 1
    merges = np.empty((n - 1, 4))
    iu, ju = np.triu_indices(total, 1)
    for step in range(n - 1):
        flat = d2[iu, ju]
        k = int(np.argmin(flat))  # row-major scan = lexicographic tie-break
        bi = int(iu[k])
        bj = int(ju[k])
        best = flat[k]
        new = n + step
        si = sizes[bi]
        sj = sizes[bj]
        merges[step] = (bi, bj, math.sqrt(best), si + sj)

        others = np.flatnonzero(active)
        others = others[(others != bi) & (others != bj)]
        if others.size:
            su = sizes[others]
            upd = ((si + su) * d2[bi, others] + (sj + su) * d2[bj, others] - su * best) / (
                si + sj + su
            )
            d2[new, others] = upd
            d2[others, new] = upd
        d2[bi, :] = np.inf
        d2[:, bi] = np.inf
        d2[bj, :] = np.inf
        d2[:, bj] = np.inf
        active[bi] = False
        active[bj] = False
        active[new] = True
        sizes[new] = si + sj
    return merges


# ---------------------------------------------------------------------------
# loop twins (numba-compiled when available)
# ---------------------------------------------------------------------------


def _forward_loglik_loop(obs, trans, init, means, variances):
    T = obs.shape[0]
    n = init.shape[0]
    logb = np.empty(n)
    prev = np.empty(n)
    cur = np.empty(n)
    loglik = 0.0
    for t in range(T):
        shift = -np.inf
        for i in range(n):
            d = obs[t] - means[i]
            logb[i] = -0.5 * (_LOG_2PI + math.log(variances[i]) + d * d / variances[i])
            if logb[i] > shift:
                shift = logb[i]
        s = 0.0
        for i in range(n):
            if t == 0:
                v = init[i] * math.exp(logb[i] - shift)
            else:
                acc = 0.0
                for j in range(n):
                    acc += prev[j] * trans[j, i]
                v = acc * math.exp(logb[i] - shift)
            cur[i] = v
            s += v
        for i in range(n):
            prev[i] = cur[i] / s
        loglik += math.log(s) + shift
    return loglik


def _viterbi_loop(obs, log_trans, log_init, means, variances):
    T = obs.shape[0]
    n = log_init.shape[0]
    delta = np.empty(n)
    nxt = np.empty(n)
    psi = np.zeros((T, n), dtype=np.int64)
    for i in range(n):
        d = obs[0] - means[i]
        delta[i] = log_init[i] - 0.5 * (
            _LOG_2PI + math.log(variances[i]) + d * d / variances[i]
        )
    for t in range(1, T):
        for j in range(n):
            best = -np.inf
            arg = 0
            for i in range(n):
                v = delta[i] + log_trans[i, j]
                if v > best:  # strict: first maximum wins -> lowest index
                    best = v
                    arg = i
            d = obs[t] - means[j]
            nxt[j] = best - 0.5 * (
                _LOG_2PI + math.log(variances[j]) + d * d / variances[j]
            )
            psi[t, j] = arg
        for j in range(n):
            delta[j] = nxt[j]
    path = np.empty(T, dtype=np.int64)
    best = -np.inf
    arg = 0
    for i in range(n):
        if delta[i] > best:
            best = delta[i]
            arg = i
    path[T - 1] = arg
    for t in range(T - 2, -1, -1):
        path[t] = psi[t + 1, path[t + 1]]
    return path


def _baum_welch_loop(obs, trans, init, means, variances, var_floor, tol, max_iter):
    T = obs.shape[0]
    n = init.shape[0]
    trans = trans.copy()
    init = init.copy()
    means = means.copy()
    variances = variances.copy()
    hist = np.empty(max_iter + 1)
    n_hist = 0

    b = np.empty((T, n))
    shifts = np.empty(T)
    alpha = np.empty((T, n))
    beta = np.empty((T, n))
    gamma = np.empty((T, n))
    xi_sum = np.empty((n, n))

    for it in range(max_iter + 1):
        for t in range(T):
            shift = -np.inf
            for i in range(n):
                d = obs[t] - means[i]
                v = -0.5 * (_LOG_2PI + math.log(variances[i]) + d * d / variances[i])
                b[t, i] = v
                if v > shift:
                    shift = v
            shifts[t] = shift
            for i in range(n):
                b[t, i] = math.exp(b[t, i] - shift)

        ll = 0.0
        s = 0.0
        for i in range(n):
            alpha[0, i] = init[i] * b[0, i]
            s += alpha[0, i]
        for i in range(n):
            alpha[0, i] /= s
        ll += math.log(s) + shifts[0]
        for t in range(1, T):
            s = 0.0
            for i in range(n):
                acc = 0.0
                for j in range(n):
                    acc += alpha[t - 1, j] * trans[j, i]
                alpha[t, i] = acc * b[t, i]
                s += alpha[t, i]
            for i in range(n):
                alpha[t, i] /= s
            ll += math.log(s) + shifts[t]

        hist[n_hist] = ll
        n_hist += 1
        if n_hist > 1 and (ll - hist[n_hist - 2]) < tol:
            break
        if it == max_iter:
            break

        for i in range(n):
            beta[T - 1, i] = 1.0 / n
        for t in range(T - 2, -1, -1):
            s = 0.0
            for i in range(n):
                acc = 0.0
                for j in range(n):
                    acc += trans[i, j] * b[t + 1, j] * beta[t + 1, j]
                beta[t, i] = acc
                s += acc
            for i in range(n):
                beta[t, i] /= s

        for t in range(T):
            s = 0.0
            for i in range(n):
                gamma[t, i] = alpha[t, i] * beta[t, i]
                s += gamma[t, i]
            for i in range(n):
                gamma[t, i] /= s

        for i in range(n):
            for j in range(n):
                xi_sum[i, j] = 0.0
        for t in range(T - 1):
            s = 0.0
            for i in range(n):
                for j in range(n):
                    s += alpha[t, i] * trans[i, j] * b[t + 1, j] * beta[t + 1, j]
            for i in range(n):
                for j in range(n):
                    xi_sum[i, j] += alpha[t, i] * trans[i, j] * b[t + 1, j] * beta[t + 1, j] / s

        for i in range(n):
            init[i] = gamma[0, i]
        for i in range(n):
            denom = 0.0
            for t in range(T - 1):
                denom += gamma[t, i]
            if denom > 0.0:
                rs = 0.0
                for j in range(n):
                    rs += xi_sum[i, j]
                for j in range(n):
                    trans[i, j] = xi_sum[i, j] / rs
        for i in range(n):
            denom = 0.0
            num = 0.0
            for t in range(T):
                denom += gamma[t, i]
                num += gamma[t, i] * obs[t]
            if denom > 0.0:
                mu = num / denom
                acc = 0.0
                for t in range(T):
                    d = obs[t] - mu
                    acc += gamma[t, i] * d * d
                var = acc / denom
                means[i] = mu
                variances[i] = var if var > var_floor else var_floor

    return trans, init, means, variances, hist[:n_hist].copy()


def _ward_linkage_loop(points):
    n = points.shape[0]
    dim = points.shape[1]
    total = 2 * n - 1
    d2 = np.full((total, total), np.inf)
    for i in range(n):
        for j in range(i + 1, n):
            acc = 0.0
            for k in range(dim):
                d = points[i, k] - points[j, k]
                acc += d * d
            d2[i, j] = acc
            d2[j, i] = acc

    active = np.zeros(total, dtype=np.bool_)
    sizes = np.zeros(total, dtype=np.int64)
    for i in range(n):
        active[i] = True
        sizes[i] = 1

    merges = np.empty((n - 1, 4))
    for step in range(n - 1):
        best = np.inf
        bi = -1
        bj = -1
        for i in range(total):
            if active[i]:
                for j in range(i + 1, total):
                    if active[j] and d2[i, j] < best:
                        best = d2[i, j]
                        bi = i
                        bj = j
        new = n + step
        si = sizes[bi]
        sj = sizes[bj]
        merges[step, 0] = bi
        merges[step, 1] = bj
        merges[step, 2] = math.sqrt(best)
        merges[step, 3] = si + sj
        for u in range(total):
            if active[u] and u != bi and u != bj:
                su = sizes[u]
                v = ((si + su) * d2[bi, u] + (sj + su) * d2[bj, u] - su * best) / (
                    si + sj + su
                )
                d2[new, u] = v
                d2[u, new] = v
        active[bi] = False
        active[bj] = False
        active[new] = True
        sizes[new] = si + sj
    return merges


if HAVE_NUMBA:
    forward_loglik_jit = njit(cache=True)(_forward_loglik_loop)
    viterbi_jit = njit(cache=True)(_viterbi_loop)
    baum_welch_jit = njit(cache=True)(_baum_welch_loop)
    ward_linkage_jit = njit(cache=True)(_ward_linkage_loop)

if NUMBA_ENABLED:
    forward_loglik = forward_loglik_jit
    viterbi_kernel = viterbi_jit
    baum_welch_kernel = baum_welch_jit
    ward_linkage = ward_linkage_jit
else:
    forward_loglik = forward_loglik_np
    viterbi_kernel = viterbi_np
    baum_welch_kernel = baum_welch_np
    ward_linkage = ward_linkage_np


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"


def warmup() -> None:
    """Trigger JIT compilation of every kernel on tiny inputs."""
    obs = np.array([0.0, 1.0, 0.5, 2.0])
    trans = np.array([[0.9, 0.1], [0.1, 0.9]])
    init = np.array([0.5, 0.5])
    means = np.array([0.0, 1.0])
    variances = np.array([1.0, 1.0])
    forward_loglik(obs, trans, init, means, variances)
    with np.errstate(divide="ignore"):
        viterbi_kernel(obs, np.log(trans), np.log(init), means, variances)
    baum_welch_kernel(obs, trans, init, means, variances, 1e-12, 1e-6, 3)
    ward_linkage(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]]))
