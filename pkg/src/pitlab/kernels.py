"""Hot numeric kernels with two interchangeable backends.

Every kernel exists twice: a loop version compiled with ``numba.njit`` and a
vectorised pure-numpy version.  The exported names point at one of the two,
chosen once at import time:

* ``PITLAB_DISABLE_NUMBA=1`` (or numba not importable) selects numpy;
* anything else selects numba.

Both variants stay importable as ``<name>_numba`` / ``<name>_numpy`` so tests
and ``benchmarks/bench_kernels.py`` can compare them directly.
"""

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_FLAG = os.environ.get("PITLAB_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = numba is not None and _FLAG in ("", "0", "false", "no")
BACKEND = "numba" if USE_NUMBA else "numpy"


def _njit(fn):
    if numba is None:
        return fn
    return numba.njit(cache=True)(fn)


# ---------------------------------------------------------------------------
# framing / overlap-add
# ---------------------------------------------------------------------------


def n_frames(length, frame_size, hop):
    """Number of frames needed to cover ``length`` samples (tail zero-padded)."""
    if length <= frame_size:
        return 1
    return 1 + -(-(length - frame_size) // hop)


def overlap_counts(length, n_frame, frame_size, hop):
    counts = np.zeros(length)
    for f in range(n_frame):
        start = f * hop
        stop = min(start + frame_size, length)
        if start < length:
            counts[start:stop] += 1.0
    return counts


@_njit
def _frame_signal_nb(x, frame_size, hop, n_frame):
    n, length = x.shape
    out = np.zeros((n, n_frame, frame_size))
    for b in range(n):
        for f in range(n_frame):
            base = f * hop
            for k in range(frame_size):
                t = base + k
                if t < length:
                    out[b, f, k] = x[b, t]
    return out


def _frame_signal_np(x, frame_size, hop, n_frame):
    n, length = x.shape
    padded_len = (n_frame - 1) * hop + frame_size
    padded = np.zeros((n, max(padded_len, length)))
    padded[:, :length] = x
    idx = np.arange(n_frame)[:, None] * hop + np.arange(frame_size)[None, :]
    return padded[:, idx]


@_njit
def _overlap_add_nb(frames, hop, length, inv_counts):
    n, n_frame, frame_size = frames.shape
    out = np.zeros((n, length))
    for b in range(n):
        for f in range(n_frame):
            base = f * hop
            for k in range(frame_size):
                t = base + k
                if t < length:
                    out[b, t] += frames[b, f, k]
        for t in range(length):
            out[b, t] *= inv_counts[t]
    return out


def _overlap_add_np(frames, hop, length, inv_counts):
    n, n_frame, frame_size = frames.shape
    padded_len = (n_frame - 1) * hop + frame_size
    out = np.zeros((n, max(padded_len, length)))
    stop = (n_frame - 1) * hop + 1
    for k in range(frame_size):
        out[:, k:k + stop:hop] += frames[:, :, k]
    return out[:, :length] * inv_counts


@_njit
def _overlap_add_adjoint_nb(grad, n_frame, frame_size, hop, inv_counts):
    n, length = grad.shape
    out = np.zeros((n, n_frame, frame_size))
    for b in range(n):
        for f in range(n_frame):
            base = f * hop
            for k in range(frame_size):
                t = base + k
                if t < length:
                    out[b, f, k] = grad[b, t] * inv_counts[t]
    return out


def _overlap_add_adjoint_np(grad, n_frame, frame_size, hop, inv_counts):
    return _frame_signal_np(grad * inv_counts, frame_size, hop, n_frame)


# ---------------------------------------------------------------------------
# assignment search
# ---------------------------------------------------------------------------


@_njit
def _batch_exhaustive_nb(mats, perms):
    m, n, _ = mats.shape
    n_perm = perms.shape[0]
    best_idx = np.zeros(m, dtype=np.int64)
    best_cost = np.empty(m)
    for s in range(m):
        best = np.inf
        arg = 0
        for p in range(n_perm):
            c = 0.0
            for i in range(n):
                c += mats[s, i, perms[p, i]]
            if c < best:
                best = c
                arg = p
        best_idx[s] = arg
        best_cost[s] = best
    return best_idx, best_cost


def _batch_exhaustive_np(mats, perms):
    n = mats.shape[1]
    rows = np.arange(n)
    # (m, P, n) gather, summed left to right to match the loop kernel
    picked = mats[:, rows[None, :], perms]
    costs = picked[:, :, 0].copy()
    for i in range(1, n):
        costs += picked[:, :, i]
    best_idx = np.argmin(costs, axis=1)
    return best_idx, costs[np.arange(len(mats)), best_idx]


@_njit
def _hungarian_nb(cost):
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=np.bool_)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = np.inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    assignment = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        assignment[p[j] - 1] = j - 1
    return assignment


def _hungarian_np(cost):
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    padded = np.zeros((n + 1, n + 1))
    padded[1:, 1:] = cost
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = padded[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            cand = np.where(free, minv, np.inf)
            j1 = int(np.argmin(cand))
            delta = cand[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    assignment = np.empty(n, dtype=np.int64)
    assignment[p[1:] - 1] = np.arange(n)
    return assignment


# Sinkhorn on the Gibbs kernel exp(-beta * cost), log domain.  Large beta * cost
# spreads make plain sweeps crawl, so beta is annealed: start at 1 / spread,
# double until the target, warm-starting the (rescaled) potentials.  At the
# target beta we sweep at least ``min_sweeps`` times.  Nearly decomposable
# plans (two assignments almost tied at high beta) make sweeps converge
# linearly with a rate close to 1, so any remaining residual is removed by
# damped Newton steps on the dual, with g[-1] fixed to remove the gauge
# freedom.  Plain sweeps resume only if Newton stalls.

ANNEAL_TOL = 1e-3
ANNEAL_MAX_SWEEPS = 1000
NEWTON_STEPS = 60


@_njit
def _sweep_nb(lk, f, g):
    n = lk.shape[0]
    for i in range(n):
        mx = -np.inf
        for j in range(n):
            if lk[i, j] + g[j] > mx:
                mx = lk[i, j] + g[j]
        acc = 0.0
        for j in range(n):
            acc += np.exp(lk[i, j] + g[j] - mx)
        f[i] = -(mx + np.log(acc))
    for j in range(n):
        mx = -np.inf
        for i in range(n):
            if lk[i, j] + f[i] > mx:
                mx = lk[i, j] + f[i]
        acc = 0.0
        for i in range(n):
            acc += np.exp(lk[i, j] + f[i] - mx)
        g[j] = -(mx + np.log(acc))


@_njit
def _row_error_nb(lk, f, g):
    n = lk.shape[0]
    worst = 0.0
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += np.exp(f[i] + lk[i, j] + g[j])
        worst = max(worst, abs(acc - 1.0))
    return worst


@_njit
def _residual_nb(lk, f, g):
    n = lk.shape[0]
    plan = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            plan[i, j] = np.exp(f[i] + lk[i, j] + g[j])
    r = plan.sum(axis=1) - 1.0
    c = plan.sum(axis=0) - 1.0
    return plan, r, c


@_njit
def _newton_nb(lk, f, g, tol):
    n = lk.shape[0]
    m = 2 * n - 1
    for _ in range(NEWTON_STEPS):
        plan, r, c = _residual_nb(lk, f, g)
        worst = max(np.max(np.abs(r)), np.max(np.abs(c)))
        if worst <= tol:
            return True
        norm = np.sqrt(np.sum(r * r) + np.sum(c * c))
        hess = np.zeros((m, m))
        rhs = np.empty(m)
        for i in range(n):
            hess[i, i] = r[i] + 1.0
            rhs[i] = -r[i]
        for j in range(n - 1):
            hess[n + j, n + j] = c[j] + 1.0
            rhs[n + j] = -c[j]
            for i in range(n):
                hess[i, n + j] = plan[i, j]
                hess[n + j, i] = plan[i, j]
        step = np.linalg.lstsq(hess, rhs)[0]
        t = 1.0
        accepted = False
        while t > 1e-10:
            nf = f + t * step[:n]
            ng = g.copy()
            ng[:n - 1] += t * step[n:]
            _, r2, c2 = _residual_nb(lk, nf, ng)
            if np.sqrt(np.sum(r2 * r2) + np.sum(c2 * c2)) < (1.0 - 1e-4 * t) * norm:
                f[:] = nf
                g[:] = ng
                accepted = True
                break
            t *= 0.5
        if not accepted:
            return False
    return False


@_njit
def _sinkhorn_nb(cost, beta, min_sweeps, tol, max_sweeps):
    n = cost.shape[0]
    f = np.zeros(n)
    g = np.zeros(n)
    spread = np.max(cost) - np.min(cost)
    b = beta
    if spread * beta > 1.0:
        b = 1.0 / spread
    sweeps = 0
    while b < beta:
        lk = -b * cost
        for _ in range(ANNEAL_MAX_SWEEPS):
            _sweep_nb(lk, f, g)
            sweeps += 1
            if _row_error_nb(lk, f, g) <= ANNEAL_TOL:
                break
        nb = min(beta, 2.0 * b)
        f *= nb / b
        g *= nb / b
        b = nb
    lk = -beta * cost
    for _ in range(min_sweeps):
        _sweep_nb(lk, f, g)
        sweeps += 1
    if _row_error_nb(lk, f, g) > tol and n > 1:
        _newton_nb(lk, f, g, tol)
    while sweeps < max_sweeps and _row_error_nb(lk, f, g) > tol:
        _sweep_nb(lk, f, g)
        sweeps += 1
    out = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = np.exp(f[i] + lk[i, j] + g[j])
    return out, sweeps


def _logsumexp(a, axis):
    mx = np.max(a, axis=axis, keepdims=True)
    return np.squeeze(mx, axis=axis) + np.log(np.sum(np.exp(a - mx), axis=axis))


def _sweep_np(lk, f, g):
    f = -_logsumexp(lk + g[None, :], axis=1)
    g = -_logsumexp(lk + f[:, None], axis=0)
    return f, g


def _row_error_np(lk, f, g):
    return float(np.max(np.abs(np.exp(f[:, None] + lk + g[None, :]).sum(axis=1) - 1.0)))


def _residual_np(lk, f, g):
    plan = np.exp(f[:, None] + lk + g[None, :])
    return plan, plan.sum(axis=1) - 1.0, plan.sum(axis=0) - 1.0


def _newton_np(lk, f, g, tol):
    n = lk.shape[0]
    for _ in range(NEWTON_STEPS):
        plan, r, c = _residual_np(lk, f, g)
        if max(np.max(np.abs(r)), np.max(np.abs(c))) <= tol:
            return f, g, True
        norm = np.sqrt(np.sum(r * r) + np.sum(c * c))
        hess = np.zeros((2 * n - 1, 2 * n - 1))
        hess[:n, :n] = np.diag(r + 1.0)
        hess[n:, n:] = np.diag(c[:-1] + 1.0)
        hess[:n, n:] = plan[:, :-1]
        hess[n:, :n] = plan[:, :-1].T
        step = np.linalg.lstsq(hess, -np.concatenate([r, c[:-1]]), rcond=None)[0]
        t = 1.0
        while t > 1e-10:
            nf = f + t * step[:n]
            ng = g.copy()
            ng[:-1] += t * step[n:]
            _, r2, c2 = _residual_np(lk, nf, ng)
            if np.sqrt(np.sum(r2 * r2) + np.sum(c2 * c2)) < (1.0 - 1e-4 * t) * norm:
                f, g = nf, ng
                break
            t *= 0.5
        else:
            return f, g, False
    return f, g, False


def _sinkhorn_np(cost, beta, min_sweeps, tol, max_sweeps):
    n = cost.shape[0]
    f = np.zeros(n)
    g = np.zeros(n)
    spread = float(np.max(cost) - np.min(cost))
    b = 1.0 / spread if spread * beta > 1.0 else beta
    sweeps = 0
    while b < beta:
        lk = -b * cost
        for _ in range(ANNEAL_MAX_SWEEPS):
            f, g = _sweep_np(lk, f, g)
            sweeps += 1
            if _row_error_np(lk, f, g) <= ANNEAL_TOL:
                break
        nb = min(beta, 2.0 * b)
        f, g, b = f * (nb / b), g * (nb / b), nb
    lk = -beta * cost
    for _ in range(min_sweeps):
        f, g = _sweep_np(lk, f, g)
        sweeps += 1
    if _row_error_np(lk, f, g) > tol and n > 1:
        f, g, _ = _newton_np(lk, f, g, tol)
    while sweeps < max_sweeps and _row_error_np(lk, f, g) > tol:
        f, g = _sweep_np(lk, f, g)
        sweeps += 1
    return np.exp(f[:, None] + lk + g[None, :]), sweeps


frame_signal_numba = _frame_signal_nb
frame_signal_numpy = _frame_signal_np
overlap_add_numba = _overlap_add_nb
overlap_add_numpy = _overlap_add_np
overlap_add_adjoint_numba = _overlap_add_adjoint_nb
overlap_add_adjoint_numpy = _overlap_add_adjoint_np
batch_exhaustive_numba = _batch_exhaustive_nb
batch_exhaustive_numpy = _batch_exhaustive_np
hungarian_numba = _hungarian_nb
hungarian_numpy = _hungarian_np
sinkhorn_numba = _sinkhorn_nb
sinkhorn_numpy = _sinkhorn_np

if USE_NUMBA:
    frame_signal = _frame_signal_nb
    overlap_add = _overlap_add_nb
    overlap_add_adjoint = _overlap_add_adjoint_nb
    batch_exhaustive = _batch_exhaustive_nb
    hungarian = _hungarian_nb
    sinkhorn = _sinkhorn_nb
else:
    frame_signal = _frame_signal_np
    overlap_add = _overlap_add_np
    overlap_add_adjoint = _overlap_add_adjoint_np
    batch_exhaustive = _batch_exhaustive_np
    hungarian = _hungarian_np
    sinkhorn = _sinkhorn_np
