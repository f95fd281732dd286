"""Newton-Raphson kernels on the polar power-balance equations.

Two interchangeable backends solve a batch of cases that share one admittance
matrix:

* ``newton_batch_numba`` loops over cases in compiled code. Unknowns are
  interleaved per bus (angle, magnitude) in the order given by ``pq``; with a
  fill-reducing bus order the dense LU (threshold pivoting, zero skipping)
  touches little more than the Jacobian's nonzeros.
* ``newton_batch_numpy`` advances every unconverged case at once with stacked
  Jacobians and a batched ``np.linalg.solve``.

Both return ``(vm, va, iterations, max_mismatch, status)``; ``status`` is one
of the ``CONVERGED`` / ``MAX_ITER`` / ``SINGULAR`` / ``NONFINITE`` codes.
"""
import numpy as np

from .._accel import USE_NUMBA, njit

CONVERGED = 0
MAX_ITER = 1
SINGULAR = 2
NONFINITE = 3


# --------------------------------------------------------------------------
# numba path

@njit
def _lu_solve(A, b):
    """Solve A x = b in place; returns (x, ok). ``A`` and ``b`` are clobbered."""
    n = A.shape[0]
    scale = 0.0
    for i in range(n):
        for j in range(n):
            v = abs(A[i, j])
            if v > scale:
                scale = v
    tiny = 1e-14 * (scale if scale > 0.0 else 1.0)
    cols = np.empty(n, dtype=np.int64)
    for k in range(n):
        p = k
        best = abs(A[k, k])
        for i in range(k + 1, n):
            v = abs(A[i, k])
            if v > best:
                best = v
                p = i
        if not best > tiny:
            return b, False
        # keep the diagonal (and the fill-reducing order) unless it is much smaller
        if abs(A[k, k]) >= 0.1 * best:
            p = k
        if p != k:
            for j in range(n):
                tmp = A[k, j]
                A[k, j] = A[p, j]
                A[p, j] = tmp
            tmp = b[k]
            b[k] = b[p]
            b[p] = tmp
        piv = A[k, k]
        # Jacobians of meshed grids stay sparse; only touch nonzero pivot-row columns
        nnz = 0
        for j in range(k + 1, n):
            if A[k, j] != 0.0:
                cols[nnz] = j
                nnz += 1
        for i in range(k + 1, n):
            fac = A[i, k] / piv
            if fac != 0.0:
                A[i, k] = fac
                for q in range(nnz):
                    j = cols[q]
                    A[i, j] -= fac * A[k, j]
                b[i] -= fac * b[k]
    for i in range(n - 1, -1, -1):
        s = b[i]
        for j in range(i + 1, n):
            s -= A[i, j] * b[j]
        b[i] = s / A[i, i]
    return b, True


@njit
def _injections(G, B, vm, va, P, Q, cs, sn):
    """Bus injections; also fills per-bus cos/sin of the angles for reuse."""
    n = vm.size
    for i in range(n):
        cs[i] = np.cos(va[i])
        sn[i] = np.sin(va[i])
    for i in range(n):
        p = 0.0
        q = 0.0
        for j in range(n):
            gij = G[i, j]
            bij = B[i, j]
            if gij == 0.0 and bij == 0.0:
                continue
            c = cs[i] * cs[j] + sn[i] * sn[j]
            s = sn[i] * cs[j] - cs[i] * sn[j]
            p += vm[j] * (gij * c + bij * s)
            q += vm[j] * (gij * s - bij * c)
        P[i] = vm[i] * p
        Q[i] = vm[i] * q


@njit
def _newton_one(G, B, p_spec, q_spec, vm, va, pq, tol, max_iter):
    n = vm.size
    m = pq.size
    P = np.empty(n)
    Q = np.empty(n)
    F = np.empty(2 * m)
    J = np.empty((2 * m, 2 * m))
    cs = np.empty(n)
    sn = np.empty(n)
    it = 0
    while True:
        _injections(G, B, vm, va, P, Q, cs, sn)
        norm = 0.0
        finite = True
        for a in range(m):
            i = pq[a]
            F[2 * a] = P[i] - p_spec[i]
            F[2 * a + 1] = Q[i] - q_spec[i]
            fa = abs(F[2 * a])
            fb = abs(F[2 * a + 1])
            if not (np.isfinite(fa) and np.isfinite(fb)):
                finite = False
            else:
                norm = max(norm, fa, fb)
        if not finite:
            return it, np.inf, NONFINITE
        if norm <= tol:
            return it, norm, CONVERGED
        if it >= max_iter:
            return it, norm, MAX_ITER
        for a in range(m):
            i = pq[a]
            for b in range(m):
                j = pq[b]
                if i == j:
                    J[2 * a, 2 * b] = -Q[i] - B[i, i] * vm[i] * vm[i]
                    J[2 * a, 2 * b + 1] = P[i] / vm[i] + G[i, i] * vm[i]
                    J[2 * a + 1, 2 * b] = P[i] - G[i, i] * vm[i] * vm[i]
                    J[2 * a + 1, 2 * b + 1] = Q[i] / vm[i] - B[i, i] * vm[i]
                elif G[i, j] == 0.0 and B[i, j] == 0.0:
                    J[2 * a, 2 * b] = 0.0
                    J[2 * a, 2 * b + 1] = 0.0
                    J[2 * a + 1, 2 * b] = 0.0
                    J[2 * a + 1, 2 * b + 1] = 0.0
                else:
                    c = cs[i] * cs[j] + sn[i] * sn[j]
                    s = sn[i] * cs[j] - cs[i] * sn[j]
                    gs_bc = G[i, j] * s - B[i, j] * c
                    gc_bs = G[i, j] * c + B[i, j] * s
                    J[2 * a, 2 * b] = vm[i] * vm[j] * gs_bc
                    J[2 * a, 2 * b + 1] = vm[i] * gc_bs
                    J[2 * a + 1, 2 * b] = -vm[i] * vm[j] * gc_bs
                    J[2 * a + 1, 2 * b + 1] = vm[i] * gs_bc
        dx, ok = _lu_solve(J, F)
        if not ok:
            return it, norm, SINGULAR
        for a in range(m):
            i = pq[a]
            va[i] -= dx[2 * a]
            vm[i] -= dx[2 * a + 1]
        it += 1


@njit
def newton_batch_numba(G, B, p_spec, q_spec, vm0, va0, pq, tol, max_iter):
    T, n = p_spec.shape
    vm = vm0.copy()
    va = va0.copy()
    iters = np.zeros(T, dtype=np.int64)
    mis = np.zeros(T)
    status = np.zeros(T, dtype=np.int64)
    for k in range(T):
        it, norm, st = _newton_one(G, B, p_spec[k], q_spec[k], vm[k], va[k], pq, tol, max_iter)
        iters[k] = it
        mis[k] = norm
        status[k] = st
    return vm, va, iters, mis, status


# --------------------------------------------------------------------------
# numpy path

def _calc_injections(Y, V):
    I = V @ Y.T
    return V * np.conj(I), I


def newton_batch_numpy(G, B, p_spec, q_spec, vm0, va0, pq, tol, max_iter):
    Y = G + 1j * B
    T, n = p_spec.shape
    m = pq.size
    vm = vm0.astype(float).copy()
    va = va0.astype(float).copy()
    iters = np.zeros(T, dtype=np.int64)
    mis = np.zeros(T)
    status = np.full(T, -1, dtype=np.int64)
    s_spec = p_spec + 1j * q_spec
    eye = np.eye(n, dtype=bool)
    active = np.arange(T)
    it = 0
    while active.size:
        V = vm[active] * np.exp(1j * va[active])
        S, I = _calc_injections(Y, V)
        dS = (S - s_spec[active])[:, pq]
        F = np.concatenate([dS.real, dS.imag], axis=1)
        finite = np.isfinite(F).all(axis=1)
        norm = np.where(finite, np.abs(np.where(np.isfinite(F), F, 0.0)).max(axis=1, initial=0.0),
                        np.inf)
        mis[active] = norm
        iters[active] = it
        done = np.full(active.size, -1)
        done[~finite] = NONFINITE
        done[finite & (norm <= tol)] = CONVERGED
        if it >= max_iter:
            done[done < 0] = MAX_ITER
        status[active[done >= 0]] = done[done >= 0]
        keep = done < 0
        active, V, I, F = active[keep], V[keep], I[keep], F[keep]
        if not active.size:
            break

        Vn = V / np.abs(V)
        diagI = np.where(eye, I[:, :, None], 0.0)
        diagVn = np.where(eye, Vn[:, None, :], 0.0)
        dS_dVa = 1j * V[:, :, None] * np.conj(diagI - Y[None] * V[:, None, :])
        dS_dVm = V[:, :, None] * np.conj(Y[None] * Vn[:, None, :]) + np.conj(I)[:, :, None] * diagVn
        sub = np.ix_(np.arange(active.size), pq, pq)
        J = np.empty((active.size, 2 * m, 2 * m))
        J[:, :m, :m] = dS_dVa[sub].real
        J[:, :m, m:] = dS_dVm[sub].real
        J[:, m:, :m] = dS_dVa[sub].imag
        J[:, m:, m:] = dS_dVm[sub].imag

        dx = np.empty((active.size, 2 * m))
        singular = np.zeros(active.size, dtype=bool)
        try:
            dx[:] = np.linalg.solve(J, F[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            for k in range(active.size):
                try:
                    dx[k] = np.linalg.solve(J[k], F[k])
                except np.linalg.LinAlgError:
                    singular[k] = True
                    dx[k] = 0.0
        if singular.any():
            status[active[singular]] = SINGULAR
        ok = ~singular
        rows = active[ok]
        va[np.ix_(rows, pq)] -= dx[ok, :m]
        vm[np.ix_(rows, pq)] -= dx[ok, m:]
        it += 1
        iters[rows] = it
        active = rows
    return vm, va, iters, mis, status


newton_batch = newton_batch_numba if USE_NUMBA else newton_batch_numpy
