"""Compiled cyclic block coordinate descent for the group lasso in Gram form.

Problem: minimize ``a^T G a - 2 a^T c + lam * sum_{penalized g} ||a_g||``,
which is ``(1/n)||y - X a||^2 + lam * sum ||a_g||`` up to a constant when
``G = X^T X / n`` and ``c = X^T y / n``.
"""

import numpy as np
from numba import njit

# relative slack on the zero/nonzero threshold; at the boundary the block stays zero
THRESH_SLACK = 1e-12


@njit(cache=True)
def _block_min(w, v, r, lam, penalized):
    """Exact minimizer of ``b^T Q b - 2 b^T r + lam ||b||`` with ``Q = V diag(w) V^T``."""
    p = r.shape[0]
    rt = np.ascontiguousarray(v.T) @ r
    if not penalized or lam == 0.0:
        out = np.zeros(p)
        wmax = w.max()
        for k in range(p):
            if w[k] > 1e-13 * max(wmax, 1e-300):
                out[k] = rt[k] / w[k]
        return np.ascontiguousarray(v) @ out
    rn = np.sqrt(np.sum(r * r))
    if 2.0 * rn <= lam * (1.0 + THRESH_SLACK):
        return np.zeros(p)
    q = lam / (2.0 * rn)
    wmin = max(w.min(), 0.0)
    wmax = max(w.max(), 0.0)
    lo = wmin * q / (1.0 - q)
    hi = wmax * q / (1.0 - q)
    target = 0.25 * lam * lam
    rt2 = rt * rt
    nu = 0.5 * (lo + hi)
    if hi - lo > 1e-15 * max(hi, 1e-300):
        for _ in range(200):
            phi = 0.0
            dphi = 0.0
            for k in range(p):
                wk = max(w[k], 0.0)
                den = wk + nu
                phi += rt2[k] * nu * nu / (den * den)
                dphi += rt2[k] * 2.0 * nu * wk / (den * den * den)
            phi -= target
            if phi > 0.0:
                hi = nu
            else:
                lo = nu
            step_ok = False
            if dphi > 0.0:
                cand = nu - phi / dphi
                if lo < cand < hi:
                    step_ok = True
                    nxt = cand
            if not step_ok:
                nxt = 0.5 * (lo + hi)
            if abs(nxt - nu) <= 1e-15 * max(nu, 1e-300) or hi - lo <= 1e-15 * max(hi, 1e-300):
                nu = nxt
                break
            nu = nxt
    else:
        nu = hi
    out = np.empty(p)
    for k in range(p):
        out[k] = rt[k] / (max(w[k], 0.0) + nu)
    return np.ascontiguousarray(v) @ out


@njit(cache=True)
def kkt_gram(gram, c, a, starts, sizes, penalized, lam):
    """Max KKT violation (see :func:`smartnet.solver.kkt_residual`)."""
    g = c - gram @ a
    worst = 0.0
    for gi in range(starts.shape[0]):
        s = starts[gi]
        e = s + sizes[gi]
        gb = g[s:e]
        ab = a[s:e]
        if not penalized[gi] or lam == 0.0:
            val = 2.0 * np.sqrt(np.sum(gb * gb))
        else:
            an = np.sqrt(np.sum(ab * ab))
            if an > 0.0:
                val = np.sqrt(np.sum((2.0 / lam * gb - ab / an) ** 2))
            else:
                val = max(0.0, 2.0 / lam * np.sqrt(np.sum(gb * gb)) - 1.0)
        if val > worst:
            worst = val
    return worst


@njit(cache=True)
def objective_gram(gram, c, yy, a, starts, sizes, penalized, lam):
    val = yy - 2.0 * a @ c + a @ (gram @ a)
    for gi in range(starts.shape[0]):
        if penalized[gi]:
            s = starts[gi]
            val += lam * np.sqrt(np.sum(a[s:s + sizes[gi]] ** 2))
    return val


@njit(cache=True)
def bcd(gram, c, yy, a0, starts, sizes, penalized, eig_w, eig_v, lam, tol, kkt_tol, max_iter, history):
    """Run sweeps until the KKT residual drops below ``kkt_tol``.

    ``eig_w[g, :size]`` / ``eig_v[g, :size, :size]`` hold the eigendecomposition
    of each diagonal Gram block. ``history`` (length 0 or ``max_iter``)
    receives the objective after every sweep.
    """
    a = a0.copy()
    ga = gram @ a
    n_groups = starts.shape[0]
    record = history.shape[0] > 0
    kkt = kkt_gram(gram, c, a, starts, sizes, penalized, lam)
    if kkt <= kkt_tol:
        return a, 0, True, kkt
    it = 0
    for it in range(1, max_iter + 1):
        change = 0.0
        for gi in range(n_groups):
            s = starts[gi]
            m = sizes[gi]
            e = s + m
            old = a[s:e].copy()
            r = c[s:e] - ga[s:e]
            for u in range(m):
                acc = 0.0
                for k in range(m):
                    acc += gram[s + u, s + k] * old[k]
                r[u] += acc
            new = _block_min(eig_w[gi, :m], eig_v[gi, :m, :m], r, lam, penalized[gi])
            d = new - old
            dmax = np.max(np.abs(d))
            if dmax > 0.0:
                a[s:e] = new
                for row in range(ga.shape[0]):
                    acc = 0.0
                    for k in range(m):
                        acc += gram[row, s + k] * d[k]
                    ga[row] += acc
                if dmax > change:
                    change = dmax
        if record:
            history[it - 1] = objective_gram(gram, c, yy, a, starts, sizes, penalized, lam)
        if change < tol or it % 5 == 0:
            ga = gram @ a
            kkt = kkt_gram(gram, c, a, starts, sizes, penalized, lam)
            if kkt <= kkt_tol:
                return a, it, True, kkt
            if change == 0.0:
                break
    kkt = kkt_gram(gram, c, a, starts, sizes, penalized, lam)
    return a, it, kkt <= kkt_tol, kkt
