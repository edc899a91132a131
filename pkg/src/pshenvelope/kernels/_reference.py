"""Pure numpy implementation of the sweep kernels.

Same contract as the compiled ``_sweep`` module.  Each colour class is
processed as one vectorised Jacobi step, which is a valid Gauss-Seidel
ordering because nodes of one colour never read each other.
"""

import numpy as np

EXP_CAP = 700.0
MAX_BRACKET = 200


def _averages(w, nodes, dir_off):
    a = np.empty((dir_off.shape[0], nodes.size))
    for d, (o1, o2) in enumerate(dir_off):
        a[d] = 0.25 * (w[nodes + o1] + w[nodes - o1] + w[nodes + o2] + w[nodes - o2])
    return a


def ma_local(s, a, wgt, frames, n, cn):
    if n == 1:
        return 4.0 * (a[0] - s) / wgt[0]
    best = np.full(np.shape(s), np.inf)
    for p, q in frames:
        fp = np.maximum((a[p] - s) / wgt[p], 0.0)
        fq = np.maximum((a[q] - s) / wgt[q], 0.0)
        best = np.minimum(best, fp * fq)
    return cn * best


def const_solve(F, a, wgt, frames, n, cn):
    if n == 1:
        return a[0] - F * wgt[0] / 4.0
    s = np.full(a.shape[1], np.inf)
    for p, q in frames:
        ap, aq = a[p], a[q]
        lo = np.minimum(ap, aq)
        d = np.abs(ap - aq)
        K = F * wgt[p] * wgt[q] / cn
        with np.errstate(invalid="ignore", divide="ignore"):
            t = np.where(K > 0.0, 2.0 * K / (d + np.sqrt(d * d + 4.0 * K)), 0.0)
        s = np.minimum(s, lo - t)
    return s


def penalized_rhs(s, f, g, u0, jpen):
    arg = np.minimum(jpen * (s - u0), EXP_CAP)
    pv = g * np.exp(arg)
    return np.where(g > 0.0, np.maximum(pv, f), f)


def penalized_solve(f, g, u0, jpen, tol_local, a, wgt, frames, n, cn):
    hi = const_solve(f, a, wgt, frames, n, cn)

    def G(x, idx):
        sub = a[:, idx]
        return ma_local(x, sub, wgt, frames, n, cn) - penalized_rhs(x, f[idx], g[idx], u0[idx], jpen)

    out = hi.copy()
    idx = np.flatnonzero(g > 0.0)
    if idx.size:
        idx = idx[G(hi[idx], idx) < 0.0]
    if idx.size == 0:
        return out
    hi_a = hi[idx]
    d = np.full(idx.size, tol_local)
    x = hi_a - d
    pending = G(x, idx) < 0.0
    it = 0
    while pending.any():
        hi_a = np.where(pending, x, hi_a)
        d = np.where(pending, 2.0 * d, d)
        x = np.where(pending, hi_a - d, x)
        it += 1
        if it > MAX_BRACKET:
            bad = pending.copy()
            break
        sub = np.flatnonzero(pending)
        still = G(x[sub], idx[sub]) < 0.0
        pending = np.zeros_like(pending)
        pending[sub] = still
    else:
        bad = np.zeros(idx.size, dtype=bool)
    lo_a = x
    open_ = (hi_a - lo_a > tol_local) & ~bad
    while open_.any():
        sub = np.flatnonzero(open_)
        mid = 0.5 * (lo_a[sub] + hi_a[sub])
        up = G(mid, idx[sub]) >= 0.0
        lo_a[sub] = np.where(up, mid, lo_a[sub])
        hi_a[sub] = np.where(up, hi_a[sub], mid)
        open_[sub] = hi_a[sub] - lo_a[sub] > tol_local
    res = 0.5 * (lo_a + hi_a)
    res[bad] = np.nan
    out[idx] = res
    return out


def node_values(w, nodes, dir_off, wgt, frames, n, cn, kind, f, g, u0, jpen, obst, use_obst, tol_local):
    a = _averages(w, nodes, dir_off)
    if kind == 0:
        s = const_solve(f[nodes], a, wgt, frames, n, cn)
    else:
        s = penalized_solve(f[nodes], g[nodes], u0[nodes], jpen, tol_local, a, wgt, frames, n, cn)
    if use_obst:
        s = np.where(obst[nodes] < s, obst[nodes], s)
    return s


def apply_local(w, nodes, out, dir_off, wgt, frames, n, cn, kind, f, g, u0, jpen, obst, use_obst, tol_local):
    out[:] = node_values(w, nodes, dir_off, wgt, frames, n, cn, kind, f, g, u0, jpen, obst, use_obst, tol_local)


def sweep(w, nodes, color_ptr, dir_off, wgt, frames, n, cn, kind, f, g, u0, jpen, obst, use_obst,
          tol_local, mode, buf):
    maxupd = 0.0
    maxinc = 0.0
    fails = 0
    for c in range(len(color_ptr) - 1):
        blk = nodes[color_ptr[c] : color_ptr[c + 1]]
        if blk.size == 0:
            continue
        s = node_values(w, blk, dir_off, wgt, frames, n, cn, kind, f, g, u0, jpen, obst, use_obst, tol_local)
        ok = ~np.isnan(s)
        fails += int(blk.size - np.count_nonzero(ok))
        if ok.any():
            du = s[ok] - w[blk[ok]]
            maxupd = max(maxupd, float(np.max(np.abs(du))))
            maxinc = max(maxinc, float(np.max(du)))
        w[blk[ok]] = s[ok]
    return maxupd, maxinc, fails
