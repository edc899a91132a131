# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled nodewise Monge-Ampere inversion and Gauss-Seidel sweeps.

Arrays are flat views of the full lattice array; neighbours are reached by
flat offsets.  Every routine mirrors ``_reference.py`` operation for
operation.
"""

from libc.math cimport sqrt, exp, fabs, INFINITY, NAN
from libc.stdint cimport int64_t
from cython.parallel cimport prange

cdef enum:
    MAXDIR = 64
    MAX_BRACKET = 200

# exp() argument cap; e^700 is finite and dwarfs any grid density
cdef double EXP_CAP = 700.0


cdef inline double ma_local(double s, const double* a, const double* wgt,
                            const int64_t* frames, int nframes, int n,
                            double cn) noexcept nogil:
    cdef double best, fp, fq, prod
    cdef int k
    cdef int64_t p, q
    if n == 1:
        return 4.0 * (a[0] - s) / wgt[0]
    best = INFINITY
    for k in range(nframes):
        p = frames[2 * k]
        q = frames[2 * k + 1]
        fp = (a[p] - s) / wgt[p]
        if fp < 0.0:
            fp = 0.0
        fq = (a[q] - s) / wgt[q]
        if fq < 0.0:
            fq = 0.0
        prod = fp * fq
        if prod < best:
            best = prod
    return cn * best


cdef inline double const_solve(double F, const double* a, const double* wgt,
                               const int64_t* frames, int nframes, int n,
                               double cn) noexcept nogil:
    cdef double s, ap, aq, lo, d, K, t, sk
    cdef int k
    cdef int64_t p, q
    if n == 1:
        return a[0] - F * wgt[0] / 4.0
    s = INFINITY
    for k in range(nframes):
        p = frames[2 * k]
        q = frames[2 * k + 1]
        ap = a[p]
        aq = a[q]
        lo = ap if ap < aq else aq
        d = fabs(ap - aq)
        K = F * wgt[p] * wgt[q] / cn
        if K > 0.0:
            t = 2.0 * K / (d + sqrt(d * d + 4.0 * K))
        else:
            t = 0.0
        sk = lo - t
        if sk < s:
            s = sk
    return s


cdef inline double penalized_rhs(double s, double fv, double gv, double u0v,
                                 double jpen) noexcept nogil:
    cdef double arg, pv
    if gv <= 0.0:
        return fv
    arg = jpen * (s - u0v)
    if arg > EXP_CAP:
        arg = EXP_CAP
    pv = gv * exp(arg)
    return pv if pv > fv else fv


cdef inline double penalized_solve(double fv, double gv, double u0v, double jpen,
                                   double tol_local, const double* a,
                                   const double* wgt, const int64_t* frames,
                                   int nframes, int n, double cn) noexcept nogil:
    cdef double hi, lo, x, d, mid
    cdef int it
    hi = const_solve(fv, a, wgt, frames, nframes, n, cn)
    if gv <= 0.0:
        return hi
    if ma_local(hi, a, wgt, frames, nframes, n, cn) - penalized_rhs(hi, fv, gv, u0v, jpen) >= 0.0:
        return hi
    d = tol_local
    x = hi - d
    it = 0
    while ma_local(x, a, wgt, frames, nframes, n, cn) - penalized_rhs(x, fv, gv, u0v, jpen) < 0.0:
        hi = x
        d = 2.0 * d
        x = hi - d
        it = it + 1
        if it > MAX_BRACKET:
            return NAN
    lo = x
    while hi - lo > tol_local:
        mid = 0.5 * (lo + hi)
        if ma_local(mid, a, wgt, frames, nframes, n, cn) - penalized_rhs(mid, fv, gv, u0v, jpen) >= 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


cdef inline double node_value(const double* w, int64_t node, const int64_t* dir_off,
                              int ndir, const double* wgt, const int64_t* frames,
                              int nframes, int n, double cn, int kind,
                              const double* f, const double* g, const double* u0,
                              double jpen, const double* obst, int use_obst,
                              double tol_local) noexcept nogil:
    cdef double a[MAXDIR]
    cdef int dd
    cdef int64_t o1, o2
    cdef double s
    for dd in range(ndir):
        o1 = dir_off[2 * dd]
        o2 = dir_off[2 * dd + 1]
        a[dd] = 0.25 * (w[node + o1] + w[node - o1] + w[node + o2] + w[node - o2])
    if kind == 0:
        s = const_solve(f[node], a, wgt, frames, nframes, n, cn)
    else:
        s = penalized_solve(f[node], g[node], u0[node], jpen, tol_local,
                            a, wgt, frames, nframes, n, cn)
    if use_obst and obst[node] < s:
        s = obst[node]
    return s


def _check(int ndir):
    if ndir > MAXDIR:
        raise ValueError(f"at most {MAXDIR} stencil directions are supported")


def apply_local(double[::1] w, const int64_t[::1] nodes, double[::1] out,
                const int64_t[:, ::1] dir_off, const double[::1] wgt,
                const int64_t[:, ::1] frames, int n, double cn, int kind,
                const double[::1] f, const double[::1] g, const double[::1] u0,
                double jpen, const double[::1] obst, bint use_obst,
                double tol_local):
    """out[k] = nodewise inversion at nodes[k], reading w only (Jacobi form)."""
    cdef Py_ssize_t k, m = nodes.shape[0]
    cdef int ndir = dir_off.shape[0]
    cdef int nframes = frames.shape[0]
    _check(ndir)
    with nogil:
        for k in range(m):
            out[k] = node_value(&w[0], nodes[k], &dir_off[0, 0], ndir, &wgt[0],
                                &frames[0, 0], nframes, n, cn, kind, &f[0], &g[0],
                                &u0[0], jpen, &obst[0], use_obst, tol_local)


def sweep(double[::1] w, const int64_t[::1] nodes, const int64_t[::1] color_ptr,
          const int64_t[:, ::1] dir_off, const double[::1] wgt,
          const int64_t[:, ::1] frames, int n, double cn, int kind,
          const double[::1] f, const double[::1] g, const double[::1] u0,
          double jpen, const double[::1] obst, bint use_obst, double tol_local,
          int mode, double[::1] buf):
    """One Gauss-Seidel pass over all colour classes, updating w in place.

    mode 0 visits the nodes of each colour one after another; mode 1
    evaluates a whole colour class from the current values (in parallel when
    OpenMP is available) and then writes it.  Nodes of one colour are not
    stencil neighbours, so both modes produce identical bits.

    Returns (max |update|, max increase, number of failed local solves).
    """
    cdef Py_ssize_t c, k, start, end
    cdef int ncol = color_ptr.shape[0] - 1
    cdef int ndir = dir_off.shape[0]
    cdef int nframes = frames.shape[0]
    cdef int64_t node
    cdef double s, du, maxupd = 0.0, maxinc = 0.0
    cdef Py_ssize_t fails = 0
    _check(ndir)
    with nogil:
        for c in range(ncol):
            start = color_ptr[c]
            end = color_ptr[c + 1]
            if mode == 0:
                for k in range(start, end):
                    node = nodes[k]
                    s = node_value(&w[0], node, &dir_off[0, 0], ndir, &wgt[0],
                                   &frames[0, 0], nframes, n, cn, kind, &f[0], &g[0],
                                   &u0[0], jpen, &obst[0], use_obst, tol_local)
                    if s != s:
                        fails = fails + 1
                        continue
                    du = s - w[node]
                    if du > maxinc:
                        maxinc = du
                    du = fabs(du)
                    if du > maxupd:
                        maxupd = du
                    w[node] = s
            else:
                for k in prange(start, end, schedule="static"):
                    buf[k] = node_value(&w[0], nodes[k], &dir_off[0, 0], ndir, &wgt[0],
                                        &frames[0, 0], nframes, n, cn, kind, &f[0], &g[0],
                                        &u0[0], jpen, &obst[0], use_obst, tol_local)
                for k in range(start, end):
                    node = nodes[k]
                    s = buf[k]
                    if s != s:
                        fails = fails + 1
                        continue
                    du = s - w[node]
                    if du > maxinc:
                        maxinc = du
                    du = fabs(du)
                    if du > maxupd:
                        maxupd = du
                    w[node] = s
    return maxupd, maxinc, fails
