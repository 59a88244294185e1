# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled tree kernel.  Same contract and stream usage as ``_pykernels``."""
import numpy as np

from .rng import StreamFactory

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport ceil, exp, lgamma, sqrt, INFINITY
from libc.stdint cimport int64_t
from libc.stdlib cimport free, malloc, realloc
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport random_standard_exponential, random_standard_normal

cnp.import_array()

cdef double MAX_DRAW = 9007199254740992.0


cdef struct Buf:
    double *a
    double *b
    signed char *k
    Py_ssize_t n
    Py_ssize_t cap


cdef int buf_push(Buf *buf, double a, double b, signed char k) except -1 nogil:
    cdef Py_ssize_t cap
    if buf.n == buf.cap:
        cap = 2 * buf.cap if buf.cap else 64
        buf.a = <double *> realloc(buf.a, cap * sizeof(double))
        buf.b = <double *> realloc(buf.b, cap * sizeof(double))
        buf.k = <signed char *> realloc(buf.k, cap * sizeof(signed char))
        if buf.a == NULL or buf.b == NULL or buf.k == NULL:
            with gil:
                raise MemoryError()
        buf.cap = cap
    buf.a[buf.n] = a
    buf.b[buf.n] = b
    buf.k[buf.n] = k
    buf.n += 1
    return 0


cdef void buf_free(Buf *buf) noexcept nogil:
    free(buf.a)
    free(buf.b)
    free(buf.k)


cdef inline double tail(double n, double a, double log_norm) noexcept nogil:
    return exp(lgamma(n - a) - lgamma(n + 1.0) - log_norm)


cdef double draw_offspring(bitgen_t *bg, const double[::1] cdf, double tail_alpha,
                           double log_norm) noexcept nogil:
    cdef double u = bg.next_double(bg.state)
    cdef Py_ssize_t size = cdf.shape[0]
    cdef Py_ssize_t lo, hi, mid
    cdef double flo, fhi, fmid, q, a
    if u < cdf[size - 1] or tail_alpha == 0.0:
        lo = -1
        hi = size - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if cdf[mid] > u:
                hi = mid
            else:
                lo = mid
        return <double> hi
    q = 1.0 - u
    a = tail_alpha - 1.0
    flo = <double> (size - 1)
    fhi = <double> (2 * size)
    while tail(fhi, a, log_norm) >= q:
        flo = fhi
        fhi = 2.0 * fhi
        if fhi > MAX_DRAW:
            return MAX_DRAW
    while fhi - flo > 1.0:
        fmid = <double> (<int64_t> ((flo + fhi) / 2.0))
        if tail(fmid, a, log_norm) < q:
            fhi = fmid
        else:
            flo = fmid
    return fhi


cdef int bridge_segment(bitgen_t *bg, double x0, double length, double lo, double hi,
                        double dt, Buf *scratch, double *x_out, double *s_out) except -1 nogil:
    """Returns 1 on exit (x snapped, s = step midpoint), 0 otherwise."""
    cdef Py_ssize_t m = <Py_ssize_t> ceil(length / dt)
    cdef Py_ssize_t i
    cdef double last, h, x, xn, s, pa, pb, u
    if m < 1:
        m = 1
    last = length - (m - 1) * dt
    if last <= 0.0 and m > 1:
        m -= 1
        last = length - (m - 1) * dt
    scratch.n = 0
    for i in range(m):
        buf_push(scratch, random_standard_normal(bg), 0.0, 0)
    for i in range(m):
        scratch.b[i] = bg.next_double(bg.state)
    x = x0
    s = 0.0
    for i in range(m):
        h = last if i == m - 1 else dt
        xn = x + sqrt(h) * scratch.a[i]
        pa = exp(-2.0 * (x - lo) * (xn - lo) / h)
        if pa > 1.0:
            pa = 1.0
        pb = exp(-2.0 * (x - hi) * (xn - hi) / h)
        if pb > 1.0:
            pb = 1.0
        u = scratch.b[i]
        if u < pa + pb - pa * pb:
            x_out[0] = lo if u < pa else hi
            s_out[0] = s + 0.5 * h
            return 1
        x = xn
        s = s + h
    x_out[0] = x
    s_out[0] = length
    return 0


cdef int one_tree(bitgen_t *bg, double x0, double horizon, double rate,
                  const double[::1] cdf, long fixed_n, double tail_alpha, double log_norm,
                  double lo, double hi, bint bounded, double dt, long max_particles,
                  bint diffuse, Buf *stack, Buf *exits, Buf *scratch) except -1 nogil:
    """Returns 1 on success, 0 on explosion."""
    cdef double x, r, holding, seg, xo, so, kd
    cdef long j, k
    stack.n = 0
    buf_push(stack, x0, horizon, 0)
    while stack.n > 0:
        stack.n -= 1
        x = stack.a[stack.n]
        r = stack.b[stack.n]
        if rate > 0.0:
            holding = random_standard_exponential(bg) / rate
        else:
            holding = INFINITY
        seg = holding if holding < r else r
        if not diffuse:
            pass
        elif bounded:
            if bridge_segment(bg, x, seg, lo, hi, dt, scratch, &xo, &so):
                buf_push(exits, xo, horizon - r + so, 1)
                continue
            x = xo
        else:
            x = x + sqrt(seg) * random_standard_normal(bg)
        if holding >= r:
            buf_push(exits, x, horizon, 0)
            continue
        if fixed_n >= 0:
            kd = <double> fixed_n
        else:
            kd = draw_offspring(bg, cdf, tail_alpha, log_norm)
        if <double> stack.n + kd > <double> max_particles:
            return 0
        k = <long> kd
        r = r - holding
        for j in range(k):
            buf_push(stack, x, r, 0)
    return 1


def simulate_forest(seed, Py_ssize_t start, Py_ssize_t stop, double x0, double horizon,
                    double rate, table, double lo, double hi, bint bounded, double dt,
                    long max_particles, bint diffuse=True):
    cdef Py_ssize_t n = stop - start, j, i, before
    cdef const double[::1] cdf = np.ascontiguousarray(table.cdf, dtype=np.float64)
    cdef long fixed_n = table.fixed_n
    cdef double tail_alpha = table.tail_alpha
    cdef double log_norm = table.log_norm
    cdef Buf stack, exits, scratch
    cdef bitgen_t *bg
    cdef int ok
    cdef double[::1] xs_v, ts_v
    cdef signed char[::1] kinds_v
    stack.a = stack.b = NULL; stack.k = NULL; stack.n = stack.cap = 0
    exits.a = exits.b = NULL; exits.k = NULL; exits.n = exits.cap = 0
    scratch.a = scratch.b = NULL; scratch.k = NULL; scratch.n = scratch.cap = 0
    counts = np.zeros(n, dtype=np.int64)
    exploded = np.zeros(n, dtype=bool)
    cdef int64_t[::1] counts_v = counts
    cdef cnp.npy_bool[::1] exploded_v = exploded
    factory = StreamFactory()
    reset = factory.reset
    bg = <bitgen_t *> PyCapsule_GetPointer(factory.bit_generator.capsule, "BitGenerator")
    seed = int(seed)
    try:
        for j in range(n):
            reset(seed, start + j)
            before = exits.n
            with nogil:
                ok = one_tree(bg, x0, horizon, rate, cdf, fixed_n, tail_alpha, log_norm,
                              lo, hi, bounded, dt, max_particles, diffuse,
                              &stack, &exits, &scratch)
            if ok:
                counts_v[j] = exits.n - before
            else:
                exits.n = before
                exploded_v[j] = True
        xs = np.empty(exits.n, dtype=np.float64)
        ts = np.empty(exits.n, dtype=np.float64)
        kinds = np.empty(exits.n, dtype=np.int8)
        xs_v = xs
        ts_v = ts
        kinds_v = kinds
        for i in range(exits.n):
            xs_v[i] = exits.a[i]
            ts_v[i] = exits.b[i]
            kinds_v[i] = exits.k[i]
    finally:
        buf_free(&stack)
        buf_free(&exits)
        buf_free(&scratch)
    return counts, xs, ts, kinds, exploded
