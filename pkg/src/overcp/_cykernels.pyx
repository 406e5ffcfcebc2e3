# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled tensor kernels.

Semantics and layout are identical to ``_kernels_numpy``; these fuse the
inner loops into C to cut temporaries and per-call dispatch overhead in the
descent loop.  All kernels are batched over the m columns with the column
index innermost, so every inner loop runs over contiguous memory and the
target tensor is streamed exactly once.  Hot loops index through raw
pointers so the C compiler sees unit strides and can vectorize.  Callers
(``overcp.kernels``) allocate outputs and the (d**(l-1), m) scratch block.
"""


def weighted_outer_sum(double[:, ::1] U, double[::1] w, int l,
                       double[::1] out, double[:, ::1] kr,
                       double[:, ::1] ut):
    """out[:] = sum_j w[j] * u_j^{outer l}.

    ``kr`` is (d**(l-1), m) scratch holding the Khatri-Rao power, ``ut``
    is (m, d) scratch for a transposed copy of U.
    """
    cdef Py_ssize_t d = U.shape[0]
    cdef Py_ssize_t m = U.shape[1]
    cdef double *up = &U[0, 0]
    cdef double *wp = &w[0]
    cdef double *outp = &out[0]
    cdef double *krp = &kr[0, 0]
    cdef double *utp = &ut[0, 0]
    cdef double *src
    cdef double *dst
    cdef double *row
    cdef Py_ssize_t size, t, a, b, j, k
    cdef double v

    for a in range(d):
        for j in range(m):
            utp[j * d + a] = up[a * m + j]

    for k in range(d * m):
        krp[k] = up[k]
    size = d
    for k in range(l - 2):
        # grow (size, m) -> (size*d, m) in place, tail first; row t feeds
        # rows t*d .. t*d+d-1, and only collides with itself at t=0, b=0,
        # which writing b in descending order leaves for last
        for t in range(size - 1, -1, -1):
            src = krp + t * m
            for b in range(d - 1, -1, -1):
                dst = krp + (t * d + b) * m
                row = up + b * m
                for j in range(m):
                    dst[j] = src[j] * row[j]
        size = size * d

    # out.reshape(size, d)[t, b] = sum_j (kr[t, j] * w[j]) * U[b, j]
    for t in range(size):
        dst = outp + t * d
        for b in range(d):
            dst[b] = 0.0
        src = krp + t * m
        for j in range(m):
            v = src[j] * wp[j]
            row = utp + j * d
            for b in range(d):
                dst[b] += v * row[b]


cdef void _contract_first_modes(double[::1] T, double[:, ::1] U, int l,
                                double[:, ::1] kr) noexcept:
    """kr[:d, :] <- T contracted with every column over modes 0..l-2.

    Streams T once; kr starts as the (d**(l-1), m) first-mode contraction
    and is folded in place down to (d, m).
    """
    cdef Py_ssize_t d = U.shape[0]
    cdef Py_ssize_t m = U.shape[1]
    cdef double *tp = &T[0]
    cdef double *up = &U[0, 0]
    cdef double *krp = &kr[0, 0]
    cdef double *src
    cdef double *dst
    cdef double *row
    cdef Py_ssize_t size = 1
    cdef Py_ssize_t a, r, j, k, r0, rb
    cdef Py_ssize_t tile = 16384 // (m * 8)
    cdef double ta

    if tile < 1:
        tile = 1
    for k in range(l - 1):
        size = size * d

    # first mode: kr[r, j] = sum_a T[a*size + r] * U[a, j], in row tiles
    # small enough to stay cache-resident across the whole a sweep (T is
    # still streamed exactly once overall)
    for r0 in range(0, size, tile):
        rb = size - r0
        if rb > tile:
            rb = tile
        for r in range(r0, r0 + rb):
            ta = tp[r]
            dst = krp + r * m
            for j in range(m):
                dst[j] = ta * up[j]
        for a in range(1, d):
            src = tp + a * size
            row = up + a * m
            for r in range(r0, r0 + rb):
                ta = src[r]
                dst = krp + r * m
                for j in range(m):
                    dst[j] += ta * row[j]

    # remaining modes fold kr in place: rows a*size + r (a >= 1) are only
    # read after row r is rewritten with its own a = 0 term
    for k in range(l - 2):
        size = size // d
        for r in range(size):
            dst = krp + r * m
            for j in range(m):
                dst[j] = dst[j] * up[j]
        for a in range(1, d):
            row = up + a * m
            for r in range(size):
                dst = krp + r * m
                src = krp + (a * size + r) * m
                for j in range(m):
                    dst[j] += src[j] * row[j]


def contract_leave_one_batch(double[::1] T, double[:, ::1] U, int l,
                             double[:, ::1] out, double[:, ::1] kr):
    """out[:, j] = T(u_j^{l-1}, I); out is d x m, kr is (d**(l-1), m)."""
    cdef Py_ssize_t d = U.shape[0]
    cdef Py_ssize_t m = U.shape[1]
    cdef Py_ssize_t k

    _contract_first_modes(T, U, l, kr)
    for k in range(d * m):
        (&out[0, 0])[k] = (&kr[0, 0])[k]


def contract_full_batch(double[::1] T, double[:, ::1] U, int l,
                        double[::1] out, double[:, ::1] kr):
    """out[j] = T(u_j^{l}); kr is (d**(l-1), m) scratch (unused for l=1)."""
    cdef Py_ssize_t d = U.shape[0]
    cdef Py_ssize_t m = U.shape[1]
    cdef Py_ssize_t a, j
    cdef double s

    if l == 1:
        for j in range(m):
            s = 0.0
            for a in range(d):
                s += T[a] * U[a, j]
            out[j] = s
        return
    _contract_first_modes(T, U, l, kr)
    for j in range(m):
        s = 0.0
        for a in range(d):
            s += kr[a, j] * U[a, j]
        out[j] = s
