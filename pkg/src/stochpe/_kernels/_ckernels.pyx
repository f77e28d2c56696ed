# cython: language_level=3, boundscheck=False, cdivision=True
"""Compiled fused kernels; see ``_pykernels`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport pow, sqrt

cnp.import_array()


cdef inline double _halfpow(double s, int n, int frac, double e) nogil:
    """``s ** (n + frac / 2)`` by repeated products; ``frac == 2`` falls back to ``pow``."""
    cdef double r = 1.0
    cdef int j
    if frac == 2:
        return pow(s, e)
    for j in range(n):
        r = r * s
    if frac == 1:
        r = r * sqrt(s)
    return r


def _split(double p):
    if p >= 0 and p == <int>p:
        return <int>p // 2, <int>p % 2
    return 0, 2



def flux_products(vw):
    cdef Py_ssize_t n = vw.shape[-1] * vw.shape[-2] * vw.shape[-3]
    lead = vw.shape[:-4]
    cdef Py_ssize_t nb = 1
    for s in lead:
        nb *= s
    src = np.ascontiguousarray(vw, dtype=np.float64).reshape(nb, 3, n)
    out = np.empty((nb, 5, n))
    cdef const double[:, :, ::1] a = src
    cdef double[:, :, ::1] o = out
    cdef Py_ssize_t b, i
    cdef double v1, v2, w
    with nogil:
        for b in range(nb):
            for i in range(n):
                v1 = a[b, 0, i]
                v2 = a[b, 1, i]
                w = a[b, 2, i]
                o[b, 0, i] = v1 * v1
                o[b, 1, i] = v1 * v2
                o[b, 2, i] = v2 * v2
                o[b, 3, i] = w * v1
                o[b, 4, i] = w * v2
    return out.reshape(lead + (5,) + vw.shape[-3:])


def flux_divergence(fhat, kx, ky, kz, mask):
    shape = fhat.shape[-3:]
    cdef Py_ssize_t nx = shape[0], ny = shape[1], nz = shape[2]
    lead = fhat.shape[:-4]
    cdef Py_ssize_t nb = 1
    for s in lead:
        nb *= s
    f = np.ascontiguousarray(fhat, dtype=np.complex128).reshape(nb, 5, nx, ny, nz)
    out = np.empty((nb, 2, nx, ny, nz), dtype=np.complex128)
    cdef const double[:, :, :, :, :, ::1] fv = f.view(np.float64).reshape(nb, 5, nx, ny, nz, 2)
    cdef double[:, :, :, :, :, ::1] ov = out.view(np.float64).reshape(nb, 2, nx, ny, nz, 2)
    cdef const double[::1] kxv = np.ascontiguousarray(np.ravel(kx), dtype=np.float64)
    cdef const double[::1] kyv = np.ascontiguousarray(np.ravel(ky), dtype=np.float64)
    cdef const double[::1] kzv = np.ascontiguousarray(np.ravel(kz), dtype=np.float64)
    cdef const cnp.uint8_t[:, :, ::1] m = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef Py_ssize_t b, i, j, l
    cdef double ax, ay, az, sr, si
    with nogil:
        for b in range(nb):
            for i in range(nx):
                ax = kxv[i]
                for j in range(ny):
                    ay = kyv[j]
                    for l in range(nz):
                        if m[i, j, l]:
                            az = kzv[l]
                            sr = (ax * fv[b, 0, i, j, l, 0] + ay * fv[b, 1, i, j, l, 0]) + az * fv[b, 3, i, j, l, 0]
                            si = (ax * fv[b, 0, i, j, l, 1] + ay * fv[b, 1, i, j, l, 1]) + az * fv[b, 3, i, j, l, 1]
                            ov[b, 0, i, j, l, 0] = -si
                            ov[b, 0, i, j, l, 1] = sr
                            sr = (ax * fv[b, 1, i, j, l, 0] + ay * fv[b, 2, i, j, l, 0]) + az * fv[b, 4, i, j, l, 0]
                            si = (ax * fv[b, 1, i, j, l, 1] + ay * fv[b, 2, i, j, l, 1]) + az * fv[b, 4, i, j, l, 1]
                            ov[b, 1, i, j, l, 0] = -si
                            ov[b, 1, i, j, l, 1] = sr
                        else:
                            ov[b, 0, i, j, l, 0] = 0.0
                            ov[b, 0, i, j, l, 1] = 0.0
                            ov[b, 1, i, j, l, 0] = 0.0
                            ov[b, 1, i, j, l, 1] = 0.0
    return out.reshape(lead + (2, nx, ny, nz))


def etd_update(a, nl, noise, decay, double dt):
    shape = a.shape
    cdef Py_ssize_t n = decay.size
    cdef Py_ssize_t nb = a.size // n
    av = np.ascontiguousarray(a, dtype=np.complex128).reshape(nb, n).view(np.float64)
    out = np.empty((nb, n), dtype=np.complex128)
    cdef const double[:, ::1] x = av
    cdef double[:, ::1] o = out.view(np.float64)
    cdef const double[::1] d = np.ascontiguousarray(np.broadcast_to(decay, shape[-3:]), dtype=np.float64).ravel()
    cdef const double[:, ::1] q
    cdef const double[:, ::1] r
    cdef bint has_nl = nl is not None
    cdef bint has_noise = noise is not None
    if has_nl:
        q = np.ascontiguousarray(nl, dtype=np.complex128).reshape(nb, n).view(np.float64)
    if has_noise:
        r = np.ascontiguousarray(noise, dtype=np.complex128).reshape(nb, n).view(np.float64)
    cdef Py_ssize_t b, i
    cdef double re, im
    with nogil:
        for b in range(nb):
            for i in range(n):
                re = x[b, 2 * i]
                im = x[b, 2 * i + 1]
                if has_nl:
                    re = re - dt * q[b, 2 * i]
                    im = im - dt * q[b, 2 * i + 1]
                if has_noise:
                    re = re + r[b, 2 * i]
                    im = im + r[b, 2 * i + 1]
                o[b, 2 * i] = d[i] * re
                o[b, 2 * i + 1] = d[i] * im
    return out.reshape(shape)


def vector_power_sum(values, double p):
    src = np.ascontiguousarray(values, dtype=np.float64)
    cdef const double[:, :, ::1] a = src
    cdef Py_ssize_t nb = src.shape[0], nc = src.shape[1], n = src.shape[2]
    out = np.zeros(nb)
    cdef double[::1] o = out
    cdef Py_ssize_t b, c, i
    cdef double s, acc, half = 0.5 * p
    cdef int hn, hf
    hn, hf = _split(p)
    with nogil:
        for b in range(nb):
            acc = 0.0
            for i in range(n):
                s = 0.0
                for c in range(nc):
                    s = s + a[b, c, i] * a[b, c, i]
                acc = acc + _halfpow(s, hn, hf, half)
            o[b] = acc
    return out


def vector_abs_pow(values, double p):
    src = np.ascontiguousarray(values, dtype=np.float64)
    cdef const double[:, :, ::1] a = src
    cdef Py_ssize_t nb = src.shape[0], nc = src.shape[1], n = src.shape[2]
    out = np.empty((nb, n))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t b, c, i
    cdef double s, half = 0.5 * p
    cdef int hn, hf
    hn, hf = _split(p)
    with nogil:
        for b in range(nb):
            for i in range(n):
                s = 0.0
                for c in range(nc):
                    s = s + a[b, c, i] * a[b, c, i]
                o[b, i] = _halfpow(s, hn, hf, half)
    return out
