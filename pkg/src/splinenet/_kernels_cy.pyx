# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled spline hot kernels; same surface as splinenet._kernels_py."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND_NAME = "cython"


cdef Py_ssize_t _span(const double[::1] knots, Py_ssize_t p, Py_ssize_t nb, double x) noexcept nogil:
    cdef Py_ssize_t lo, hi, mid
    if x >= knots[nb]:
        return nb - 1
    if x <= knots[p]:
        return p
    lo = p
    hi = nb
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        if knots[mid] <= x:
            lo = mid
        else:
            hi = mid
    return lo


cdef void _basis_funs(const double[::1] knots, Py_ssize_t p, Py_ssize_t s, double x,
                      double* vals, double* left, double* right) noexcept nogil:
    cdef Py_ssize_t j, r
    cdef double saved, temp, denom
    # clamped endpoints interpolate exactly; the recursion can drift by an
    # ulp there when interior knots are not representable
    if x <= knots[0] or x >= knots[knots.shape[0] - 1]:
        for j in range(p + 1):
            vals[j] = 0.0
        vals[0 if x <= knots[0] else p] = 1.0
        return
    vals[0] = 1.0
    for j in range(1, p + 1):
        left[j] = x - knots[s + 1 - j]
        right[j] = knots[s + j] - x
        saved = 0.0
        for r in range(j):
            denom = right[r + 1] + left[j - r]
            temp = vals[r] / denom if denom != 0.0 else 0.0
            vals[r] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        vals[j] = saved


cdef void _deriv_from_lower(const double[::1] knots, Py_ssize_t p, Py_ssize_t s,
                            const double* lo, double* dvals) noexcept nogil:
    # lo holds the p values of B_{p-1, s-p+1+j}; combine into the p+1 derivatives.
    cdef Py_ssize_t j, n
    cdef double a, b, d1, d2, acc
    for j in range(p + 1):
        n = s - p + j
        a = lo[j - 1] if j >= 1 else 0.0
        b = lo[j] if j <= p - 1 else 0.0
        d1 = knots[n + p] - knots[n]
        d2 = knots[n + p + 1] - knots[n + 1]
        acc = 0.0
        if d1 != 0.0:
            acc += a / d1
        if d2 != 0.0:
            acc -= b / d2
        dvals[j] = p * acc


def find_span_batch(const double[::1] knots, Py_ssize_t degree, x):
    cdef cnp.ndarray[double, ndim=1] xa = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t k = xa.shape[0]
    cdef Py_ssize_t nb = knots.shape[0] - degree - 1
    cdef cnp.ndarray[cnp.int64_t, ndim=1] span = np.empty(k, dtype=np.int64)
    cdef Py_ssize_t i
    for i in range(k):
        span[i] = _span(knots, degree, nb, xa[i])
    return span


def basis_batch(const double[::1] knots, Py_ssize_t degree, x):
    cdef cnp.ndarray[double, ndim=1] xa = np.ascontiguousarray(x, dtype=np.float64).reshape(-1)
    cdef Py_ssize_t k = xa.shape[0]
    cdef Py_ssize_t nb = knots.shape[0] - degree - 1
    cdef cnp.ndarray[cnp.int64_t, ndim=1] first = np.empty(k, dtype=np.int64)
    cdef cnp.ndarray[double, ndim=2] vals = np.empty((k, degree + 1), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] scratch = np.empty(2 * (degree + 1), dtype=np.float64)
    cdef double* left = &scratch[0]
    cdef double* right = &scratch[degree + 1]
    cdef Py_ssize_t i, s
    with nogil:
        for i in range(k):
            s = _span(knots, degree, nb, xa[i])
            first[i] = s - degree
            _basis_funs(knots, degree, s, xa[i], &vals[i, 0], left, right)
    return first, vals


def basis_deriv_batch(const double[::1] knots, Py_ssize_t degree, x):
    if degree < 1:
        raise ValueError("basis derivative requires degree >= 1")
    cdef cnp.ndarray[double, ndim=1] xa = np.ascontiguousarray(x, dtype=np.float64).reshape(-1)
    cdef Py_ssize_t k = xa.shape[0]
    cdef Py_ssize_t nb = knots.shape[0] - degree - 1
    cdef cnp.ndarray[cnp.int64_t, ndim=1] first = np.empty(k, dtype=np.int64)
    cdef cnp.ndarray[double, ndim=2] vals = np.empty((k, degree + 1), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] dvals = np.empty((k, degree + 1), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] scratch = np.empty(3 * (degree + 1), dtype=np.float64)
    cdef double* left = &scratch[0]
    cdef double* right = &scratch[degree + 1]
    cdef double* lo = &scratch[2 * (degree + 1)]
    cdef Py_ssize_t i, s
    with nogil:
        for i in range(k):
            s = _span(knots, degree, nb, xa[i])
            first[i] = s - degree
            _basis_funs(knots, degree, s, xa[i], &vals[i, 0], left, right)
            _basis_funs(knots, degree - 1, s, xa[i], lo, left, right)
            _deriv_from_lower(knots, degree, s, lo, &dvals[i, 0])
    return first, vals, dvals


def lcn_apply(const double[::1] knots, Py_ssize_t degree,
              const double[:, ::1] coeffs, const double[:, ::1] z):
    cdef Py_ssize_t b = z.shape[0], m = z.shape[1]
    cdef Py_ssize_t nb = knots.shape[0] - degree - 1
    cdef cnp.ndarray[double, ndim=2] h = np.empty((b, m), dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=2] first = np.empty((b, m), dtype=np.int64)
    cdef cnp.ndarray[double, ndim=3] vals = np.empty((b, m, degree + 1), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] scratch = np.empty(2 * (degree + 1), dtype=np.float64)
    cdef double* left = &scratch[0]
    cdef double* right = &scratch[degree + 1]
    cdef Py_ssize_t ib, im, t, s
    cdef double acc
    with nogil:
        for ib in range(b):
            for im in range(m):
                s = _span(knots, degree, nb, z[ib, im])
                first[ib, im] = s - degree
                _basis_funs(knots, degree, s, z[ib, im], &vals[ib, im, 0], left, right)
                acc = 0.0
                for t in range(degree + 1):
                    acc += coeffs[im, s - degree + t] * vals[ib, im, t]
                h[ib, im] = acc
    return h, first, vals


def lcn_dh_dz(const double[::1] knots, Py_ssize_t degree,
              const double[:, ::1] coeffs, const double[:, ::1] z):
    if degree < 1:
        raise ValueError("basis derivative requires degree >= 1")
    cdef Py_ssize_t b = z.shape[0], m = z.shape[1]
    cdef Py_ssize_t nb = knots.shape[0] - degree - 1
    cdef cnp.ndarray[double, ndim=2] out = np.empty((b, m), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] scratch = np.empty(4 * (degree + 1), dtype=np.float64)
    cdef double* left = &scratch[0]
    cdef double* right = &scratch[degree + 1]
    cdef double* lo = &scratch[2 * (degree + 1)]
    cdef double* dv = &scratch[3 * (degree + 1)]
    cdef Py_ssize_t ib, im, t, s
    cdef double acc
    with nogil:
        for ib in range(b):
            for im in range(m):
                s = _span(knots, degree, nb, z[ib, im])
                _basis_funs(knots, degree - 1, s, z[ib, im], lo, left, right)
                _deriv_from_lower(knots, degree, s, lo, dv)
                acc = 0.0
                for t in range(degree + 1):
                    acc += coeffs[im, s - degree + t] * dv[t]
                out[ib, im] = acc
    return out


def coeff_grad(const cnp.int64_t[:, ::1] first, const double[:, :, ::1] vals,
               const double[:, ::1] dh, Py_ssize_t num_basis):
    cdef Py_ssize_t b = vals.shape[0], m = vals.shape[1], width = vals.shape[2]
    cdef cnp.ndarray[double, ndim=2] dcoeffs = np.zeros((m, num_basis), dtype=np.float64)
    cdef Py_ssize_t ib, im, t
    cdef double g
    with nogil:
        for ib in range(b):
            for im in range(m):
                g = dh[ib, im]
                for t in range(width):
                    dcoeffs[im, first[ib, im] + t] += g * vals[ib, im, t]
    return dcoeffs


def kan_apply(const double[::1] knots, Py_ssize_t degree,
              const double[:, :, ::1] coeffs, const double[:, ::1] base_w,
              const double[:, ::1] x_spline, const double[:, ::1] x_raw):
    cdef Py_ssize_t b = x_spline.shape[0], mi = x_spline.shape[1]
    cdef Py_ssize_t mo = coeffs.shape[0]
    cdef Py_ssize_t nb = knots.shape[0] - degree - 1
    cdef cnp.ndarray[double, ndim=2] h = np.zeros((b, mo), dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=2] first = np.empty((b, mi), dtype=np.int64)
    cdef cnp.ndarray[double, ndim=3] vals = np.empty((b, mi, degree + 1), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] scratch = np.empty(2 * (degree + 1), dtype=np.float64)
    cdef double* left = &scratch[0]
    cdef double* right = &scratch[degree + 1]
    cdef Py_ssize_t ib, ii, io, t, s, f
    cdef double acc
    with nogil:
        for ib in range(b):
            for ii in range(mi):
                s = _span(knots, degree, nb, x_spline[ib, ii])
                first[ib, ii] = s - degree
                _basis_funs(knots, degree, s, x_spline[ib, ii], &vals[ib, ii, 0], left, right)
            for io in range(mo):
                acc = 0.0
                for ii in range(mi):
                    f = first[ib, ii]
                    for t in range(degree + 1):
                        acc += coeffs[io, ii, f + t] * vals[ib, ii, t]
                    acc += base_w[io, ii] * x_raw[ib, ii]
                h[ib, io] = acc
    return h, first, vals


def kan_backward(const double[::1] knots, Py_ssize_t degree,
                 const double[:, :, ::1] coeffs, const double[:, ::1] base_w,
                 const double[:, ::1] x_spline, const double[:, ::1] x_raw,
                 const cnp.int64_t[:, ::1] first, const double[:, :, ::1] vals,
                 const double[:, ::1] live, const double[:, ::1] dh):
    cdef Py_ssize_t b = x_spline.shape[0], mi = x_spline.shape[1]
    cdef Py_ssize_t mo = coeffs.shape[0]
    cdef Py_ssize_t num_basis = coeffs.shape[2]
    cdef cnp.ndarray[double, ndim=2] dx = np.zeros((b, mi), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=3] dcoeffs = np.zeros((mo, mi, num_basis), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] dbase_w = np.zeros((mo, mi), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=3] dvals = np.empty((b, mi, degree + 1), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] scratch = np.empty(3 * (degree + 1), dtype=np.float64)
    cdef double* left = &scratch[0]
    cdef double* right = &scratch[degree + 1]
    cdef double* lo = &scratch[2 * (degree + 1)]
    cdef Py_ssize_t ib, ii, io, t, s, f
    cdef double g, spline_dx
    cdef Py_ssize_t nb = knots.shape[0] - degree - 1
    with nogil:
        for ib in range(b):
            for ii in range(mi):
                s = _span(knots, degree, nb, x_spline[ib, ii])
                _basis_funs(knots, degree - 1, s, x_spline[ib, ii], lo, left, right)
                _deriv_from_lower(knots, degree, s, lo, &dvals[ib, ii, 0])
            for io in range(mo):
                g = dh[ib, io]
                for ii in range(mi):
                    f = first[ib, ii]
                    spline_dx = 0.0
                    for t in range(degree + 1):
                        dcoeffs[io, ii, f + t] += g * vals[ib, ii, t]
                        spline_dx += coeffs[io, ii, f + t] * dvals[ib, ii, t]
                    dbase_w[io, ii] += g * x_raw[ib, ii]
                    dx[ib, ii] += g * (spline_dx * live[ib, ii] + base_w[io, ii])
    return dx, dcoeffs, dbase_w
