# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled RBF layer kernels. Same contract as ``ipnet._rbf_py``."""
import numpy as np

from libc.math cimport exp, INFINITY


def rbf_forward(const double[:, ::1] refs, const double[:, ::1] times,
                const double[:, :, ::1] values, const double[:, :, ::1] mask,
                const double[::1] alpha):
    cdef Py_ssize_t N = refs.shape[0], R = refs.shape[1]
    cdef Py_ssize_t D = values.shape[1], U = values.shape[2]
    lam_arr = np.zeros((N, D, R))
    sig_arr = np.zeros((N, D, R))
    cdef double[:, :, ::1] lam = lam_arr
    cdef double[:, :, ::1] sig = sig_arr
    cdef Py_ssize_t n, d, k, u
    cdef double a, r, diff, l, top, e, s0, s1
    with nogil:
        for n in range(N):
            for d in range(D):
                a = alpha[d]
                for k in range(R):
                    r = refs[n, k]
                    top = -INFINITY
                    for u in range(U):
                        if mask[n, d, u] != 0:
                            diff = r - times[n, u]
                            l = -a * diff * diff
                            if l > top:
                                top = l
                    if top == -INFINITY:
                        continue
                    s0 = 0.0
                    s1 = 0.0
                    for u in range(U):
                        if mask[n, d, u] != 0:
                            diff = r - times[n, u]
                            e = exp(-a * diff * diff - top)
                            s0 += e
                            s1 += e * values[n, d, u]
                    lam[n, d, k] = exp(top) * s0
                    sig[n, d, k] = s1 / s0
    return lam_arr, sig_arr


def rbf_backward(const double[:, ::1] refs, const double[:, ::1] times,
                 const double[:, :, ::1] values, const double[:, :, ::1] mask,
                 const double[::1] alpha, const double[:, :, ::1] g_lam,
                 const double[:, :, ::1] g_sig):
    cdef Py_ssize_t N = refs.shape[0], R = refs.shape[1]
    cdef Py_ssize_t D = values.shape[1], U = values.shape[2]
    g_arr = np.zeros(D)
    cdef double[::1] g_alpha = g_arr
    cdef Py_ssize_t n, d, k, u
    cdef double a, r, diff, d2, l, top, e, s0, s1, sd2, sxd2, acc, x
    with nogil:
        for d in range(D):
            a = alpha[d]
            acc = 0.0
            for n in range(N):
                for k in range(R):
                    r = refs[n, k]
                    top = -INFINITY
                    for u in range(U):
                        if mask[n, d, u] != 0:
                            diff = r - times[n, u]
                            l = -a * diff * diff
                            if l > top:
                                top = l
                    if top == -INFINITY:
                        continue
                    s0 = 0.0
                    s1 = 0.0
                    sd2 = 0.0
                    sxd2 = 0.0
                    for u in range(U):
                        if mask[n, d, u] != 0:
                            diff = r - times[n, u]
                            d2 = diff * diff
                            e = exp(-a * d2 - top)
                            x = values[n, d, u]
                            s0 += e
                            s1 += e * x
                            sd2 += e * d2
                            sxd2 += e * x * d2
                    acc += g_lam[n, d, k] * (-exp(top) * sd2)
                    acc += g_sig[n, d, k] * (-(sxd2 / s0 - (s1 / s0) * (sd2 / s0)))
            g_alpha[d] = acc
    return g_arr
