# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the per-batch hot loops (maxout, log-softmax, relu).

Signatures mirror ``modforge._pykernels``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()


def maxout_forward(double[:, :, ::1] pieces):
    cdef Py_ssize_t P = pieces.shape[0], N = pieces.shape[1], D = pieces.shape[2]
    out_arr = np.empty((N, D))
    idx_arr = np.empty((N, D), dtype=np.intp)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t[:, ::1] idx = idx_arr
    cdef Py_ssize_t p, i, j, best
    cdef double v, m
    for i in range(N):
        for j in range(D):
            m = pieces[0, i, j]
            best = 0
            for p in range(1, P):
                v = pieces[p, i, j]
                if v > m:
                    m = v
                    best = p
            out[i, j] = m
            idx[i, j] = best
    return out_arr, idx_arr


def maxout_backward(double[:, ::1] grad, Py_ssize_t[:, ::1] idx, Py_ssize_t n_pieces):
    cdef Py_ssize_t N = grad.shape[0], D = grad.shape[1], i, j
    out_arr = np.zeros((n_pieces, N, D))
    cdef double[:, :, ::1] out = out_arr
    for i in range(N):
        for j in range(D):
            out[idx[i, j], i, j] = grad[i, j]
    return out_arr


def log_softmax_forward(double[:, ::1] x):
    cdef Py_ssize_t N = x.shape[0], K = x.shape[1], i, k
    out_arr = np.empty((N, K))
    cdef double[:, ::1] out = out_arr
    cdef double m, s, lse
    for i in range(N):
        m = x[i, 0]
        for k in range(1, K):
            if x[i, k] > m:
                m = x[i, k]
        s = 0.0
        for k in range(K):
            s += exp(x[i, k] - m)
        lse = log(s)
        for k in range(K):
            out[i, k] = x[i, k] - m - lse
    return out_arr


def log_softmax_backward(double[:, ::1] grad, double[:, ::1] out):
    cdef Py_ssize_t N = grad.shape[0], K = grad.shape[1], i, k
    res_arr = np.empty((N, K))
    cdef double[:, ::1] res = res_arr
    cdef double s
    for i in range(N):
        s = 0.0
        for k in range(K):
            s += grad[i, k]
        for k in range(K):
            res[i, k] = grad[i, k] - exp(out[i, k]) * s
    return res_arr


def relu_forward(double[:, ::1] x):
    cdef Py_ssize_t N = x.shape[0], D = x.shape[1], i, j
    out_arr = np.empty((N, D))
    cdef double[:, ::1] out = out_arr
    for i in range(N):
        for j in range(D):
            out[i, j] = x[i, j] if x[i, j] > 0.0 else 0.0
    return out_arr


def relu_backward(double[:, ::1] grad, double[:, ::1] x):
    cdef Py_ssize_t N = grad.shape[0], D = grad.shape[1], i, j
    out_arr = np.empty((N, D))
    cdef double[:, ::1] out = out_arr
    for i in range(N):
        for j in range(D):
            out[i, j] = grad[i, j] if x[i, j] > 0.0 else 0.0
    return out_arr
