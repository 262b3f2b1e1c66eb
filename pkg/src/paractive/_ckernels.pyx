# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled RBF kernels. Same contract as paractive._pykernels."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()


def rbf_row(const double[::1] x, const double[:, ::1] X, double gamma):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], j, k
    cdef double acc, t
    out = np.empty(n)
    cdef double[::1] o = out
    with nogil:
        for j in range(n):
            acc = 0.0
            for k in range(d):
                t = X[j, k] - x[k]
                acc += t * t
            o[j] = exp(-gamma * acc)
    return out


def rbf_scores(const double[:, ::1] Q, const double[:, ::1] X,
               const double[::1] beta, double gamma, double bias):
    cdef Py_ssize_t nq = Q.shape[0], ns = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double acc, s, t
    out = np.empty(nq)
    cdef double[::1] o = out
    with nogil:
        for i in range(nq):
            s = 0.0
            for j in range(ns):
                acc = 0.0
                for k in range(d):
                    t = Q[i, k] - X[j, k]
                    acc += t * t
                s += beta[j] * exp(-gamma * acc)
            o[i] = s + bias
    return out
