# Fused single-pass kernels for the ops that dominate non-BLAS runtime:
# softmax, layer norm, and gelu, forward and backward. Matmul stays on BLAS
# in both backends.

import numpy as np

cimport cython
cimport numpy as cnp
from libc.math cimport exp, sqrt, tanh

cnp.import_array()

ctypedef fused real:
    float
    double

DEF GELU_C = 0.7978845608028654
DEF GELU_A = 0.044715


def softmax_fwd_2d(real[:, ::1] x, real[:, ::1] out):
    cdef Py_ssize_t rows = x.shape[0], n = x.shape[1]
    cdef Py_ssize_t i, j
    cdef real m, s
    for i in range(rows):
        m = x[i, 0]
        for j in range(1, n):
            if x[i, j] > m:
                m = x[i, j]
        s = 0
        for j in range(n):
            out[i, j] = exp(x[i, j] - m)
            s += out[i, j]
        for j in range(n):
            out[i, j] /= s


def softmax_bwd_2d(real[:, ::1] y, real[:, ::1] gout, real[:, ::1] gx):
    cdef Py_ssize_t rows = y.shape[0], n = y.shape[1]
    cdef Py_ssize_t i, j
    cdef real dot
    for i in range(rows):
        dot = 0
        for j in range(n):
            dot += gout[i, j] * y[i, j]
        for j in range(n):
            gx[i, j] = y[i, j] * (gout[i, j] - dot)


def layer_norm_fwd_2d(real[:, ::1] x, double eps, real[:, ::1] xhat, real[:, ::1] inv):
    cdef Py_ssize_t rows = x.shape[0], n = x.shape[1]
    cdef Py_ssize_t i, j
    cdef real mu, var, d, iv
    for i in range(rows):
        mu = 0
        for j in range(n):
            mu += x[i, j]
        mu /= n
        var = 0
        for j in range(n):
            d = x[i, j] - mu
            var += d * d
        var /= n
        iv = <real>(1.0 / sqrt(var + eps))
        inv[i, 0] = iv
        for j in range(n):
            xhat[i, j] = (x[i, j] - mu) * iv


def layer_norm_bwd_2d(real[:, ::1] xhat, real[:, ::1] inv, real[:, ::1] dxhat, real[:, ::1] gx):
    cdef Py_ssize_t rows = xhat.shape[0], n = xhat.shape[1]
    cdef Py_ssize_t i, j
    cdef real s1, s2, iv
    for i in range(rows):
        s1 = 0
        s2 = 0
        for j in range(n):
            s1 += dxhat[i, j]
            s2 += dxhat[i, j] * xhat[i, j]
        iv = inv[i, 0] / n
        for j in range(n):
            gx[i, j] = iv * (n * dxhat[i, j] - s1 - xhat[i, j] * s2)


def gelu_fwd_1d(real[::1] x, real[::1] out):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i
    cdef real v, u
    for i in range(n):
        v = x[i]
        u = <real>GELU_C * (v + <real>GELU_A * v * v * v)
        out[i] = <real>0.5 * v * (<real>1.0 + tanh(u))


def gelu_bwd_1d(real[::1] x, real[::1] gout, real[::1] gx):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i
    cdef real v, u, t, du
    for i in range(n):
        v = x[i]
        u = <real>GELU_C * (v + <real>GELU_A * v * v * v)
        t = tanh(u)
        du = <real>GELU_C * (<real>1.0 + <real>3.0 * <real>GELU_A * v * v)
        gx[i] = gout[i] * (<real>0.5 * (<real>1.0 + t) + <real>0.5 * v * (<real>1.0 - t * t) * du)
