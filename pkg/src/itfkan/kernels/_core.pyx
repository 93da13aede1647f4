# cython: boundscheck=False, wraparound=False, cdivision=True
"""Fused loops for the hot kernels: silu forward/backward and the Adam
parameter update. Operates on raveled contiguous float64 buffers; the
Python wrappers in ``itfkan.kernels`` handle shapes."""

from libc.math cimport exp, sqrt


def silu(double[::1] x, double[::1] out):
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double s
    for i in range(n):
        s = 1.0 / (1.0 + exp(-x[i]))
        out[i] = x[i] * s


def silu_grad(double[::1] x, double[::1] gout, double[::1] out):
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double s
    for i in range(n):
        s = 1.0 / (1.0 + exp(-x[i]))
        out[i] = gout[i] * (s * (1.0 + x[i] * (1.0 - s)))


def adam_step(double[::1] param, double[::1] grad, double[::1] m,
              double[::1] v, double lr, double beta1, double beta2,
              double eps, double bc1, double bc2):
    cdef Py_ssize_t i, n = param.shape[0]
    cdef double mi, vi
    for i in range(n):
        mi = beta1 * m[i] + (1.0 - beta1) * grad[i]
        vi = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i]
        m[i] = mi
        v[i] = vi
        param[i] -= lr * (mi / bc1) / (sqrt(vi / bc2) + eps)
