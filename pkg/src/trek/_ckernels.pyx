# cython: language_level=3
"""Compiled inner loops for the block-diagonal Khatri-Rao operator.

Block-diagonal matrices live in one flat float64 buffer, each block stored
column-major (Fortran order) at its odvec offset. The Gram matrix is a
C-contiguous symmetric ``R x R`` array, so a pointer to ``K[a, b]`` with
leading dimension ``R`` is read by BLAS as the Fortran matrix
``F[p, q] = K[a + q, b + p] = K[b + p, a + q]``.
"""

from scipy.linalg.cython_blas cimport dgemm

import numpy as np


def khatri_apply(const double[:, ::1] K,
                 const double[::1] b,
                 const Py_ssize_t[::1] offsets,
                 const Py_ssize_t[::1] boffsets,
                 double eta,
                 double[::1] out,
                 double[::1] scratch,
                 bint symmetrize):
    """out_i = eta * b_i + sum_{i'} K_{ii'} b_{i'} K_{ii'}^T for every block i."""
    cdef Py_ssize_t n = offsets.shape[0] - 1
    cdef Py_ssize_t R = offsets[n]
    cdef Py_ssize_t i, ip, j1, j2, p
    cdef int ri, rip, ldk, ldb, lds, kk
    cdef double one = 1.0, zero = 0.0, avg
    cdef char *tn = 'N'
    cdef double *kp
    cdef double *bp
    cdef double *op
    cdef double *sp

    if b.shape[0] != boffsets[n] or out.shape[0] != boffsets[n]:
        raise ValueError("buffer length does not match the layout")
    if K.shape[0] != R or K.shape[1] != R:
        raise ValueError("Gram matrix does not match the layout")
    if R == 0:
        return
    for i in range(n):
        if scratch.shape[0] < (offsets[i + 1] - offsets[i]) * R:
            raise ValueError("scratch buffer too small")
    kp = <double *> &K[0, 0]
    ldk = <int> R
    kk = <int> R

    with nogil:
        for i in range(n):
            ri = <int> (offsets[i + 1] - offsets[i])
            sp = &scratch[0]
            lds = ri
            # scratch[:, block ip] = K_{i ip} @ B_ip   (ri x rip, ld = ri)
            for ip in range(n):
                rip = <int> (offsets[ip + 1] - offsets[ip])
                bp = <double *> &b[boffsets[ip]]
                ldb = rip
                dgemm(tn, tn, &ri, &rip, &rip, &one,
                      kp + offsets[ip] * R + offsets[i], &ldk,
                      bp, &ldb, &zero,
                      sp + offsets[ip] * ri, &lds)
            # out_i = eta * b_i + scratch @ K_{i.}^T
            op = &out[boffsets[i]]
            bp = <double *> &b[boffsets[i]]
            for p in range(ri * ri):
                op[p] = eta * bp[p]
            dgemm(tn, tn, &ri, &ri, &kk, &one,
                  sp, &lds,
                  kp + offsets[i] * R, &ldk,
                  &one, op, &lds)
            if symmetrize:
                for j2 in range(ri):
                    for j1 in range(j2):
                        avg = 0.5 * (op[j1 + j2 * ri] + op[j2 + j1 * ri])
                        op[j1 + j2 * ri] = avg
                        op[j2 + j1 * ri] = avg


def zero_diagonals(double[::1] data, const Py_ssize_t[::1] diag_index):
    """Set the listed flat positions (block diagonals) to zero in place."""
    cdef Py_ssize_t t
    with nogil:
        for t in range(diag_index.shape[0]):
            data[diag_index[t]] = 0.0
