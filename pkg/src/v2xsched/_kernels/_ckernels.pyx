# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Semantics mirror ``_pykernels`` exactly."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, fmod
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef inline void _mm(double* A, double* B, double* C, int m, int n, int k,
                     int lda, int ldb, int ldc, double beta) noexcept nogil:
    # row-major C[m,n] = A[m,k] @ B[k,n] + beta*C, via column-major C^T = B^T A^T
    cdef char tr = b'N'
    cdef double one = 1.0
    dgemm(&tr, &tr, &n, &m, &k, &one, B, &ldb, A, &lda, &beta, C, &ldc)


cdef inline void _mm_bt(double* A, double* B, double* C, int m, int n, int k,
                        int lda, int ldb, int ldc, double beta) noexcept nogil:
    # row-major C[m,n] = A[m,k] @ B[n,k]^T + beta*C
    cdef char tb = b'T'
    cdef char tn = b'N'
    cdef double one = 1.0
    dgemm(&tb, &tn, &n, &m, &k, &one, B, &ldb, A, &lda, &beta, C, &ldc)


def cam_scan(const double[::1] x, const double[::1] y, const double[::1] speed, const double[::1] heading,
             double pos_thr, double head_thr, double speed_thr, long time_steps,
             bint strict, double eps):
    cdef Py_ssize_t n = x.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] idx = np.empty(max(n, 1), dtype=np.int64)
    cdef cnp.ndarray[cnp.int8_t, ndim=1] causes = np.empty(max(n, 1), dtype=np.int8)
    if n == 0:
        return idx[:0], causes[:0]
    cdef Py_ssize_t i, ref = 0, m = 1
    cdef double dx, dy, d, dist
    cdef int c
    idx[0] = 0
    causes[0] = 1
    for i in range(1, n):
        c = 0
        if i - ref >= time_steps:
            c = 1
        else:
            dx = x[i] - x[ref]
            dy = y[i] - y[ref]
            dist = sqrt(dx * dx + dy * dy)
            if (dist > pos_thr + eps) if strict else (dist >= pos_thr - eps):
                c = 2
            else:
                d = fmod(fabs(heading[i] - heading[ref]), 360.0)
                if 360.0 - d < d:
                    d = 360.0 - d
                if (d > head_thr + eps) if strict else (d >= head_thr - eps):
                    c = 3
                else:
                    d = fabs(speed[i] - speed[ref])
                    if (d > speed_thr + eps) if strict else (d >= speed_thr - eps):
                        c = 4
        if c:
            idx[m] = i
            causes[m] = c
            m += 1
            ref = i
    return idx[:m].copy(), causes[:m].copy()


cdef extern from "gru_ops.h" nogil:
    void gru_gates_rz(const double* arz, const double* xw, const double* hprev, double* r,
                      double* z, double* rh, int n, int H)
    void gru_candidate(const double* ac, const double* xw, const double* hprev, const double* z,
                       double* c, double* h, int n, int H)
    void gru_bwd_zc(const double* dh_out, double* dh, const double* z, const double* c,
                    const double* hprev, double* da, int n, int H)
    void gru_bwd_r(const double* drh, double* dh, const double* r, const double* z,
                   const double* hprev, double* da, int n, int H)


def gru_forward(double[:, :, ::1] xw, double[:, ::1] U, double[:, ::1] h0):
    cdef int T = xw.shape[0], B = xw.shape[1], H3 = xw.shape[2]
    cdef int H = H3 // 3, H2 = 2 * H
    hs_a = np.empty((T, B, H))
    r_a = np.empty((T, B, H))
    z_a = np.empty((T, B, H))
    c_a = np.empty((T, B, H))
    arz_a = np.empty((B, H2))
    rh_a = np.empty((B, H))
    ac_a = np.empty((B, H))
    cdef double[:, :, ::1] hs = hs_a, r = r_a, z = z_a, c = c_a
    cdef double[:, ::1] arz = arz_a, rh = rh_a, ac = ac_a
    cdef int t
    cdef double* hptr
    if T == 0 or B == 0:
        return hs_a, r_a, z_a, c_a
    with nogil:
        for t in range(T):
            if t == 0:
                hptr = &h0[0, 0]
            else:
                hptr = &hs[t - 1, 0, 0]
            _mm(hptr, &U[0, 0], &arz[0, 0], B, H2, H, H, H3, H2, 0.0)
            gru_gates_rz(&arz[0, 0], &xw[t, 0, 0], hptr, &r[t, 0, 0], &z[t, 0, 0], &rh[0, 0], B, H)
            _mm(&rh[0, 0], &U[0, H2], &ac[0, 0], B, H, H, H, H3, H, 0.0)
            gru_candidate(&ac[0, 0], &xw[t, 0, 0], hptr, &z[t, 0, 0], &c[t, 0, 0], &hs[t, 0, 0], B, H)
    return hs_a, r_a, z_a, c_a


def gru_backward(double[:, :, ::1] dh_out, double[:, ::1] U, double[:, ::1] h0,
                 double[:, :, ::1] hs, double[:, :, ::1] r, double[:, :, ::1] z,
                 double[:, :, ::1] c):
    cdef int T = hs.shape[0], B = hs.shape[1], H = hs.shape[2]
    cdef int H2 = 2 * H, H3 = 3 * H
    da_a = np.empty((T, B, H3))
    dh_a = np.zeros((B, H))
    drh_a = np.empty((B, H))
    cdef double[:, :, ::1] da = da_a
    cdef double[:, ::1] dh = dh_a, drh = drh_a
    cdef int t
    cdef double* hptr
    if T == 0 or B == 0:
        return da_a, dh_a
    with nogil:
        for t in range(T - 1, -1, -1):
            if t == 0:
                hptr = &h0[0, 0]
            else:
                hptr = &hs[t - 1, 0, 0]
            gru_bwd_zc(&dh_out[t, 0, 0], &dh[0, 0], &z[t, 0, 0], &c[t, 0, 0], hptr, &da[t, 0, 0], B, H)
            # d(r*h_prev) = da_c @ U_c^T
            _mm_bt(&da[t, 0, H2], &U[0, H2], &drh[0, 0], B, H, H, H3, H3, H, 0.0)
            # dh is overwritten with dh_prev here; dh_prev += [da_r, da_z] @ U_rz^T below
            gru_bwd_r(&drh[0, 0], &dh[0, 0], &r[t, 0, 0], &z[t, 0, 0], hptr, &da[t, 0, 0], B, H)
            _mm_bt(&da[t, 0, 0], &U[0, 0], &dh[0, 0], B, H, H2, H3, H3, H, 1.0)
    return da_a, dh_a


def candidate_mask(long n_sub, long n_pos, long width,
                   const cnp.int64_t[::1] res_off, const cnp.int64_t[::1] res_start,
                   const cnp.int64_t[::1] res_len, const double[::1] res_rsrp,
                   double threshold, blocked):
    mask_a = np.ones((n_sub, n_pos), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] mask = mask_a
    cdef cnp.uint8_t[::1] blk = np.ascontiguousarray(blocked, dtype=np.uint8)
    cdef Py_ssize_t k, p, o, lo, hi
    for o in range(n_sub):
        if blk[o]:
            for p in range(n_pos):
                mask[o, p] = 0
    for k in range(res_off.shape[0]):
        o = res_off[k]
        if o < 0 or o >= n_sub or not (res_rsrp[k] > threshold):
            continue
        lo = res_start[k] - width + 1
        if lo < 0:
            lo = 0
        hi = res_start[k] + res_len[k]
        if hi > n_pos:
            hi = n_pos
        for p in range(lo, hi):
            mask[o, p] = 0
    return mask_a.astype(bool)
