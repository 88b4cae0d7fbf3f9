# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled integration kernel for scalar states and polynomial drifts.

Same algorithm and operation order as ``_pykernel.integrate``; see there for
the meaning of the arguments.  Polynomials are coefficient rows (ascending)
with explicit degrees.
"""
import numpy as np

from libc.math cimport exp, expm1, sqrt, fabs, copysign, NAN


cdef inline double horner(const double[:, ::1] c, Py_ssize_t row, int deg, double x) noexcept nogil:
    cdef double acc = c[row, deg]
    cdef int k
    for k in range(deg - 1, -1, -1):
        acc = acc * x + c[row, k]
    return acc


cdef inline double interp(const double* ts, const double* xs, Py_ssize_t cnt, double q) noexcept nogil:
    # right-continuous linear interpolation; ts nondecreasing, ts[0] <= q
    cdef Py_ssize_t lo = 0, hi = cnt, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if ts[mid] <= q:
            lo = mid + 1
        else:
            hi = mid
    lo -= 1
    if lo >= cnt - 1:
        return xs[cnt - 1]
    return xs[lo] + (q - ts[lo]) / (ts[lo + 1] - ts[lo]) * (xs[lo + 1] - xs[lo])


cdef inline void exp_weights(double a, double* w0, double* w1) noexcept nogil:
    if a < 1e-3:
        w1[0] = a * (0.5 - a * (1.0 / 6.0 - a * (1.0 / 24.0 - a / 120.0)))
    else:
        w1[0] = 1.0 + expm1(-a) / a
    w0[0] = -expm1(-a) - w1[0]


cdef inline double piece_max(double x0, double x1, double h, double r) noexcept nogil:
    cdef double A = x1 * x1
    cdef double best = sqrt(A)
    cdef double b, B, C, left, qa, qb, qc, disc, qq, s, q, v
    if h <= 0:
        return best
    b = (x1 - x0) / h
    B = x1 * b
    C = b * b
    left = exp(-r * h) * sqrt(x0 * x0)
    if left > best:
        best = left
    qa = r * C
    if qa <= 0:
        return best
    qb = 2.0 * r * B + C
    qc = r * A + B
    disc = qb * qb - 4.0 * qa * qc
    if disc < 0:
        return best
    qq = -0.5 * (qb + copysign(sqrt(disc), qb))
    s = qq / qa
    if -h < s < 0:
        q = A + 2.0 * B * s + C * s * s
        if q > 0:
            v = exp(r * s) * sqrt(q)
            if v > best:
                best = v
    if qq != 0:
        s = qc / qq
        if -h < s < 0:
            q = A + 2.0 * B * s + C * s * s
            if q > 0:
                v = exp(r * s) * sqrt(q)
                if v > best:
                    best = v
    return best


cdef inline double history(double q, double t_now, double x_now,
                           const double* ts, const double* xs, Py_ssize_t cnt,
                           const double* xi_t, const double* xi_x, Py_ssize_t m,
                           double xi_tail, double r) noexcept nogil:
    if q >= t_now:
        return x_now
    if q >= 0.0:
        return interp(ts, xs, cnt, q)
    if q < xi_t[0]:
        return exp(-r * q) * xi_tail
    return interp(xi_t, xi_x, m, q)


def integrate_1d(const double[::1] grid,
                 const double[::1] xi_t, const double[::1] xi_x, double xi_tail,
                 double r, double xi_norm,
                 const double[:, ::1] local_c, int local_deg,
                 const double[:, ::1] part_c, const int[::1] part_deg,
                 const int[::1] atom_part, const double[::1] atom_w, const double[::1] atom_theta,
                 const int[::1] exp_part, const double[::1] exp_w, const double[::1] exp_lam,
                 const double[::1] exp_init,
                 const double[::1] small, bint has_small,
                 const double[::1] jump_t, const double[::1] jump_z,
                 bint heun, double bound):
    cdef Py_ssize_t K = grid.shape[0] - 1
    cdef Py_ssize_t J = jump_t.shape[0]
    cdef Py_ssize_t A = atom_w.shape[0]
    cdef Py_ssize_t E = exp_w.shape[0]
    cdef Py_ssize_t m = xi_t.shape[0]
    cdef Py_ssize_t cap = K + 1 + 2 * J
    out_t_arr = np.empty(cap)
    out_x_arr = np.empty(cap)
    out_n_arr = np.empty(cap)
    cdef double[::1] out_t = out_t_arr
    cdef double[::1] out_x = out_x_arr
    cdef double[::1] out_n = out_n_arr
    ints_arr = np.array(exp_init, dtype=float, copy=True) if E else np.zeros(1)
    pred_arr = np.zeros(max(E, 1))
    cdef double[::1] ints = ints_arr
    cdef double[::1] pred = pred_arr

    cdef Py_ssize_t cnt = 1, k, j = 0, a, e
    cdef double t = 0.0, t1, stop, h, x, xn, xp, f0, f1, N, pm, lam, w0, w1, d, q, g0, g1
    cdef bint is_jump
    cdef int status = 0
    cdef double fail_t = NAN, fail_v = NAN

    out_t[0] = 0.0
    out_x[0] = xi_x[m - 1]
    out_n[0] = xi_norm
    x = out_x[0]
    N = xi_norm

    with nogil:
        for k in range(K):
            t1 = grid[k + 1]
            while True:
                if j < J and jump_t[j] <= t1:
                    stop = jump_t[j]
                    is_jump = True
                else:
                    stop = t1
                    is_jump = False
                h = stop - t
                if h > 0:
                    # drift at (t, x)
                    f0 = horner(local_c, 0, local_deg, x)
                    for a in range(A):
                        q = history(t + atom_theta[a], t, x, &out_t[0], &out_x[0], cnt,
                                    &xi_t[0], &xi_x[0], m, xi_tail, r)
                        f0 += atom_w[a] * horner(part_c, atom_part[a], part_deg[atom_part[a]], q)
                    for e in range(E):
                        f0 += exp_w[e] * ints[e]
                    if heun:
                        xp = x + h * f0
                        f1 = horner(local_c, 0, local_deg, xp)
                        for a in range(A):
                            q = stop + atom_theta[a]
                            if q > t:
                                q = x + (q - t) / h * (xp - x)
                            else:
                                q = history(q, t, x, &out_t[0], &out_x[0], cnt,
                                            &xi_t[0], &xi_x[0], m, xi_tail, r)
                            f1 += atom_w[a] * horner(part_c, atom_part[a], part_deg[atom_part[a]], q)
                        for e in range(E):
                            lam = exp_lam[e] * h
                            exp_weights(lam, &w0, &w1)
                            d = exp(-lam)
                            g0 = horner(part_c, exp_part[e], part_deg[exp_part[e]], x)
                            g1 = horner(part_c, exp_part[e], part_deg[exp_part[e]], xp)
                            pred[e] = d * ints[e] + w0 * g0 + w1 * g1
                            f1 += exp_w[e] * pred[e]
                        xn = x + 0.5 * h * (f0 + f1)
                    else:
                        xn = x + h * f0
                    if stop == t1 and has_small:
                        xn = xn + small[k]
                    for e in range(E):
                        lam = exp_lam[e] * h
                        exp_weights(lam, &w0, &w1)
                        d = exp(-lam)
                        g0 = horner(part_c, exp_part[e], part_deg[exp_part[e]], x)
                        g1 = horner(part_c, exp_part[e], part_deg[exp_part[e]], xn)
                        ints[e] = d * ints[e] + w0 * g0 + w1 * g1
                    pm = piece_max(x, xn, h, r)
                    N = exp(-r * h) * N
                    if pm > N:
                        N = pm
                    out_t[cnt] = stop
                    out_x[cnt] = xn
                    out_n[cnt] = N
                    cnt += 1
                    x = xn
                    t = stop
                    if not (fabs(x) <= bound):
                        status = 1
                        fail_t = t
                        fail_v = fabs(x)
                        break
                if is_jump:
                    x = x + jump_z[j]
                    if fabs(x) > N:
                        N = fabs(x)
                    out_t[cnt] = stop
                    out_x[cnt] = x
                    out_n[cnt] = N
                    cnt += 1
                    j += 1
                    if not (fabs(x) <= bound):
                        status = 1
                        fail_t = t
                        fail_v = fabs(x)
                        break
                    if stop == t1:
                        break
                else:
                    break
            if status:
                break

    return out_t_arr[:cnt], out_x_arr[:cnt], out_n_arr[:cnt], status, fail_t, fail_v
