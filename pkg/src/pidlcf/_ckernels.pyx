# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels.  Semantics are defined by ``_pykernels.py``."""

import numpy as np
from libc.math cimport sqrt, tanh, pow, fabs

cdef enum:
    IDM = 0
    OVM = 1
    GHR = 2
    FVDM = 3
    GIPPS = 4
    HELLY = 5

STATUS_COLLISION = 1
STATUS_SPEED_CLAMPED = 2
TERMINATE_NEVER = 0
TERMINATE_ON_ZERO_OR_FLIP = 1

BACKEND = "cython"


cdef double _accel(int family, const double[::1] p, double h, double dv, double v, double dt) except? -1e300:
    cdef double sq, q, s_star, x, x2, x4, r, V, vm, tau, v_lead, v_free, rad, v_safe, v_next
    if family == IDM:
        sq = sqrt(p[3] * p[4])
        q = v * (-dv) / (2.0 * sq)
        s_star = p[2] + v * p[1] + q
        x = v / p[0]
        x2 = x * x
        x4 = x2 * x2
        r = s_star / h
        return p[3] * (1.0 - x4 - r * r)
    elif family == OVM:
        V = 0.5 * p[0] * (tanh(h - p[1]) + tanh(p[1]))
        return p[2] * (V - v)
    elif family == GHR:
        if v > 0:
            vm = pow(v, p[1])
        elif p[1] == 0:
            vm = 1.0
        else:
            vm = 0.0
        return p[0] * (vm * dv / pow(h, p[2]))
    elif family == FVDM:
        V = 0.5 * p[2] * (tanh(h - p[3]) + tanh(p[3]))
        return p[0] * (V - v) + p[1] * dv
    elif family == GIPPS:
        tau = dt
        v_lead = v + dv
        v_free = v + 2.5 * p[0] * tau * (1.0 - v / p[2]) * sqrt(0.025 + v / p[2])
        rad = p[1] * p[1] * tau * tau + p[1] * (2.0 * (h - p[3]) - v * tau + v_lead * v_lead / p[1])
        if rad < 0.0:
            rad = 0.0
        v_safe = -p[1] * tau + sqrt(rad)
        v_next = v_free if v_free < v_safe else v_safe
        if v_next < 0.0:
            v_next = 0.0
        return (v_next - v) / dt
    elif family == HELLY:
        return p[0] * dv + p[1] * (h - p[2] - p[3] * v)
    raise ValueError("unknown family code %d" % family)


def model_accel(int family, p, double h, double dv, double v, double dt):
    cdef const double[::1] pv = np.ascontiguousarray(p, dtype=np.float64)
    return _accel(family, pv, h, dv, v, dt)


def integrate_follower(int family, params, double floor, double dt, leader_pos, leader_vel,
                       double x0, double v0, warm_acc, int reaction_steps, int terminate, double tol):
    cdef const double[::1] p = np.ascontiguousarray(params, dtype=np.float64)
    cdef const double[::1] lp = np.ascontiguousarray(leader_pos, dtype=np.float64)
    cdef const double[::1] lv = np.ascontiguousarray(leader_vel, dtype=np.float64)
    cdef const double[::1] warm = np.ascontiguousarray(warm_acc, dtype=np.float64)
    cdef Py_ssize_t n_max = lp.shape[0]
    xs_arr = np.zeros(n_max)
    vs_arr = np.zeros(n_max)
    acc_arr = np.zeros(n_max)
    cdef double[::1] xs = xs_arr
    cdef double[::1] vs = vs_arr
    cdef double[::1] acc = acc_arr
    cdef double[::1] hs = np.zeros(n_max)
    cdef double[::1] dvs = np.zeros(n_max)
    cdef int status = 0
    cdef Py_ssize_t k, src, n = 1
    cdef double x, v, a, x_next, v_next, first_sign = 0.0
    if n_max == 0:
        return xs_arr, vs_arr, acc_arr, 0, 0
    xs[0] = x0
    vs[0] = v0
    for k in range(n_max - 1):
        x = xs[k]
        v = vs[k]
        hs[k] = lp[k] - x
        dvs[k] = lv[k] - v
        src = k + 1 - reaction_steps
        if src >= 0:
            a = _accel(family, p, hs[src], dvs[src], vs[src], dt)
            if a < floor:
                a = floor
        else:
            a = warm[k + 1]
        if terminate == TERMINATE_ON_ZERO_OR_FLIP:
            if k == 0:
                first_sign = 1.0 if a > 0 else (-1.0 if a < 0 else 0.0)
            elif fabs(a) < tol or a * first_sign <= 0:
                break
        x_next = x + v * dt
        v_next = v + a * dt
        if v_next < 0:
            v_next = 0.0
            status |= STATUS_SPEED_CLAMPED
        acc[k + 1] = a
        if k == 0:
            acc[0] = a if src >= 0 else warm[0]
        if lp[k + 1] - x_next <= 0:
            status |= STATUS_COLLISION
            break
        xs[k + 1] = x_next
        vs[k + 1] = v_next
        n = k + 2
    return xs_arr, vs_arr, acc_arr, n, status


cdef inline void _insertion_sort(double* a, int n) nogil:
    cdef int i, j
    cdef double key
    for i in range(1, n):
        key = a[i]
        j = i - 1
        while j >= 0 and a[j] > key:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = key


def median_velocity(x_in, double dT):
    cdef const double[::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], t
    out_arr = np.zeros(n)
    cdef double[::1] out = out_arr
    cdef double q[7]
    cdef int i, w, mid
    for t in range(n):
        w = 7
        if t < w:
            w = <int>t
        if n - 1 - t < w:
            w = <int>(n - 1 - t)
        if w == 0:
            if t == 0:
                out[t] = (x[1] - x[0]) / dT
            else:
                out[t] = (x[n - 1] - x[n - 2]) / dT
            continue
        for i in range(1, w + 1):
            q[i - 1] = (x[t + i] - x[t - i]) / (2.0 * i * dT)
        _insertion_sort(q, w)
        mid = w // 2
        if w % 2:
            out[t] = q[mid]
        else:
            out[t] = 0.5 * (q[mid - 1] + q[mid])
    return out_arr
