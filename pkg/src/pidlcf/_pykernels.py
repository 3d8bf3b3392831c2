"""Pure-Python kernels; reference semantics for ``_ckernels.pyx``.

Keep the floating-point operation order identical in both files, the
test-suite compares the two backends bit-for-bit.
"""

import math

import numpy as np

IDM, OVM, GHR, FVDM, GIPPS, HELLY = range(6)

STATUS_COLLISION = 1
STATUS_SPEED_CLAMPED = 2

TERMINATE_NEVER = 0
TERMINATE_ON_ZERO_OR_FLIP = 1

BACKEND = "python"


def model_accel(family, p, h, dv, v, dt):
    if family == IDM:
        v0, T0, s0, A, b = p[0], p[1], p[2], p[3], p[4]
        sq = math.sqrt(A * b)
        q = v * (-dv) / (2.0 * sq)
        s_star = s0 + v * T0 + q
        x = v / v0
        x2 = x * x
        x4 = x2 * x2
        r = s_star / h
        return A * (1.0 - x4 - r * r)
    if family == OVM:
        v_max, h_c, k = p[0], p[1], p[2]
        V = 0.5 * v_max * (math.tanh(h - h_c) + math.tanh(h_c))
        return k * (V - v)
    if family == GHR:
        c, m, l = p[0], p[1], p[2]
        if v > 0:
            vm = v**m
        else:
            vm = 1.0 if m == 0 else 0.0
        return c * (vm * dv / h**l)
    if family == FVDM:
        k, kappa, v_max, h_c = p[0], p[1], p[2], p[3]
        V = 0.5 * v_max * (math.tanh(h - h_c) + math.tanh(h_c))
        return k * (V - v) + kappa * dv
    if family == GIPPS:
        A, b, v0, s0 = p[0], p[1], p[2], p[3]
        tau = dt
        v_lead = v + dv
        v_free = v + 2.5 * A * tau * (1.0 - v / v0) * math.sqrt(0.025 + v / v0)
        rad = b * b * tau * tau + b * (2.0 * (h - s0) - v * tau + v_lead * v_lead / b)
        v_safe = -b * tau + math.sqrt(max(rad, 0.0))
        v_next = max(min(v_free, v_safe), 0.0)
        return (v_next - v) / dt
    if family == HELLY:
        c1, c2, s0, T0 = p[0], p[1], p[2], p[3]
        return c1 * dv + c2 * (h - s0 - T0 * v)
    raise ValueError(f"unknown family code {family}")


def integrate_follower(family, params, floor, dt, leader_pos, leader_vel, x0, v0,
                       warm_acc, reaction_steps, terminate, tol):
    """Closed-loop explicit Euler rollout of a physics follower.

    The acceleration applied from step k to k+1 is the model evaluated on
    the state at ``k + 1 - reaction_steps`` (or ``warm_acc[k + 1]`` while that
    index is negative).  Updates: ``x += v*dt`` with the old speed, then
    ``v += a*dt``; speed is clamped at zero.

    Returns ``(x, v, acc, n, status)``; only the first ``n`` entries are valid.
    """
    p = [float(z) for z in params]
    n_max = len(leader_pos)
    xs = np.zeros(n_max)
    vs = np.zeros(n_max)
    acc = np.zeros(n_max)
    hs = np.zeros(n_max)
    dvs = np.zeros(n_max)
    status = 0
    xs[0] = x0
    vs[0] = v0
    R = int(reaction_steps)
    first_sign = 0.0
    n = 1
    for k in range(n_max - 1):
        x = xs[k]
        v = vs[k]
        hs[k] = leader_pos[k] - x
        dvs[k] = leader_vel[k] - v
        src = k + 1 - R
        if src >= 0:
            a = model_accel(family, p, hs[src], dvs[src], vs[src], dt)
            if a < floor:
                a = floor
        else:
            a = warm_acc[k + 1]
        if terminate == TERMINATE_ON_ZERO_OR_FLIP:
            if k == 0:
                first_sign = 1.0 if a > 0 else (-1.0 if a < 0 else 0.0)
            elif abs(a) < tol or a * first_sign <= 0:
                break
        x_next = x + v * dt
        v_next = v + a * dt
        if v_next < 0:
            v_next = 0.0
            status |= STATUS_SPEED_CLAMPED
        acc[k + 1] = a
        if k == 0:
            acc[0] = a if src >= 0 else warm_acc[0]
        if leader_pos[k + 1] - x_next <= 0:
            status |= STATUS_COLLISION
            break
        xs[k + 1] = x_next
        vs[k + 1] = v_next
        n = k + 2
    return xs, vs, acc, n, status


def median_velocity(x, dT):
    n = len(x)
    out = np.zeros(n)
    for t in range(n):
        w = min(7, t, n - 1 - t)
        if w == 0:
            if t == 0:
                out[t] = (x[1] - x[0]) / dT
            else:
                out[t] = (x[n - 1] - x[n - 2]) / dT
            continue
        q = sorted((x[t + i] - x[t - i]) / (2.0 * i * dT) for i in range(1, w + 1))
        mid = w // 2
        out[t] = q[mid] if w % 2 else 0.5 * (q[mid - 1] + q[mid])
    return out
