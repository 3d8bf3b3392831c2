"""Independent reference implementations used to freeze expected values.

Model formulas are re-written in mpmath from their textbook definitions and
differentiated by central finite differences at 40 significant digits; the
network oracle evaluates the forward pass in long double.
"""

import mpmath as mp
import numpy as np

mp.mp.dps = 40

NAMES = {
    "IDM": ("v0", "T0", "s0", "a_max", "b"),
    "OVM": ("v_max", "h_c", "k"),
    "GHR": ("c", "m", "l"),
    "FVDM": ("k", "kappa", "v_max", "h_c"),
}


def mp_accel(family, p, h, dv, v):
    h, dv, v = mp.mpf(h), mp.mpf(dv), mp.mpf(v)
    p = {k: mp.mpf(x) for k, x in p.items()}
    if family == "IDM":
        s_star = p["s0"] + v * p["T0"] + v * (-dv) / (2 * mp.sqrt(p["a_max"] * p["b"]))
        return p["a_max"] * (1 - (v / p["v0"]) ** 4 - (s_star / h) ** 2)
    if family == "OVM":
        V = p["v_max"] / 2 * (mp.tanh(h - p["h_c"]) + mp.tanh(p["h_c"]))
        return p["k"] * (V - v)
    if family == "GHR":
        return p["c"] * v ** p["m"] * dv / h ** p["l"]
    if family == "FVDM":
        V = p["v_max"] / 2 * (mp.tanh(h - p["h_c"]) + mp.tanh(p["h_c"]))
        return p["k"] * (V - v) + p["kappa"] * dv
    raise ValueError(family)


def mp_param_grad(family, p, h, dv, v, step="1e-15"):
    out = []
    eps = mp.mpf(step)
    for n in NAMES[family]:
        up = dict(p)
        dn = dict(p)
        up[n] = mp.mpf(p[n]) + eps
        dn[n] = mp.mpf(p[n]) - eps
        out.append((mp_accel(family, up, h, dv, v) - mp_accel(family, dn, h, dv, v)) / (2 * eps))
    return [float(g) for g in out]


def rel_err(a, b, floor=1e-10):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def mlp_forward_ld(weights, biases, mean, std, X):
    z = (np.asarray(X, dtype=np.longdouble) - np.asarray(mean, dtype=np.longdouble)) / np.asarray(std, dtype=np.longdouble)
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        z = z @ np.asarray(w, dtype=np.longdouble) + np.asarray(b, dtype=np.longdouble)
        if i < last:
            z = np.tanh(z)
    return z[:, 0]


def mlp_fd_grad(net, X, upstream, index, step=1e-6):
    """d sum(upstream * f(X)) / d param, param = (array index, flat index) into net.params()."""
    k, j = index
    ws = [np.asarray(w, dtype=np.longdouble) for w in net.weights]
    bs = [np.asarray(b, dtype=np.longdouble) for b in net.biases]
    arrs = []
    for w, b in zip(ws, bs):
        arrs += [w, b]
    target = arrs[k].reshape(-1)
    base = target[j]
    u = np.asarray(upstream, dtype=np.longdouble)
    h = np.longdouble(step)
    target[j] = base + h
    f_up = (u * mlp_forward_ld(ws, bs, net.input_mean, net.input_std, X)).sum()
    target[j] = base - h
    f_dn = (u * mlp_forward_ld(ws, bs, net.input_mean, net.input_std, X)).sum()
    target[j] = base
    return float((f_up - f_dn) / (2 * h))


def random_interior(family, rng):
    """Parameters strictly inside sensible ranges and a state where every model is smooth."""
    if family == "IDM":
        p = dict(v0=rng.uniform(15, 45), T0=rng.uniform(0.5, 3), s0=rng.uniform(0.5, 5),
                 a_max=rng.uniform(0.3, 3), b=rng.uniform(0.5, 4))
    elif family == "OVM":
        p = dict(v_max=rng.uniform(10, 50), h_c=rng.uniform(2, 30), k=rng.uniform(0.01, 1.5))
    elif family == "GHR":
        p = dict(c=rng.uniform(0.1, 5), m=rng.uniform(-1.5, 1.5), l=rng.uniform(0.1, 3))
    else:
        p = dict(k=rng.uniform(0.05, 1.5), kappa=rng.uniform(0.05, 1.5), v_max=rng.uniform(10, 50),
                 h_c=rng.uniform(2, 30))
    state = (rng.uniform(3, 80), rng.uniform(-8, 8), rng.uniform(1, 35))
    return p, state
