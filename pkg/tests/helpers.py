"""Shared independent oracles for the test suite.

These deliberately avoid the library's own code paths: the MLP oracle
is a plain nested loop, and the gradient oracle is central finite
differences on whatever scalar function it is given.
"""

import numpy as np


def mlp_eval_loops(layer_dims, w, x):
    """Loop-based tanh MLP evaluation; independent of haarlab.nets."""
    pos = 0
    a = [float(v) for v in x]
    for li, (fan_in, fan_out) in enumerate(layer_dims):
        z = []
        for j in range(fan_out):
            acc = 0.0
            for i in range(fan_in):
                acc += w[pos + j * fan_in + i] * a[i]
            z.append(acc)
        pos += fan_in * fan_out
        for j in range(fan_out):
            z[j] += w[pos + j]
        pos += fan_out
        if li == len(layer_dims) - 1:
            a = z
        else:
            a = [np.tanh(v) for v in z]
    return np.array(a)


def finite_diff_grad(f, theta, h=1e-5):
    """Central finite differences of scalar f at theta."""
    theta = np.asarray(theta, dtype=np.float64)
    g = np.zeros_like(theta)
    for i in range(theta.size):
        tp = theta.copy()
        tm = theta.copy()
        tp[i] += h
        tm[i] -= h
        g[i] = (f(tp) - f(tm)) / (2.0 * h)
    return g


def rel_err(a, b, floor=1e-6):
    """Guarded per-coordinate relative error."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return np.abs(a - b) / denom
