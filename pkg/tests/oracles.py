"""Independent reference computations the package is checked against.

Nothing here imports the code under test except plain data containers.
"""

import numpy as np
import sympy


def inv_mod_oracle(rows, q):
    return [[int(v) for v in r] for r in sympy.Matrix(rows).inv_mod(q).tolist()]


def det_mod_oracle(rows, q):
    return int(sympy.Matrix(rows).det()) % q


def matmul_mod(a, b, q):
    return [[sum(a[i][k] * b[k][j] for k in range(len(b))) % q for j in range(len(b[0]))] for i in range(len(a))]


def matvec_mod(a, v, q):
    return [sum(x * y for x, y in zip(row, v)) % q for row in a]


def modinv_euclid(a, q):
    # extended Euclid, written out rather than pow(a, -1, q)
    r0, r1, s0, s1 = q, a % q, 0, 1
    while r1:
        k = r0 // r1
        r0, r1, s0, s1 = r1, r0 - k * r1, s1, s0 - k * s1
    assert r0 == 1
    return s0 % q


def brute_dlog(x_times_g, g, q, bound):
    for x in range(bound):
        if x * g % q == x_times_g % q:
            return x
    return None


def numeric_grad(f, w, eps=1e-6):
    g = np.zeros_like(w)
    for i in range(w.size):
        e = np.zeros_like(w)
        e[i] = eps
        g[i] = (f(w + e) - f(w - e)) / (2 * eps)
    return g


def softmax_ce(w, x, y, n_classes):
    """Mean cross-entropy of softmax regression, weights (C, F+1) flattened, bias last."""
    W = w.reshape(n_classes, -1)
    xa = np.hstack([x, np.ones((len(x), 1))])
    z = xa @ W.T
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return -float(np.mean(logp[np.arange(len(y)), y]))
