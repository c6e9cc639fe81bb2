"""Independent reference computations used by the tests.

Nothing here calls into the package's numerical routines; inputs are plain
arrays pulled off a basis (grid values, weights, eigenvalues).
"""

from __future__ import annotations

import math

import numpy as np

EXAMPLE_B = (1.0, -2.0, 2.0, -3.0)

# C_1/C_2 crossing for EXAMPLE_B with kappa = 1, 4, pinned from bisection
D2_INTERSECTION = 1.6930004681646913


def gain(d2, B, kappa):
    b11, b12, b21, b22 = B
    return b11 + b12 * b21 / (d2 * np.asarray(kappa, dtype=float) - b22)


def hyperbola(d2, B, kappa):
    return gain(d2, B, kappa) / kappa


def constant_sigma_max(d2, B, kappas, sigma):
    """``max_j (c_j - sigma) / kappa_j`` over positive eigenvalues."""
    k = np.asarray([v for v in kappas if v > 0], dtype=float)
    return float(np.max((gain(d2, B, k) - sigma) / k))


def bisect(f, lo, hi, tol=1e-13, max_iter=200):
    flo = f(lo)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def modal_rate(d1, d2, B, kappa):
    """Largest real part of eig([[b11 - d1 k, b12], [b21, b22 - d2 k]])."""
    b11, b12, b21, b22 = B
    a, d = b11 - d1 * kappa, b22 - d2 * kappa
    tr, det = a + d, a * d - b12 * b21
    disc = tr * tr / 4 - det
    if disc >= 0:
        return tr / 2 + math.sqrt(disc)
    return tr / 2


def sorted_square_spectrum(count, first=0):
    """Sorted ``m^2 + n^2`` over ``m, n >= first`` (pi x pi square)."""
    vals = sorted(m * m + n * n for m in range(first, first + count)
                  for n in range(first, first + count))
    return vals[:count]


def unilateral_quotient_batch(X, lam, D, values, weights, s_plus, s_minus):
    """Quotient for each row of ``X`` straight from its definition."""
    U = X @ values.T
    form = (np.maximum(U, 0) ** 2) @ (weights * s_plus) + (np.maximum(-U, 0) ** 2) @ (
        weights * s_minus)
    return ((X ** 2) @ lam - form) / ((X ** 2) @ D)


def zoom_search(f, dim, total=100_000, stages=6, seed=0):
    """Dense sphere sampling refined around the incumbent.

    Stage one spreads ``total / stages`` Gaussian directions over the whole
    sphere; later stages sample shrinking neighbourhoods of the best point.
    """
    rng = np.random.default_rng(seed)
    per = total // stages
    X = rng.standard_normal((per, dim))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    v = f(X)
    best, best_val = X[np.argmax(v)], float(v.max())
    radius = 0.5
    for _ in range(1, stages):
        Y = best + radius * rng.standard_normal((per, dim)) / math.sqrt(dim)
        Y /= np.linalg.norm(Y, axis=1, keepdims=True)
        w = f(Y)
        i = int(np.argmax(w))
        if w[i] > best_val:
            best_val, best = float(w[i]), Y[i]
        radius *= 0.2
    return best_val, best


def brute_force_max(basis, d2, B, s_plus, s_minus, total=100_000, seed=0):
    """Dense-sampling maximum of the unilateral quotient on ``basis``."""
    k = basis.kappa
    lam = basis.mu * gain(d2, B, k)
    D = 1.0 - basis.mu if basis.pure_neumann else np.ones_like(k)
    sp = np.broadcast_to(np.asarray(s_plus, dtype=float), basis.weights.shape)
    sm = np.broadcast_to(np.asarray(s_minus, dtype=float), basis.weights.shape)

    def f(X):
        return unilateral_quotient_batch(X, lam, D, basis.values, basis.weights, sp, sm)

    return zoom_search(f, basis.n_modes, total=total, seed=seed)[0]
