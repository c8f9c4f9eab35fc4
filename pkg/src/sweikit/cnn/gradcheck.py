"""Central finite-difference gradient verification."""

import numpy as np


def fd_gradient(fn, arr, eps=1e-4, indices=None):
    """Central-difference gradient of scalar fn w.r.t. selected entries of arr."""
    flat = arr.reshape(-1)
    if indices is None:
        indices = range(flat.size)
    out = {}
    for j in indices:
        old = flat[j]
        flat[j] = old + eps
        fp = fn()
        flat[j] = old - eps
        fm = fn()
        flat[j] = old
        out[j] = (fp - fm) / (2.0 * eps)
    return out


def max_rel_error(fn, arr, analytic, eps=1e-4, indices=None, noise_floor=1e-6):
    """Worst relative mismatch between analytic and finite differences.

    Pairs where both values sit below the finite-difference noise floor
    are unresolvable by the oracle and count as exact.
    """
    analytic_flat = np.asarray(analytic).reshape(-1)
    worst = 0.0
    for j, num in fd_gradient(fn, arr, eps=eps, indices=indices).items():
        a = float(analytic_flat[j])
        if max(abs(a), abs(num)) < noise_floor:
            continue
        worst = max(worst, abs(a - num) / (abs(a) + abs(num)))
    return worst
