"""Pure-numpy kernels. Reference path, and the fallback when numba is off."""

import numpy as np


def sq_distances(values, query):
    """Squared Euclidean distance from ``query`` to each row of binary ``values``."""
    return np.count_nonzero(values != query, axis=1).astype(np.int64)


def gaussian_density(values, weights, a, inv_two_bw2):
    """Weighted Gaussian kernel sum at ``a`` and its gradient with respect to ``a``."""
    diff = a[None, :] - values
    k = weights * np.exp(-inv_two_bw2 * np.einsum("ij,ij->i", diff, diff))
    total = k.sum()
    grad = -2.0 * inv_two_bw2 * (k[:, None] * diff).sum(axis=0)
    return total, grad


def evaluate_encodings(maps, events, probs, num_memories, alpha, beta):
    """Expected weighted loss of each encode map with its optimal decoder.

    ``maps`` is (B, n) with memory indices per event. Events with zero
    probability contribute nothing.
    """
    onehot = (maps[:, :, None] == np.arange(num_memories)[None, None, :]).astype(np.float64)
    pm = np.einsum("bnk,n->bk", onehot, probs)
    ones = np.einsum("bnk,n,nd->bkd", onehot, probs, events.astype(np.float64))
    with np.errstate(divide="ignore", invalid="ignore"):
        dec = np.where(pm[:, :, None] > 0, ones / pm[:, :, None], 0.5)
    rows = np.arange(maps.shape[0])[:, None]
    dec_e = dec[rows, maps]                     # (B, n, d)
    pm_e = pm[rows, maps]                       # (B, n)
    bits = events[None, :, :].astype(bool)
    q = np.where(bits, dec_e, 1.0 - dec_e)
    live = probs > 0
    with np.errstate(divide="ignore"):
        log_q = np.log(q[:, live, :]).sum(axis=2)
        log_pm = np.log(pm_e[:, live])
    per_event = -(1.0 + alpha) * log_pm - (1.0 + beta) * log_q
    return per_event @ probs[live]
