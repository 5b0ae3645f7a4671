"""Numba-compiled kernels; same signatures and results as ``_numpy``."""

import math

import numba as nb
import numpy as np

njit = nb.njit(cache=True, nogil=True)


@njit
def sq_distances(values, query):
    n, d = values.shape
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        c = 0
        for j in range(d):
            if values[i, j] != query[j]:
                c += 1
        out[i] = c
    return out


@njit
def gaussian_density(values, weights, a, inv_two_bw2):
    n, d = values.shape
    total = 0.0
    grad = np.zeros(d)
    for i in range(n):
        s = 0.0
        for j in range(d):
            t = a[j] - values[i, j]
            s += t * t
        k = weights[i] * math.exp(-inv_two_bw2 * s)
        total += k
        for j in range(d):
            grad[j] -= 2.0 * inv_two_bw2 * k * (a[j] - values[i, j])
    return total, grad


@njit
def evaluate_encodings(maps, events, probs, num_memories, alpha, beta):
    b_count, n = maps.shape
    d = events.shape[1]
    out = np.empty(b_count)
    pm = np.empty(num_memories)
    ones = np.empty((num_memories, d))
    for b in range(b_count):
        pm[:] = 0.0
        ones[:, :] = 0.0
        for i in range(n):
            k = maps[b, i]
            pm[k] += probs[i]
            for j in range(d):
                if events[i, j]:
                    ones[k, j] += probs[i]
        total = 0.0
        for i in range(n):
            p = probs[i]
            if p <= 0.0:
                continue
            k = maps[b, i]
            log_q = 0.0
            for j in range(d):
                r = ones[k, j] / pm[k]
                log_q += math.log(r if events[i, j] else 1.0 - r)
            total += p * (-(1.0 + alpha) * math.log(pm[k]) - (1.0 + beta) * log_q)
        out[b] = total
    return out
