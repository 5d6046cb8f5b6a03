"""
Compiled inner loops for the QUBO solvers.

Both kernels keep a local field h_i = L_i + sum_j Q_ij x_j over the symmetric
adjacency (CSR arrays), so a flip costs O(degree) and
dE_i = (1 - 2 x_i) h_i.
"""
import math

import numpy as np
from numba import njit

@njit(cache=True, nogil=True)
def _flip(i, x, field, indptr, indices, data):
    step = 1.0 - 2.0 * x[i]
    x[i] = 1 - x[i]
    for p in range(indptr[i], indptr[i + 1]):
        field[indices[p]] += data[p] * step

@njit(cache=True, nogil=True)
def init_field(linear, indptr, indices, data, x):
    n = linear.shape[0]
    field = linear.copy()
    for i in range(n):
        if x[i] == 1:
            for p in range(indptr[i], indptr[i + 1]):
                field[indices[p]] += data[p]
    return field

@njit(cache=True, nogil=True)
def anneal_chunk(indptr, indices, data, x, field, best_x, state, betas, uniforms, trace):
    """
    Run len(betas) Metropolis sweeps in fixed variable order.

    state = [current energy, best energy, max |dE| seen]; x, field, best_x and
    state are updated in place, trace[k] receives the best energy after sweep k.
    """
    n = x.shape[0]
    current = state[0]
    best = state[1]
    max_delta = state[2]

    for sweep in range(betas.shape[0]):
        beta = betas[sweep]
        for i in range(n):
            delta = (1.0 - 2.0 * x[i]) * field[i]
            magnitude = abs(delta)
            if magnitude > max_delta:
                max_delta = magnitude

            if delta <= 0.0 or uniforms[sweep, i] < math.exp(-delta * beta):
                _flip(i, x, field, indptr, indices, data)
                current += delta
                if current < best:
                    best = current
                    for j in range(n):
                        best_x[j] = x[j]
        trace[sweep] = best

    state[0] = current
    state[1] = best
    state[2] = max_delta

@njit(cache=True, nogil=True)
def enumerate_minima(linear, indptr, indices, data, cap, tol):
    """
    Visit all 2**n assignments in Gray-code order.

    Returns (best energy, keys, energies, stored, overflow) where keys are the
    lexicographic codes (bit n-1-i holds x_i) of up to `cap` assignments within
    `tol` of the best energy, keeping the smallest codes on overflow.
    """
    n = linear.shape[0]
    x = np.zeros(n, dtype=np.int8)
    field = linear.copy()
    keys = np.zeros(cap, dtype=np.int64)
    energies = np.zeros(cap, dtype=np.float64)

    current = 0.0
    best = 0.0
    key = 0
    keys[0] = 0
    energies[0] = 0.0
    stored = 1
    overflow = False

    total = 1 << n
    for g in range(1, total):
        i = 0
        while ((g >> i) & 1) == 0:
            i += 1

        current += (1.0 - 2.0 * x[i]) * field[i]
        _flip(i, x, field, indptr, indices, data)
        key ^= 1 << (n - 1 - i)

        if current < best - tol:
            best = current
            stored = 0
        elif current > best + tol:
            continue
        elif current < best:
            best = current

        if stored == cap:
            kept = 0
            for s in range(stored):
                if energies[s] <= best + tol:
                    keys[kept] = keys[s]
                    energies[kept] = energies[s]
                    kept += 1
            stored = kept

        if stored < cap:
            keys[stored] = key
            energies[stored] = current
            stored += 1
        else:
            overflow = True
            largest = 0
            for s in range(1, stored):
                if keys[s] > keys[largest]:
                    largest = s
            if key < keys[largest]:
                keys[largest] = key
                energies[largest] = current

    return best, keys, energies, stored, overflow
