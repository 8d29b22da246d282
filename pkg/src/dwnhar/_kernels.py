"""Numba kernels for the batch reductions in the backward pass and frozen inference.

Each output element is produced by exactly one thread with a fixed summation
order, so results do not depend on the thread count.
"""

import numpy as np
from numba import config, njit, prange

# the bundled TBB is too old for numba; avoid the warning on first parallel call
config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


@njit(parallel=True, cache=True)
def mapping_logit_grad(x_t, pools, s, gp_t):
    """Gradient of the loss wrt mapping logits.

    x_t   [W, B]  hard input bits, transposed
    pools [K, P]  candidate indices, one row per (lut, pin)
    s     [K, P]  softmax of the mapping logits
    gp_t  [K, B]  loss gradient wrt each pin value

    out[k, c] = s[k, c] * sum_b gp[k, b] * (x[pools[k, c], b] - pbar[k, b])
    with pbar[k, b] = sum_c s[k, c] * x[pools[k, c], b].
    """
    k_total, p_total = pools.shape
    b_total = gp_t.shape[1]
    out = np.empty((k_total, p_total))
    for k in prange(k_total):
        pbar = np.zeros(b_total)
        for c in range(p_total):
            row = x_t[pools[k, c]]
            sc = s[k, c]
            for b in range(b_total):
                pbar[b] += sc * row[b]
        d = 0.0
        for b in range(b_total):
            d += gp_t[k, b] * pbar[b]
        for c in range(p_total):
            row = x_t[pools[k, c]]
            a = 0.0
            for b in range(b_total):
                a += gp_t[k, b] * row[b]
            out[k, c] = s[k, c] * (a - d)
    return out


@njit(parallel=True, cache=True)
def scatter_input_grad(pools, s, gp, width):
    """dL/dx[b, i] = sum over (k, c) with pools[k, c] == i of gp[b, k] * s[k, c]."""
    b_total, k_total = gp.shape
    p_total = pools.shape[1]
    out = np.zeros((b_total, width))
    for b in prange(b_total):
        for k in range(k_total):
            g = gp[b, k]
            if g != 0.0:
                for c in range(p_total):
                    out[b, pools[k, c]] += g * s[k, c]
    return out


@njit(cache=True)
def frozen_layer(words, route_word, route_shift, tables, out_words):
    """One frozen LUT layer on packed bits.

    words       [N, Win] uint64   packed layer input, bit i in word i>>6 at i&63
    route_word  [L, n]   int64    word holding each pin's source bit
    route_shift [L, n]   uint64   position of that bit within the word
    tables      [L, T]   uint64   truth bits, entry u at word u>>6, bit u&63
    out_words   [N, Wout] uint64  packed outputs (overwritten)
    """
    n_rows = words.shape[0]
    n_luts, arity = route_word.shape
    one = np.uint64(1)
    for r in range(n_rows):
        row = words[r]
        orow = out_words[r]
        orow[:] = 0
        for lut in range(n_luts):
            addr = np.uint64(0)
            for j in range(arity):
                addr |= ((row[route_word[lut, j]] >> route_shift[lut, j]) & one) << np.uint64(j)
            v = (tables[lut, addr >> np.uint64(6)] >> (addr & np.uint64(63))) & one
            orow[lut >> 6] |= v << np.uint64(lut & 63)


@njit(cache=True)
def group_popcount(words, num_classes, group):
    """Popcount of LUT outputs ``[c*group, (c+1)*group)`` per class."""
    n_rows = words.shape[0]
    out = np.zeros((n_rows, num_classes), dtype=np.int64)
    for r in range(n_rows):
        for c in range(num_classes):
            cnt = 0
            for i in range(c * group, (c + 1) * group):
                cnt += int((words[r, i >> 6] >> np.uint64(i & 63)) & np.uint64(1))
            out[r, c] = cnt
    return out
