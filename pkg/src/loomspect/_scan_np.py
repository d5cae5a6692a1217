"""Pure-NumPy versions of the two hot kernels.

Used when the compiled extension (loomspect._scan_cy) is unavailable, and as
the reference implementation the extension is tested against. Semantics of
both backends are identical by construction: same comparison order, same
lowest-index tie-breaking; only floating-point summation order differs.
"""

import numpy as np
from scipy.spatial.distance import cdist

# Rows of the (N, M) distance block computed per cdist call. Keeps the
# temporary below ~8 MB for realistic bank sizes instead of materializing the
# full N x M matrix.
_CHUNK_ROWS = 2048


def grow_bank(patches: np.ndarray, theta: float):
    """Single-pass similarity-gated bank growth.

    patches: (N, d) float64, C-contiguous, no zero-norm rows (enforced by the
    caller). Returns (weights (M, d), supporters (M,) int64, assignments (N,)
    int64) where assignments[i] is the feature patch i created or joined.

    The first patch always becomes feature 0. Each later patch joins the
    feature of maximal clamped-cosine similarity when that similarity reaches
    theta (lowest index wins ties), updating the feature's running mean;
    otherwise it becomes a new feature.
    """
    n, d = patches.shape
    cap = 64
    weights = np.zeros((cap, d), dtype=np.float64)
    norms = np.zeros(cap, dtype=np.float64)
    counts = np.zeros(cap, dtype=np.int64)
    assignments = np.empty(n, dtype=np.int64)

    patch_norms = np.sqrt(np.einsum("ij,ij->i", patches, patches))
    m = 0
    for i in range(n):
        p = patches[i]
        pn = patch_norms[i]
        best_j = -1
        if m > 0:
            denom = norms[:m] * pn
            sims = weights[:m] @ p
            sims = np.divide(sims, denom, out=np.zeros(m), where=denom > 0)
            np.maximum(sims, 0.0, out=sims)
            j = int(np.argmax(sims))
            if sims[j] >= theta:
                best_j = j
        if best_j < 0:
            if m == cap:
                cap *= 2
                weights = np.concatenate([weights, np.zeros_like(weights)])
                norms = np.concatenate([norms, np.zeros_like(norms)])
                counts = np.concatenate([counts, np.zeros_like(counts)])
            weights[m] = p
            norms[m] = pn
            counts[m] = 1
            assignments[i] = m
            m += 1
        else:
            weights[best_j] += (p - weights[best_j]) / (counts[best_j] + 1)
            counts[best_j] += 1
            norms[best_j] = np.sqrt(weights[best_j] @ weights[best_j])
            assignments[i] = best_j
    return weights[:m].copy(), counts[:m].copy(), assignments


def nearest_l1(queries: np.ndarray, bank: np.ndarray):
    """Unnormalized Manhattan distance to the nearest bank row.

    queries: (N, d), bank: (M, d), both float64. Returns (sums (N,), indices
    (N,) int64); indices take the lowest row on exact ties.
    """
    if bank.shape[0] == 0:
        raise ValueError("bank must contain at least one row")
    n = queries.shape[0]
    sums = np.empty(n, dtype=np.float64)
    idx = np.empty(n, dtype=np.int64)
    for start in range(0, n, _CHUNK_ROWS):
        stop = min(start + _CHUNK_ROWS, n)
        block = cdist(queries[start:stop], bank, metric="cityblock")
        local = block.argmin(axis=1)
        idx[start:stop] = local
        sums[start:stop] = block[np.arange(stop - start), local]
    return sums, idx
