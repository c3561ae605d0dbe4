"""Pure numpy implementation of the smoothing kernels (fallback backend)."""
import numpy as np

# Rows of the (targets x sites) weight block processed at once.
_CHUNK_ELEMENTS = 1 << 20


def kth_nearest_distances(positions, targets, k):
    """Distance from every target to its k-th nearest position (positions sorted)."""
    positions = np.ascontiguousarray(positions, dtype=np.float64)
    targets = np.ascontiguousarray(targets, dtype=np.float64)
    n = positions.shape[0]
    if n == 0:
        raise ValueError("empty site list")
    if k < 1 or k > n:
        raise ValueError("k must lie in [1, number of sites]")
    out = np.empty(targets.shape[0])
    step = max(1, _CHUNK_ELEMENTS // n)
    for start in range(0, targets.shape[0], step):
        block = np.abs(positions[None, :] - targets[start:start + step, None])
        out[start:start + step] = np.partition(block, k - 1, axis=1)[:, k - 1]
    return out


def nw_smooth_rows(positions, levels, targets, bandwidths):
    """Gaussian Nadaraya-Watson estimate at ``targets`` for every row of ``levels``.

    Returns ``(values, bad)`` where ``bad`` is the index of the first target
    whose kernel weights all underflow, or -1.
    """
    positions = np.ascontiguousarray(positions, dtype=np.float64)
    levels = np.ascontiguousarray(levels, dtype=np.float64)
    targets = np.ascontiguousarray(targets, dtype=np.float64)
    bandwidths = np.ascontiguousarray(bandwidths, dtype=np.float64)
    n = positions.shape[0]
    if levels.shape[1] != n:
        raise ValueError("levels and positions disagree in length")
    if bandwidths.shape[0] != targets.shape[0]:
        raise ValueError("one bandwidth per target required")
    out = np.empty((levels.shape[0], targets.shape[0]))
    bad = -1
    step = max(1, _CHUNK_ELEMENTS // max(n, 1))
    for start in range(0, targets.shape[0], step):
        stop = min(start + step, targets.shape[0])
        u = (positions[None, :] - targets[start:stop, None]) / bandwidths[start:stop, None]
        w = np.exp(-0.5 * u * u)
        wsum = w.sum(axis=1)
        dead = ~(wsum > 0.0)
        if dead.any() and bad < 0:
            bad = start + int(np.flatnonzero(dead)[0])
        wsum[dead] = 1.0
        # one matrix-vector product per row keeps results independent of row count
        for row in range(levels.shape[0]):
            vals = (w @ levels[row]) / wsum
            vals[dead] = 0.0
            out[row, start:stop] = vals
    return out, bad
