"""Pure-Python breadth-first search over CSR adjacency arrays.

Fallback for the compiled kernel in `kgrec._bfs`; same contract, same
results, roughly two orders of magnitude slower on large graphs.
"""

import numpy as np


def _bfs(indptr, nbrs, src, dst, cap, dist, queue, stamp, seen):
    if src == dst:
        return 0
    head = tail = 0
    seen[src] = stamp
    dist[src] = 0
    queue[tail] = src
    tail += 1
    while head < tail:
        node = queue[head]
        head += 1
        d = dist[node]
        if d >= cap:
            continue
        for k in range(indptr[node], indptr[node + 1]):
            nb = nbrs[k]
            if seen[nb] == stamp:
                continue
            if nb == dst:
                return d + 1
            seen[nb] = stamp
            dist[nb] = d + 1
            queue[tail] = nb
            tail += 1
    return -1


def pair_distance(indptr, nbrs, src, dst, cap):
    """Hop distance between src and dst, or -1 if further than cap hops."""
    n = indptr.shape[0] - 1
    dist = np.empty(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    seen = np.zeros(n, dtype=np.int64)
    return _bfs(indptr, nbrs, int(src), int(dst), int(cap), dist, queue, 1, seen)


def pair_distances(indptr, nbrs, pairs, cap):
    """Vector of capped hop distances for an (m, 2) array of node pairs."""
    n = indptr.shape[0] - 1
    m = pairs.shape[0]
    out = np.empty(m, dtype=np.int64)
    dist = np.empty(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    seen = np.zeros(n, dtype=np.int64)
    for i in range(m):
        out[i] = _bfs(indptr, nbrs, int(pairs[i, 0]), int(pairs[i, 1]),
                      int(cap), dist, queue, i + 1, seen)
    return out
