"""Seeded Louvain community detection on undirected weighted graphs.

Standard two-phase scheme: greedy local moves in node order shuffled by the
seed until no move improves modularity, then aggregation of communities
into supernodes, repeated until a level makes no move. Tie-breaking and
sweep order are fully determined by the seed, so a given (graph, seed)
always yields the same partition.

Once the hierarchy converges, no community merge can strictly raise
modularity, but exactly tied merges can remain (line graphs are prone to
such degeneracies). A final pass collapses those zero-loss ties toward the
coarsest equal-modularity partition, in deterministic order.

Graphs are edge arrays (u, v, w) with u < v plus a per-node self-loop
weight array; a self-loop of weight x contributes 2x to its node's degree.
"""

from __future__ import annotations

import numpy as np

_MAX_SWEEPS = 200


def louvain_labels(n_nodes: int, u: np.ndarray, v: np.ndarray,
                   seed: int, weights: np.ndarray | None = None) -> np.ndarray:
    """Community label per node (dense ints, ordered by first appearance)."""
    if u.size == 0:
        return np.arange(n_nodes, dtype=np.int64)
    w = np.ones(u.size, dtype=np.float64) if weights is None else weights.astype(np.float64)
    loop = np.zeros(n_nodes, dtype=np.float64)
    u = u.astype(np.int64)
    v = v.astype(np.int64)

    rng = np.random.default_rng(seed)
    mapping = np.arange(n_nodes, dtype=np.int64)
    n = n_nodes
    u0, v0, w0 = u, v, w
    while True:
        labels, moved = _one_level(n, u, v, w, loop, rng)
        if not moved:
            break
        mapping = labels[mapping]
        n_comms = int(labels.max()) + 1
        if n_comms == n:
            break
        n, u, v, w, loop = _aggregate(n_comms, u, v, w, loop, labels)
    mapping = _collapse_tied_communities(mapping, u0, v0, w0)
    return _dense_by_first_appearance(mapping)


def _one_level(n: int, u: np.ndarray, v: np.ndarray, w: np.ndarray,
               loop: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, bool]:
    src = np.concatenate([u, v])
    dst = np.concatenate([v, u])
    ww = np.concatenate([w, w])
    order = np.lexsort((dst, src))
    src, dst, ww = src[order], dst[order], ww[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    indptr[1:] = np.cumsum(np.bincount(src, minlength=n))

    k = np.bincount(src, weights=ww, minlength=n) + 2.0 * loop
    m2 = float(k.sum())
    if m2 == 0.0:
        return np.arange(n, dtype=np.int64), False

    comm = np.arange(n, dtype=np.int64)
    tot = k.copy()
    dst_list = dst.tolist()
    ww_list = ww.tolist()
    indptr_list = indptr.tolist()
    comm_list = comm.tolist()
    k_list = k.tolist()

    any_moved = False
    for _ in range(_MAX_SWEEPS):
        moved = 0
        for i in rng.permutation(n).tolist():
            ci = comm_list[i]
            ki = k_list[i]
            neighbor_w: dict[int, float] = {}
            for jj in range(indptr_list[i], indptr_list[i + 1]):
                cj = comm_list[dst_list[jj]]
                neighbor_w[cj] = neighbor_w.get(cj, 0.0) + ww_list[jj]
            tot[ci] -= ki
            stay = neighbor_w.get(ci, 0.0) - ki * tot[ci] / m2
            best_c = ci
            best_gain = stay
            for c, wc in neighbor_w.items():
                if c == ci:
                    continue
                gain = wc - ki * tot[c] / m2
                if gain > best_gain + 1e-12:
                    best_gain = gain
                    best_c = c
            comm_list[i] = best_c
            tot[best_c] += ki
            if best_c != ci:
                moved += 1
        if moved == 0:
            break
        any_moved = True

    labels = _dense_by_first_appearance(np.asarray(comm_list, dtype=np.int64))
    return labels, any_moved


def _aggregate(n_comms: int, u: np.ndarray, v: np.ndarray, w: np.ndarray,
               loop: np.ndarray, labels: np.ndarray):
    cu = labels[u]
    cv = labels[v]
    new_loop = np.bincount(labels, weights=loop, minlength=n_comms)
    intra = cu == cv
    if intra.any():
        new_loop += np.bincount(cu[intra], weights=w[intra], minlength=n_comms)
    lo = np.minimum(cu[~intra], cv[~intra])
    hi = np.maximum(cu[~intra], cv[~intra])
    keys = lo * n_comms + hi
    uniq, inverse = np.unique(keys, return_inverse=True)
    new_w = np.bincount(inverse, weights=w[~intra])
    new_u = uniq // n_comms
    new_v = uniq % n_comms
    return n_comms, new_u, new_v, new_w, new_loop


def _collapse_tied_communities(labels: np.ndarray, u: np.ndarray, v: np.ndarray,
                               w: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Merge connected community pairs whose merge leaves modularity unchanged.

    After convergence every pairwise merge gain is <= 0, and merging two
    zero-gain pairs can never make a later pair positive (gains add), so
    this keeps modularity exactly and always terminates.
    """
    labels = _dense_by_first_appearance(labels)
    n_comms = int(labels.max()) + 1
    if n_comms < 2:
        return labels
    total_w = float(w.sum())
    if total_w == 0.0:
        return labels
    d = np.bincount(labels[u], weights=w, minlength=n_comms) \
        + np.bincount(labels[v], weights=w, minlength=n_comms)
    between: dict[tuple[int, int], float] = {}
    for a, b, weight in zip(labels[u].tolist(), labels[v].tolist(), w.tolist()):
        if a != b:
            key = (a, b) if a < b else (b, a)
            between[key] = between.get(key, 0.0) + weight

    alias = {c: c for c in range(n_comms)}

    def find(c: int) -> int:
        while alias[c] != c:
            alias[c] = alias[alias[c]]
            c = alias[c]
        return c

    while True:
        roots: dict[tuple[int, int], float] = {}
        for (a, b), weight in between.items():
            ra, rb = find(a), find(b)
            if ra != rb:
                key = (ra, rb) if ra < rb else (rb, ra)
                roots[key] = roots.get(key, 0.0) + weight
        merged = False
        for (ra, rb) in sorted(roots):
            gain = roots[(ra, rb)] / total_w - d[ra] * d[rb] / (2.0 * total_w ** 2)
            if gain >= -tol:
                alias[rb] = ra
                d[ra] += d[rb]
                merged = True
                break  # one merge per sweep keeps the gains exact
        if not merged:
            break
    return np.asarray([find(int(c)) for c in labels.tolist()], dtype=np.int64)


def _dense_by_first_appearance(labels: np.ndarray) -> np.ndarray:
    seen: dict[int, int] = {}
    out = np.empty_like(labels)
    for i, c in enumerate(labels.tolist()):
        out[i] = seen.setdefault(c, len(seen))
    return out
