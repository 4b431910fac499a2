"""User-specific edge weighting of the knowledge graph.

Each relation type gets a raw importance score for a user (inner product of
user and relation embeddings), mapped through softplus so every edge weight
is strictly positive; the graph then has well-defined degrees and both the
symmetric normalization and the row-stochastic transition matrix exist.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from kgrec.errors import DimensionError


def relation_score(u, r):
    """Raw (possibly negative) importance of relation r for user u."""
    u = np.asarray(u, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if u.shape != r.shape:
        raise DimensionError(f"embedding dims differ: {u.shape} vs {r.shape}")
    return float(u @ r)


def edge_weight(raw_score):
    """softplus(x) = ln(1 + e^x): positive, monotone, overflow-safe."""
    return np.logaddexp(0.0, raw_score)


def relation_weights(user_vec, rel_embs):
    """(raw scores, softplus weights) for every relation type at once."""
    if rel_embs.shape[1] != user_vec.shape[0]:
        raise DimensionError(
            f"user dim {user_vec.shape[0]} vs relation dim {rel_embs.shape[1]}")
    s = rel_embs @ user_vec
    return s, edge_weight(s)


@dataclass
class UserAdjacency:
    """Symmetric weighted adjacency for one user, with its degree vector."""

    adj: sp.csr_matrix       # weights >= 0; diagonal 1.0 when self_loops
    degrees: np.ndarray      # row sums of adj
    self_loops: bool

    @property
    def n(self):
        return self.adj.shape[0]

    @classmethod
    def from_edges(cls, n, edges, self_loops=False):
        """Build from (i, j, weight) undirected edges; mostly for tests."""
        rows, cols, data = [], [], []
        for i, j, w in edges:
            rows += [i, j]
            cols += [j, i]
            data += [w, w]
        adj = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
        if self_loops:
            adj = adj + sp.identity(n, format="csr")
        return cls(adj=adj, degrees=np.asarray(adj.sum(axis=1)).ravel(),
                   self_loops=self_loops)

    def without_self_loops(self):
        if not self.self_loops:
            return self
        adj = self.adj.copy()
        adj.setdiag(0.0)
        adj.eliminate_zeros()
        return UserAdjacency(adj=adj, degrees=np.asarray(adj.sum(axis=1)).ravel(),
                             self_loops=False)


def build_user_adjacency(kg, user_vec, rel_embs, add_self_loops=True):
    """Weight every KG edge by the user's softplus relation score.

    Both stored directions of an edge read the same relation id, so the
    matrix is symmetric bitwise.  With self loops the diagonal is fixed at
    1.0 before degrees are taken.
    """
    if rel_embs.shape[0] < kg.n_relations:
        raise DimensionError(
            f"{kg.n_relations} relations in graph, {rel_embs.shape[0]} embeddings")
    _, w = relation_weights(user_vec, rel_embs)
    n = kg.n_entities
    data = w[kg.rel] if len(kg.rel) else np.empty(0, dtype=np.float64)
    adj = sp.csr_matrix((data, kg.nbr, kg.indptr), shape=(n, n))
    if add_self_loops:
        adj = adj + sp.identity(n, format="csr")
    degrees = np.asarray(adj.sum(axis=1)).ravel()
    return UserAdjacency(adj=adj, degrees=degrees, self_loops=add_self_loops)


def normalize_symmetric(user_adj):
    """D^{-1/2} A D^{-1/2}; requires strictly positive degrees."""
    d = user_adj.degrees
    if np.any(d <= 0):
        raise ValueError("zero-degree entity: enable self loops before normalizing")
    dinv = 1.0 / np.sqrt(d)
    scale = sp.diags(dinv)
    return (scale @ user_adj.adj @ scale).tocsr()


def build_transition(user_adj):
    """Row-stochastic P = D^{-1} A; requires strictly positive degrees."""
    d = user_adj.degrees
    if np.any(d <= 0):
        raise ValueError("zero-degree entity: transition matrix undefined")
    return (sp.diags(1.0 / d) @ user_adj.adj).tocsr()
