"""Label propagation with clamped items and the leave-one-out regularizer.

A user's relevancy labels live on all entities: item entries are clamped to
the observed 0/1 labels, non-item entries are free.  The minimum of the
quadratic smoothness energy is the harmonic extension of the clamped values,
reachable either by iterating "multiply by the row-stochastic transition,
re-clamp the items" or in closed form by solving the free-block linear
system.  Holding one item out and reproducing its label by propagation from
the rest yields a differentiable training signal for the edge weights.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from kgrec.errors import SingularSystemError
from kgrec.scoring import build_transition

log = logging.getLogger(__name__)

# Cross-entropy inputs are clipped here: propagation can hit exact 0/1 on trees.
LABEL_EPS = 1e-7


def energy(labels, user_adj):
    """Smoothness energy: half the weighted sum of squared label gaps
    over ordered entity pairs."""
    coo = user_adj.adj.tocoo()
    diff = labels[coo.row] - labels[coo.col]
    return 0.5 * float(coo.data @ (diff * diff))


def propagate_step(labels, P, clamp_mask, clamp_values):
    """One propagation sweep: labels <- P @ labels, then re-clamp items."""
    out = P @ labels
    out[clamp_mask] = clamp_values[clamp_mask]
    return out


@dataclass
class PropagationResult:
    labels: np.ndarray
    iterations: int
    converged: bool


def propagate_to_convergence(labels0, P, clamp_mask, clamp_values,
                             tol=1e-10, max_iter=10000):
    """Iterate propagation until the fixed point is within tol (max-norm).

    The per-sweep update shrinks geometrically, so the remaining distance is
    bounded by delta * r / (1 - r) with r the measured contraction ratio;
    iteration stops once that bound falls below tol.  The fixed point does
    not depend on the free entries of `labels0`; a non-converged result
    (max_iter hit) is flagged, not raised.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    labels = labels0.astype(np.float64, copy=True)
    labels[clamp_mask] = clamp_values[clamp_mask]
    prev_delta = None
    for it in range(1, max_iter + 1):
        nxt = propagate_step(labels, P, clamp_mask, clamp_values)
        delta = float(np.max(np.abs(nxt - labels))) if len(labels) else 0.0
        labels = nxt
        if delta == 0.0:
            return PropagationResult(labels=labels, iterations=it, converged=True)
        if delta < tol:
            if prev_delta is None:
                return PropagationResult(labels=labels, iterations=it,
                                         converged=True)
            r = min(delta / prev_delta, 1.0 - 1e-12)
            if delta * r / (1.0 - r) < tol:
                return PropagationResult(labels=labels, iterations=it,
                                         converged=True)
        prev_delta = delta
    log.warning("propagation did not converge in %d iterations", max_iter)
    return PropagationResult(labels=labels, iterations=max_iter, converged=False)


@dataclass
class PartitionedTransition:
    """Blocks of the transition matrix in clamped-items-first ordering."""

    P_VV: sp.csr_matrix
    P_VE: sp.csr_matrix
    P_EV: sp.csr_matrix
    P_EE: sp.csr_matrix
    clamped_idx: np.ndarray
    free_idx: np.ndarray


def build_partition(P, clamp_mask):
    P = P.tocsr()
    clamped = np.flatnonzero(clamp_mask)
    free = np.flatnonzero(~clamp_mask)
    return PartitionedTransition(
        P_VV=P[clamped][:, clamped], P_VE=P[clamped][:, free],
        P_EV=P[free][:, clamped], P_EE=P[free][:, free],
        clamped_idx=clamped, free_idx=free)


def closed_form_labels(partition, y_clamped):
    """Free-entity labels solving (I - P_EE) x = P_EV @ y_clamped."""
    n_free = len(partition.free_idx)
    if n_free == 0:
        return np.empty(0, dtype=np.float64)
    rhs = partition.P_EV @ y_clamped
    system = sp.identity(n_free, format="csr") - partition.P_EE
    if n_free <= 400:
        return np.linalg.solve(system.toarray(), rhs)
    return spla.spsolve(system.tocsc(), rhs)


def _check_reachability(user_adj, clamp_mask):
    """Every free entity must reach a clamped one, else the solve is singular."""
    n_comp, comp = connected_components(user_adj.adj, directed=False)
    has_clamp = np.zeros(n_comp, dtype=bool)
    has_clamp[comp[clamp_mask]] = True
    stranded = np.flatnonzero(~clamp_mask & ~has_clamp[comp])
    if len(stranded):
        raise SingularSystemError(stranded.tolist())


def solve_labels(user_adj, clamp_mask, clamp_values):
    """Closed-form fixed point over all entities (clamped entries verbatim)."""
    _check_reachability(user_adj, clamp_mask)
    P = build_transition(user_adj)
    part = build_partition(P, clamp_mask)
    free = closed_form_labels(part, clamp_values[part.clamped_idx])
    labels = np.empty(user_adj.n, dtype=np.float64)
    labels[part.clamped_idx] = clamp_values[part.clamped_idx]
    labels[part.free_idx] = free
    return labels


def verify_harmonic(labels, user_adj, clamp_mask):
    """Max residual |l_i - weighted neighbor average| over free entities."""
    free = ~clamp_mask
    if not free.any():
        return 0.0
    d = user_adj.degrees[free]
    if np.any(d <= 0):
        raise ValueError("zero-degree free entity has no harmonic condition")
    avg = (user_adj.adj[free] @ labels) / d
    return float(np.max(np.abs(labels[free] - avg)))


@dataclass
class LabelContext:
    """Per-user propagation setup over a fixed entity set."""

    user_adj: object            # UserAdjacency, typically without self loops
    P: sp.csr_matrix
    clamp_mask: np.ndarray
    clamp_values: np.ndarray
    item_entities: np.ndarray   # entity id per item id

    def item_entity(self, item):
        return int(self.item_entities[item])


def label_context(kg, user_adj, item_labels, known_items=None):
    """Clamp item entities at their 0/1 labels; non-items are free.

    `known_items` restricts the clamps to the items whose label is actually
    observed (implicit-feedback rows); by default every item is clamped.
    """
    clamp_mask = kg.entity_is_item.copy()
    clamp_values = np.zeros(kg.n_entities, dtype=np.float64)
    clamp_values[kg.item_entities] = np.asarray(item_labels, dtype=np.float64)
    if known_items is not None:
        clamp_mask[:] = False
        clamp_mask[kg.item_entities[np.asarray(known_items, dtype=np.int64)]] = True
        clamp_values[~clamp_mask] = 0.0
    return LabelContext(user_adj=user_adj, P=build_transition(user_adj),
                        clamp_mask=clamp_mask, clamp_values=clamp_values,
                        item_entities=kg.item_entities)


def leave_one_out_label(ctx, held_out, steps=None, tol=1e-10, max_iter=10000):
    """Predicted label of one item with its own clamp removed.

    Runs propagation with every other clamped entry fixed; `steps` limits the
    sweep count (the differentiable training path uses a small fixed number),
    the default propagates to convergence.  Returns the neutral prior 0.5
    when nothing else is clamped.
    """
    entity = ctx.item_entity(held_out)
    mask = ctx.clamp_mask.copy()
    mask[entity] = False
    if not mask.any():
        log.warning("held-out item %d has no clamped companions; "
                    "returning neutral prior", held_out)
        return 0.5
    if steps is None:
        res = propagate_to_convergence(np.zeros(len(mask)), ctx.P, mask,
                                       ctx.clamp_values, tol=tol,
                                       max_iter=max_iter)
        labels = res.labels
    else:
        # finite-step estimator: free entries start at the neutral prior,
        # matching the training-time unroll
        labels = np.where(mask, ctx.clamp_values, 0.5)
        for _ in range(steps):
            labels = propagate_step(labels, ctx.P, mask, ctx.clamp_values)
    return float(labels[entity])


def binary_cross_entropy(y, p):
    """Elementwise cross-entropy with inputs clipped away from exact 0/1."""
    pc = np.clip(p, LABEL_EPS, 1.0 - LABEL_EPS)
    return -(y * np.log(pc) + (1.0 - y) * np.log1p(-pc))


def transition_dense(A):
    """Row-normalize a dense adjacency; zero rows become self-absorbing."""
    rowsum = A.sum(axis=1)
    P = np.zeros_like(A)
    live = rowsum > 0
    P[live] = A[live] / rowsum[live, None]
    dead = np.flatnonzero(~live)
    P[dead, dead] = 1.0
    return P, rowsum


@dataclass
class LooCache:
    P: np.ndarray
    rowsum: np.ndarray
    free: np.ndarray          # (n, n_h) True where the entry propagates
    clamp_cols: np.ndarray    # (n, n_h) clamp values, zero on free entries
    levels: list              # label matrices L_0..L_K, each (n, n_h)
    held_rows: np.ndarray
    y_held: np.ndarray
    lhat: np.ndarray
    inbounds: np.ndarray


def unrolled_loo(A, clamp_mask, clamp_values, held_rows, y_held, n_steps):
    """Leave-one-out labels for several held-out rows in one K-step unroll.

    One column per held-out row: that row's clamp is lifted in its own column
    only.  Free entries start at the neutral prior 0.5 (the fixed point does
    not depend on the start; at finite K this keeps predictions away from the
    cross-entropy clip and its unbounded 1/p gradients).  Returns the
    held-out predictions and a cache for the backward pass.  Columns with no
    remaining clamped entry get the prior 0.5 and no gradient.
    """
    n = A.shape[0]
    n_h = len(held_rows)
    P, rowsum = transition_dense(A)
    free = np.broadcast_to(~clamp_mask[:, None], (n, n_h)).copy()
    free[held_rows, np.arange(n_h)] = True
    clamp_cols = np.where(free, 0.0, clamp_values[:, None])

    L = np.where(free, 0.5, clamp_cols)
    levels = [L]
    for _ in range(n_steps):
        L = np.where(free, P @ L, clamp_cols)
        levels.append(L)

    lhat = L[held_rows, np.arange(n_h)].copy()
    dead_cols = ~(~free).any(axis=0)
    lhat[dead_cols] = 0.5
    lc = np.clip(lhat, LABEL_EPS, 1.0 - LABEL_EPS)
    inbounds = (lhat > LABEL_EPS) & (lhat < 1.0 - LABEL_EPS) & ~dead_cols
    loss = float(np.mean(-(y_held * np.log(lc) + (1 - y_held) * np.log1p(-lc))))
    return loss, LooCache(P=P, rowsum=rowsum, free=free, clamp_cols=clamp_cols,
                          levels=levels, held_rows=held_rows, y_held=y_held,
                          lhat=lhat, inbounds=inbounds)


def unrolled_loo_backward(cache, scale=1.0):
    """Gradient of the unrolled leave-one-out loss w.r.t. the adjacency.

    Walks the stored sweeps backwards; the re-clamp projection zeroes
    gradient flow into clamped entries, and the row normalization folds the
    degree dependence into the adjacency gradient.
    """
    P, rowsum, free = cache.P, cache.rowsum, cache.free
    n_h = len(cache.held_rows)
    lc = np.clip(cache.lhat, LABEL_EPS, 1.0 - LABEL_EPS)
    dlhat = (-cache.y_held / lc + (1 - cache.y_held) / (1 - lc)) / n_h
    dlhat = dlhat * cache.inbounds * scale

    G = np.zeros_like(cache.levels[-1])
    G[cache.held_rows, np.arange(n_h)] = dlhat
    dP = np.zeros_like(P)
    for k in range(len(cache.levels) - 2, -1, -1):
        Gm = np.where(free, G, 0.0)
        dP += Gm @ cache.levels[k].T
        G = P.T @ Gm

    dA = np.zeros_like(P)
    live = rowsum > 0
    inner = (dP * P).sum(axis=1, keepdims=True)
    dA[live] = (dP[live] - inner[live]) / rowsum[live, None]
    return dA


def ls_regularizer(A, clamp_mask, clamp_values, held_rows, y_held, n_steps):
    """Leave-one-out loss over held-out rows plus its adjacency gradient.

    `A` is the dense local adjacency without self loops; the gradient keeps
    the row-normalization coupling, so perturbing one symmetric edge weight
    (both ordered entries) by h moves the loss by (dA[i,j]+dA[j,i])*h.
    """
    held_rows = np.asarray(held_rows, dtype=np.int64)
    y_held = np.asarray(y_held, dtype=np.float64)
    loss, cache = unrolled_loo(A, clamp_mask, clamp_values, held_rows,
                               y_held, n_steps)
    dA = unrolled_loo_backward(cache)
    return loss, dA, cache.lhat
