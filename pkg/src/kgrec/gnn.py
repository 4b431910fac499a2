"""Feature propagation over per-user weighted receptive fields.

For a batch of one user's items, a depth-L sampled neighborhood is
materialized as a small dense adjacency (the full entity-by-entity matrix is
never built), symmetrically normalized with exact whole-graph degrees, and
propagated through L layers (ReLU inside, tanh on the last).  Engagement
probability is the logistic of the user/item inner product.

Gradients are hand-derived and taped: the backward pass goes through the
prediction, the activations, the matrix products, the degree-dependent
normalization, the softplus edge weights, and the relation scores, ending at
user embeddings, relation embeddings, entity features, and layer weights.
Correctness is policed by a central-finite-difference oracle in the tests.
"""

from dataclasses import dataclass

import numpy as np

from kgrec import labelprop
from kgrec.errors import DimensionError, KgrecError
from kgrec.scoring import relation_weights

LOGIT_CLAMP = 15.0


@dataclass
class ModelParams:
    """Everything trainable: embeddings, entity features, layer weights."""

    user_emb: np.ndarray     # (n_users, d)
    rel_emb: np.ndarray      # (n_relations, d)
    entity_feat: np.ndarray  # (n_entities, d)
    weights: list            # L matrices, each (d, d)

    @property
    def d(self):
        return self.user_emb.shape[1]

    @property
    def n_layers(self):
        return len(self.weights)

    def named_tensors(self):
        yield "user_emb", self.user_emb
        yield "rel_emb", self.rel_emb
        yield "entity_feat", self.entity_feat
        for l, w in enumerate(self.weights):
            yield f"weight_{l}", w

    def copy(self):
        return ModelParams(self.user_emb.copy(), self.rel_emb.copy(),
                           self.entity_feat.copy(),
                           [w.copy() for w in self.weights])

    def check_finite(self):
        for name, t in self.named_tensors():
            if not np.all(np.isfinite(t)):
                raise KgrecError(f"non-finite values in parameter {name}")

    def squared_norm(self):
        with np.errstate(over="ignore"):  # inf is caught by the loss check
            return float(sum((t * t).sum() for _, t in self.named_tensors()))


def zero_grads(params):
    return ModelParams(np.zeros_like(params.user_emb),
                       np.zeros_like(params.rel_emb),
                       np.zeros_like(params.entity_feat),
                       [np.zeros_like(w) for w in params.weights])


def init_params(n_users, n_relations, n_entities, d, n_layers, rng):
    """Embeddings ~ U(-0.05, 0.05); layer weights ~ U(+-1/sqrt(fan_in))."""
    bound = 1.0 / np.sqrt(d)
    return ModelParams(
        user_emb=rng.uniform(-0.05, 0.05, size=(n_users, d)),
        rel_emb=rng.uniform(-0.05, 0.05, size=(n_relations, d)),
        entity_feat=rng.uniform(-0.05, 0.05, size=(n_entities, d)),
        weights=[rng.uniform(-bound, bound, size=(d, d)) for _ in range(n_layers)])


@dataclass
class ReceptiveField:
    """Depth-L sampled neighborhood of a set of seed entities.

    Local row i corresponds to global entity `entities[i]`; seeds occupy the
    first rows.  Edges are the deduplicated union of each expanded entity's
    sampled neighbor links (both endpoints' rows are local).
    """

    entities: np.ndarray
    seed_rows: np.ndarray
    edge_src: np.ndarray
    edge_dst: np.ndarray
    edge_rel: np.ndarray
    n_layers: int


def build_receptive_field(kg, seed_entities, S, n_layers, rng):
    """Expand seeds outward for `n_layers` hops with S-capped sampling.

    Entities of degree <= S keep their whole neighbor list (this makes the
    restricted forward pass agree exactly with the full-graph one once S
    reaches the max degree); larger neighborhoods are subsampled uniformly
    without replacement.  An entity reached at several depths is expanded
    once.
    """
    local = {}
    order = []

    def row_of(e):
        r = local.get(e)
        if r is None:
            r = len(order)
            local[e] = r
            order.append(e)
        return r

    seed_rows = np.asarray([row_of(int(e)) for e in seed_entities], dtype=np.int64)
    frontier = list(dict.fromkeys(int(e) for e in seed_entities))
    edges = {}
    for _ in range(n_layers):
        grown = []
        for e in frontier:
            lo, hi = kg.indptr[e], kg.indptr[e + 1]
            deg = hi - lo
            if deg == 0:
                continue
            if deg <= S:
                idx = np.arange(lo, hi)
            else:
                picks = rng.choice(deg, size=S, replace=False)
                picks.sort()
                idx = lo + picks
            for t, r in zip(kg.nbr[idx].tolist(), kg.rel[idx].tolist()):
                key = (e, t) if e < t else (t, e)
                if key not in edges:
                    edges[key] = r
                if t not in local:
                    row_of(t)
                    grown.append(t)
        frontier = grown

    src = np.fromiter((local[a] for a, _ in edges), dtype=np.int64, count=len(edges))
    dst = np.fromiter((local[b] for _, b in edges), dtype=np.int64, count=len(edges))
    rel = np.fromiter(edges.values(), dtype=np.int64, count=len(edges))
    return ReceptiveField(entities=np.asarray(order, dtype=np.int64),
                          seed_rows=seed_rows, edge_src=src, edge_dst=dst,
                          edge_rel=rel, n_layers=n_layers)


def full_receptive_field(kg, seed_entities):
    """Whole graph as one receptive field (reference path for tests)."""
    ent = np.arange(kg.n_entities, dtype=np.int64)
    order = np.concatenate([np.asarray(seed_entities, dtype=np.int64),
                            np.setdiff1d(ent, seed_entities)])
    inv = np.empty(kg.n_entities, dtype=np.int64)
    inv[order] = np.arange(kg.n_entities)
    src, dst, rel = [], [], []
    for e in range(kg.n_entities):
        nbrs, rels = kg.neighbors(e)
        for t, r in zip(nbrs, rels):
            if e < t:
                src.append(inv[e])
                dst.append(inv[t])
                rel.append(r)
    return ReceptiveField(entities=order,
                          seed_rows=np.arange(len(seed_entities), dtype=np.int64),
                          edge_src=np.asarray(src, dtype=np.int64),
                          edge_dst=np.asarray(dst, dtype=np.int64),
                          edge_rel=np.asarray(rel, dtype=np.int64),
                          n_layers=0)


def local_adjacency(kg, rf, rel_weights):
    """Dense local adjacency (self loops on the diagonal) and exact degrees.

    Degrees come from the whole graph's per-relation incidence counts, not
    from the sampled rows, so normalization matches the full-graph operator
    wherever the sampled rows are complete.
    """
    n = len(rf.entities)
    A = np.zeros((n, n), dtype=np.float64)
    w_edge = rel_weights[rf.edge_rel]
    A[rf.edge_src, rf.edge_dst] = w_edge
    A[rf.edge_dst, rf.edge_src] = w_edge
    np.fill_diagonal(A, 1.0)
    degrees = kg.rel_counts[rf.entities] @ rel_weights + 1.0
    return A, degrees


def forward_layers(A_hat, H0, weights, activations=None):
    """Stack of H_{l+1} = act_l(A_hat @ H_l @ W_l).

    Default activations: ReLU for every layer but the last, tanh last.
    Returns (H levels, preactivations, aggregated inputs A_hat @ H_l).
    """
    n_layers = len(weights)
    H = [H0]
    pre = []
    agg = []
    for l, W in enumerate(weights):
        if H[l].shape[1] != W.shape[0]:
            raise DimensionError(
                f"layer {l}: features {H[l].shape[1]} vs weight rows {W.shape[0]}")
        AH = A_hat @ H[l]
        M = AH @ W
        if activations is not None:
            nxt = activations[l](M)
        elif l == n_layers - 1:
            nxt = np.tanh(M)
        else:
            nxt = np.maximum(M, 0.0)
        if not np.all(np.isfinite(nxt)):
            raise KgrecError(f"non-finite activation at layer {l}")
        H.append(nxt)
        pre.append(M)
        agg.append(AH)
    return H, pre, agg


def predict(u, v):
    """Engagement probability: logistic of the clamped inner product."""
    z = np.clip(np.asarray(v) @ np.asarray(u), -LOGIT_CLAMP, LOGIT_CLAMP)
    return 1.0 / (1.0 + np.exp(-z))


@dataclass
class Batch:
    """One user's minibatch plus its frozen receptive field.

    `clamp_entities`/`clamp_labels` hold the user's known interaction rows
    (train positives and sampled negatives): these are the label-propagation
    clamps.  Items the user never rated stay free, like non-item entities.
    """

    user: int
    items: np.ndarray         # item ids
    labels: np.ndarray        # float 0/1
    clamp_entities: np.ndarray  # sorted entity ids with known labels
    clamp_labels: np.ndarray
    rf: ReceptiveField


def make_batch(kg, user, items, labels, known_items, known_labels, S,
               n_layers, rng):
    items = np.asarray(items, dtype=np.int64)
    ents = kg.item_entities[items]
    rf = build_receptive_field(kg, ents, S, n_layers, rng)
    clamp_entities = kg.item_entities[np.asarray(known_items, dtype=np.int64)]
    order = np.argsort(clamp_entities)
    return Batch(user=int(user), items=items,
                 labels=np.asarray(labels, dtype=np.float64),
                 clamp_entities=clamp_entities[order],
                 clamp_labels=np.asarray(known_labels, dtype=np.float64)[order],
                 rf=rf)


@dataclass
class BatchCache:
    batch: object
    u: np.ndarray
    s: np.ndarray
    w: np.ndarray
    A: np.ndarray
    degrees: np.ndarray
    dhalf: np.ndarray
    A_hat: np.ndarray
    H: list
    pre: list
    agg: list
    z_raw: np.ndarray
    yhat: np.ndarray
    pred_loss: float
    ls_loss: float
    loo: object  # labelprop.LooCache or None


def batch_forward(kg, batch, params, unroll_steps, with_ls):
    """Forward pass for one batch; caches every intermediate for backward."""
    rf = batch.rf
    u = params.user_emb[batch.user]
    s, w = relation_weights(u, params.rel_emb)
    A, degrees = local_adjacency(kg, rf, w)
    dhalf = 1.0 / np.sqrt(degrees)
    A_hat = A * dhalf[:, None] * dhalf[None, :]
    H0 = params.entity_feat[rf.entities]
    H, pre, agg = forward_layers(A_hat, H0, params.weights)

    V = H[-1][rf.seed_rows]
    z_raw = V @ u
    z = np.clip(z_raw, -LOGIT_CLAMP, LOGIT_CLAMP)
    yhat = 1.0 / (1.0 + np.exp(-z))
    pred_loss = float(np.mean(labelprop.binary_cross_entropy(batch.labels, yhat)))

    ls_loss, loo = 0.0, None
    held = np.flatnonzero(batch.labels == 1)
    if with_ls and len(held):
        A_lp = A.copy()
        np.fill_diagonal(A_lp, 0.0)
        pos = np.searchsorted(batch.clamp_entities, rf.entities)
        pos = np.minimum(pos, len(batch.clamp_entities) - 1)
        clamp_mask = batch.clamp_entities[pos] == rf.entities
        clamp_values = np.where(clamp_mask, batch.clamp_labels[pos], 0.0)
        held_rows = rf.seed_rows[held]
        ls_loss, loo = labelprop.unrolled_loo(
            A_lp, clamp_mask, clamp_values, held_rows,
            np.ones(len(held)), unroll_steps)

    return BatchCache(batch=batch, u=u, s=s, w=w, A=A, degrees=degrees,
                      dhalf=dhalf, A_hat=A_hat, H=H, pre=pre, agg=agg,
                      z_raw=z_raw, yhat=yhat, pred_loss=pred_loss,
                      ls_loss=ls_loss, loo=loo)


def batch_backward(kg, cache, params, ls_weight):
    """Exact gradients of (prediction loss + ls_weight * smoothness loss).

    Returns a ModelParams-shaped gradient holder; parameters the batch never
    touched keep zero gradient.  The L2 term is added by the caller.
    """
    batch = cache.batch
    rf = batch.rf
    g = zero_grads(params)
    n_rows = len(batch.labels)

    # prediction head
    inb = (np.abs(cache.z_raw) < LOGIT_CLAMP).astype(np.float64)
    dz = (cache.yhat - batch.labels) / n_rows * inb
    V = cache.H[-1][rf.seed_rows]
    du = V.T @ dz
    dH = np.zeros_like(cache.H[-1])
    dH[rf.seed_rows] = dz[:, None] * cache.u[None, :]

    # layers, deepest first
    dA_hat = np.zeros_like(cache.A_hat)
    n_layers = len(params.weights)
    for l in range(n_layers - 1, -1, -1):
        if l == n_layers - 1:
            G = dH * (1.0 - cache.H[l + 1] ** 2)
        else:
            G = dH * (cache.pre[l] > 0.0)
        g.weights[l] += cache.agg[l].T @ G
        dA_hat += G @ (cache.H[l] @ params.weights[l]).T
        dH = cache.A_hat.T @ (G @ params.weights[l].T)

    # normalization: A_hat = diag(dhalf) A diag(dhalf), with degrees a
    # function of the relation weights through the incidence counts
    dA = dA_hat * cache.dhalf[:, None] * cache.dhalf[None, :]
    prod = dA_hat * cache.A_hat
    ddeg = -(prod.sum(axis=1) + prod.sum(axis=0)) / (2.0 * cache.degrees)

    dw = np.zeros_like(cache.w)
    edge_grad = dA[rf.edge_src, rf.edge_dst] + dA[rf.edge_dst, rf.edge_src]
    np.add.at(dw, rf.edge_rel, edge_grad)
    dw += kg.rel_counts[rf.entities].T @ ddeg

    # label-smoothness path touches only the off-diagonal adjacency
    if cache.loo is not None and ls_weight != 0.0:
        dA_lp = labelprop.unrolled_loo_backward(cache.loo, scale=ls_weight)
        ls_edge_grad = (dA_lp[rf.edge_src, rf.edge_dst]
                        + dA_lp[rf.edge_dst, rf.edge_src])
        np.add.at(dw, rf.edge_rel, ls_edge_grad)

    # relation scores: w = softplus(s), s_r = <rel_emb_r, u>
    ds = dw / (1.0 + np.exp(-cache.s))
    g.rel_emb += ds[:, None] * cache.u[None, :]
    du += params.rel_emb.T @ ds

    g.entity_feat[rf.entities] += dH
    g.user_emb[batch.user] += du
    return g


def score_items(kg, params, user, item_ids, S, n_layers, rng, chunk=64):
    """Engagement probabilities for one user over a set of items, chunked so
    the dense local adjacency stays small."""
    item_ids = np.asarray(item_ids, dtype=np.int64)
    out = np.empty(len(item_ids), dtype=np.float64)
    u = params.user_emb[user]
    _, w = relation_weights(u, params.rel_emb)
    for lo in range(0, len(item_ids), chunk):
        ids = item_ids[lo:lo + chunk]
        rf = build_receptive_field(kg, kg.item_entities[ids], S, n_layers, rng)
        A, degrees = local_adjacency(kg, rf, w)
        dhalf = 1.0 / np.sqrt(degrees)
        A_hat = A * dhalf[:, None] * dhalf[None, :]
        H, _, _ = forward_layers(A_hat, params.entity_feat[rf.entities],
                                 params.weights)
        out[lo:lo + chunk] = predict(u, H[-1][rf.seed_rows])
    return out
