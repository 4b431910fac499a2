"""Central-finite-difference oracle for the hand-derived gradients.

Independent of the backward pass by construction: it only re-evaluates the
loss.  Used by the test suite and the `grad-check` CLI subcommand.
"""

import numpy as np

from kgrec import gnn, kg as kgmod
from kgrec.train import HyperParams, unified_loss

# Denominator floor for the relative error.  Central differences with
# h = 1e-5 carry ~1e-10 absolute roundoff noise, so ratios against partials
# smaller than the floor would measure noise, not gradient bugs; entries
# below it are effectively compared absolutely at the same tolerance scale.
FLOOR = 1e-5


def numeric_gradient(loss_fn, params, h=1e-5):
    """Central differences of loss_fn over every parameter element."""
    out = {}
    for name, tensor in params.named_tensors():
        flat = tensor.ravel()
        g = np.zeros(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn()
            flat[i] = orig - h
            down = loss_fn()
            flat[i] = orig
            g[i] = (up - down) / (2.0 * h)
        out[name] = g.reshape(tensor.shape)
    return out


def relative_errors(analytic, numeric):
    """Per-tensor max of |a - n| / max(|a|, |n|, FLOOR)."""
    errs = {}
    for name, n_grad in numeric.items():
        a_grad = analytic[name]
        denom = np.maximum(np.maximum(np.abs(a_grad), np.abs(n_grad)), FLOOR)
        rel = np.abs(a_grad - n_grad) / denom
        errs[name] = float(rel.max()) if rel.size else 0.0
    return errs


def build_check_setup(seed=7, lambda_=0.5, gamma=1e-4, n_entities=12,
                      n_items=4, n_relations=3, n_users=2, d=4, n_layers=2):
    """Small dense instance with an exhaustive receptive field.

    Connected random graph, one user's batch covering all items with mixed
    labels; S is set to the entity count so no neighbor is dropped.
    """
    rng = np.random.default_rng(seed)
    triples = []
    for e in range(1, n_entities):
        triples.append((int(rng.integers(0, e)), int(rng.integers(0, n_relations)), e))
    for _ in range(n_entities):
        a, b = rng.integers(0, n_entities, size=2)
        if a != b:
            triples.append((int(a), int(rng.integers(0, n_relations)), int(b)))
    kg = kgmod.build_graph(n_entities, n_relations, triples,
                           item_entities=np.arange(n_items))
    hp = HyperParams(S=n_entities, d=d, L=n_layers, lambda_=lambda_,
                     gamma=gamma, seed=seed)
    params = gnn.init_params(n_users, n_relations, n_entities, d, n_layers, rng)
    items = np.arange(n_items, dtype=np.int64)
    labels = (np.arange(n_items) % 2 == 0).astype(np.float64)
    batch = gnn.make_batch(kg, 0, items, labels, known_items=items,
                           known_labels=labels, S=hp.S, n_layers=hp.L, rng=rng)
    return kg, batch, params, hp


def run_grad_check(seed=7, lambda_=0.5, gamma=1e-4, h=1e-5, **kwargs):
    """(max relative error, per-tensor errors) on the check instance."""
    kg, batch, params, hp = build_check_setup(seed=seed, lambda_=lambda_,
                                              gamma=gamma, **kwargs)
    _, grads = unified_loss(batch, params, hp, kg)
    analytic = dict(grads.named_tensors())

    def loss_fn():
        parts, _ = unified_loss(batch, params, hp, kg, with_grads=False)
        return parts.total

    numeric = numeric_gradient(loss_fn, params, h=h)
    errs = relative_errors(analytic, numeric)
    return max(errs.values()), errs
