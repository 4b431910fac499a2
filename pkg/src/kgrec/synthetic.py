"""Synthetic dataset generator with a planted label-smoothness signal.

The graph mimics an item/attribute knowledge graph: items never connect to
each other, only to attribute entities, and every entity carries a community
(one per relation type).  Attributes form an assortative backbone; each item
attaches to a few attributes, preferring its own community; an edge's
relation type is its attribute endpoint's community.  Every synthetic user
favors a couple of communities and their positive items are drawn from the
matching item pool, so relevance is smooth along preferred-relation paths
(item - shared attribute - item) while plain hop proximity stays ambiguous:
an item's attributes straddle communities and only the relation types mark
the relevant ones.  The `smoothness` knob interpolates between
KG-independent random labels (0) and fully community-driven labels (1).
"""

import os
from dataclasses import dataclass

import numpy as np


@dataclass
class SyntheticPaths:
    triples: str
    item_map: str
    ratings: str


def _build_edges(n_items, n_entities, groups, p_in, attrs_per_item,
                 extra_per_attr, hubs_per_relation, p_hub, rng):
    """Attribute backbone plus item attachments through community hubs.

    Each community designates a few hub attributes; items mostly attach to
    hubs (their own community's with probability p_in, a foreign one
    otherwise), so same-community items sit two hops apart through shared
    hubs while foreign hub edges keep plain proximity ambiguous.
    """
    n_relations = int(groups.max()) + 1
    attrs = np.arange(n_items, n_entities)
    by_group = [attrs[groups[attrs] == g] for g in range(n_relations)]
    hubs = [pool[:hubs_per_relation] if len(pool) else attrs
            for pool in by_group]

    def attr_of(group, upper=None):
        pool = hubs[group] if rng.random() < p_hub else by_group[group]
        if upper is not None:
            pool = pool[pool < upper]
        if len(pool) == 0:
            lo, hi = n_items, (upper if upper is not None else n_entities)
            return int(rng.integers(lo, hi)) if hi > lo else None
        return int(pool[rng.integers(0, len(pool))])

    edges = {}

    def add(a, b):
        if a is None or b is None or a == b:
            return
        key = (min(a, b), max(a, b))
        if key not in edges:
            # relation = the attribute endpoint's community
            attr = b if b >= n_items else a
            edges[key] = int(groups[attr])

    for e in attrs[1:]:  # connected backbone over attributes
        group = int(groups[e]) if rng.random() < p_in else int(rng.integers(0, n_relations))
        add(int(e), attr_of(group, upper=int(e)))
    for _ in range(int(extra_per_attr * len(attrs))):
        a = int(rng.integers(n_items, n_entities))
        add(a, attr_of(int(groups[a])))
    for item in range(n_items):
        for _ in range(attrs_per_item):
            own = rng.random() < p_in
            group = int(groups[item]) if own else int(rng.integers(0, n_relations))
            add(item, attr_of(group))
    return edges


def gen_synthetic(out_dir, n_entities, n_items, n_relations, n_users,
                  smoothness, seed, pos_per_user=20, attrs_per_item=3,
                  extra_per_attr=0.5, preferred_relations=2, p_in=0.5,
                  hubs_per_relation=8, p_hub=0.8):
    """Write triples.tsv, item_map.tsv, ratings.tsv under out_dir.

    Items are the first `n_items` entities.  Ratings carry only positives
    (load them with threshold None); negatives come from the usual sampler.
    Deterministic in `seed`.
    """
    if n_items > n_entities // 2:
        raise ValueError("need more attribute entities than items")
    if not 0.0 <= smoothness <= 1.0:
        raise ValueError("smoothness must be in [0, 1]")
    if pos_per_user > n_items:
        raise ValueError("pos_per_user cannot exceed n_items")
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)

    groups = rng.integers(0, n_relations, size=n_entities)
    edges = _build_edges(n_items, n_entities, groups, p_in, attrs_per_item,
                         extra_per_attr, hubs_per_relation, p_hub, rng)

    paths = SyntheticPaths(
        triples=os.path.join(out_dir, "triples.tsv"),
        item_map=os.path.join(out_dir, "item_map.tsv"),
        ratings=os.path.join(out_dir, "ratings.tsv"))

    with open(paths.triples, "w", encoding="utf-8") as f:
        for (a, b), r in edges.items():
            f.write(f"e{a}\tr{r}\te{b}\n")
    with open(paths.item_map, "w", encoding="utf-8") as f:
        for j in range(n_items):
            f.write(f"i{j}\te{j}\n")

    item_groups = groups[:n_items]
    with open(paths.ratings, "w", encoding="utf-8") as f:
        for u in range(n_users):
            pref = rng.choice(n_relations,
                              size=min(preferred_relations, n_relations),
                              replace=False)
            in_pref = np.isin(item_groups, pref).astype(np.float64)
            score = (smoothness * in_pref
                     + (1.0 - smoothness) * rng.random(n_items)
                     + 1e-6 * rng.random(n_items))  # tie-break inside groups
            top = np.argsort(-score, kind="stable")[:pos_per_user]
            for j in sorted(top.tolist()):
                f.write(f"u{u}\ti{j}\t1\n")

    return paths
