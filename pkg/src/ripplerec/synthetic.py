"""Synthetic dataset generator with preferences planted in the graph.

Latent relation-cluster preference model: entities are partitioned into
latent clusters; each entity emits a few edges that stay inside its
cluster with high probability, labeled by a relation tied to the
cluster.  Every user belongs to one cluster and rates mostly items of
that cluster, high inside and low outside.  After binarization the
positives are (almost) exactly the in-cluster ratings, so the signal a
model must recover -- which cluster an item belongs to, and which
cluster a user prefers -- is carried by graph structure and relations,
not by memorizable ids.

The real datasets cannot be redistributed, so this generator is the
bundled stand-in for tests and demos.  Output files use the exact
ingestion formats of the prep pipeline.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np


@dataclass
class SyntheticSpec:
    """Knobs of the generative story; defaults give a learnable mid-size set."""

    num_users: int = 200
    num_items: int = 160
    num_entities: int = 320  # items plus attribute-only entities
    clusters: int = 4
    edges_per_entity: int = 4
    in_cluster_edge_prob: float = 0.9
    ratings_per_user: int = 30
    in_cluster_rating_prob: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.num_entities < self.num_items:
            raise ValueError("num_entities must cover the items")
        if not 1 <= self.clusters <= self.num_items:
            raise ValueError("clusters must be in [1, num_items]")


@dataclass
class SyntheticPaths:
    ratings: str
    kg: str
    item_map: str


def _clusters(n, c, rng):
    """Round-robin cluster labels, shuffled, so every cluster is populated."""
    labels = np.arange(n) % c
    rng.shuffle(labels)
    return labels


def generate(spec, out_dir):
    """Write ratings.tsv, kg.tsv and item_map.tsv under ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    c = spec.clusters

    entity_cluster = _clusters(spec.num_entities, c, rng)
    by_cluster = [np.flatnonzero(entity_cluster == k) for k in range(c)]
    item_cluster = entity_cluster[: spec.num_items]
    items_by_cluster = [np.flatnonzero(item_cluster == k) for k in range(c)]

    # knowledge graph: relation id = head's cluster, targets mostly in-cluster
    kg_rows = []
    for e in range(spec.num_entities):
        k = entity_cluster[e]
        for _ in range(spec.edges_per_entity):
            if rng.random() < spec.in_cluster_edge_prob or c == 1:
                pool = by_cluster[k]
            else:
                other = int(rng.integers(0, c - 1))
                pool = by_cluster[other if other < k else other + 1]
            t = int(pool[rng.integers(0, len(pool))])
            if t == e:
                continue
            kg_rows.append((f"e{e}", f"r{k}", f"e{t}"))

    # ratings: users favor their own cluster's items; high ratings inside
    user_cluster = _clusters(spec.num_users, c, rng)
    rating_rows = []
    for u in range(spec.num_users):
        k = user_cluster[u]
        own = items_by_cluster[k]
        n_own = min(len(own), round(spec.ratings_per_user * spec.in_cluster_rating_prob))
        chosen_own = rng.choice(own, size=n_own, replace=False)
        others = np.setdiff1d(np.arange(spec.num_items), own, assume_unique=False)
        n_other = min(len(others), spec.ratings_per_user - n_own)
        chosen_other = rng.choice(others, size=n_other, replace=False) if n_other else np.empty(0, dtype=int)
        for item in chosen_own:
            rating_rows.append((f"u{u}", f"i{int(item)}", int(4 + rng.integers(0, 2))))
        for item in chosen_other:
            rating_rows.append((f"u{u}", f"i{int(item)}", int(1 + rng.integers(0, 3))))

    paths = SyntheticPaths(
        ratings=os.path.join(out_dir, "ratings.tsv"),
        kg=os.path.join(out_dir, "kg.tsv"),
        item_map=os.path.join(out_dir, "item_map.tsv"),
    )
    with open(paths.kg, "w", encoding="utf-8") as fh:
        for h, r, t in kg_rows:
            fh.write(f"{h}\t{r}\t{t}\n")
    with open(paths.ratings, "w", encoding="utf-8") as fh:
        for u, i, rating in rating_rows:
            fh.write(f"{u}\t{i}\t{rating}\n")
    with open(paths.item_map, "w", encoding="utf-8") as fh:
        for item in range(spec.num_items):
            fh.write(f"i{item}\te{item}\n")
    return paths


def tiny_spec(seed=0):
    """50 users / 100 items / ~500 triples: small enough to overfit in seconds."""
    return SyntheticSpec(
        num_users=50,
        num_items=100,
        num_entities=125,
        clusters=4,
        edges_per_entity=4,
        ratings_per_user=12,
        in_cluster_rating_prob=0.7,
        seed=seed,
    )
