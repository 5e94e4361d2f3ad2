"""Shared builders for tests: small trees, random trees, synthetic frames."""
from __future__ import annotations

import numpy as np
from hypothesis import strategies as st

from hiforead.hierarchy import build_hierarchy
from hiforead.ingestion import Record, build_series_frame

SMALL_EDGES = [
    ("Total", "X"), ("Total", "Y"),
    ("X", "XA"), ("X", "XB"), ("X", "XC"),
    ("Y", "YA"), ("Y", "YB"),
]


def small_tree():
    return build_hierarchy(SMALL_EDGES)


def random_edges(rng, max_levels=4, max_leaves=10):
    """Balanced random tree with 2..max_levels levels and at most max_leaves leaves."""
    K = int(rng.integers(2, max_levels + 1))
    edges = []
    level = ["n0"]
    counter = 1
    for depth in range(1, K):
        remaining = K - 1 - depth  # levels still to add below this one
        nxt = []
        for i, node in enumerate(level):
            # leave at least one child for every node still waiting on this level
            waiting = len(level) - i - 1
            room = max_leaves - len(nxt) - waiting
            cap = max(1, min(3, room)) if remaining == 0 else max(1, min(2, room))
            for _ in range(int(rng.integers(1, cap + 1))):
                child = f"n{counter}"
                counter += 1
                edges.append((node, child))
                nxt.append(child)
        level = nxt
    return edges


def random_hierarchy(rng, max_levels=4, max_leaves=10):
    return build_hierarchy(random_edges(rng, max_levels, max_leaves))


@st.composite
def hierarchies(draw, max_levels=4, max_leaves=10):
    seed = draw(st.integers(0, 2**32 - 1))
    return random_hierarchy(np.random.default_rng(seed), max_levels, max_leaves)


def parent_chain_oracle(h):
    """{node: set of leaves below or equal}, by walking parents up from each leaf."""
    below = {n: set() for n in h.nodes}
    for leaf in h.leaves:
        node = leaf
        while True:
            below[node].add(leaf)
            if node not in h.parent:
                break
            node = h.parent[node]
    return below


def frame_from_leaves(h, leaf_values, frequency="daily", start=738000):
    records = [
        Record(leaf, start + t, float(v))
        for leaf in h.leaves
        for t, v in enumerate(leaf_values[leaf])
    ]
    return build_series_frame(records, h, "zero", frequency)


def seasonal_frame(h, T=120, period=7, seed=0, noise=0.05):
    rng = np.random.default_rng(seed)
    t = np.arange(T)
    leaves = {}
    for i, leaf in enumerate(h.leaves):
        level = 20.0 + 10.0 * i
        y = level * (1 + 0.3 * np.sin(2 * np.pi * (t + i) / period)) + rng.normal(0, noise * level, T)
        leaves[leaf] = np.maximum(y, 0.0)
    return frame_from_leaves(h, leaves)
