"""Tree hierarchies, summing matrices, bottom-up aggregation and coherence checks."""
from __future__ import annotations

import csv
import functools
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "HierarchyError",
    "Hierarchy",
    "CoherenceReport",
    "build_hierarchy",
    "load_hierarchy_csv",
    "summing_matrix",
    "aggregate_bottom_up",
    "check_coherence",
    "sum_vectors",
]


class HierarchyError(ValueError):
    """Raised for malformed hierarchies or node sets that do not match one."""


@dataclass(frozen=True)
class Hierarchy:
    """Strict K-level tree with level-major, input-stable node order.

    Level indices are 1-based: the root is level 1, leaves are level ``K``.
    """

    levels: tuple[tuple[str, ...], ...]
    parent: Mapping[str, str]
    children: Mapping[str, tuple[str, ...]]

    @property
    def K(self) -> int:
        return len(self.levels)

    @property
    def root(self) -> str:
        return self.levels[0][0]

    @property
    def nodes(self) -> tuple[str, ...]:
        return tuple(n for lvl in self.levels for n in lvl)

    @property
    def leaves(self) -> tuple[str, ...]:
        return self.levels[-1]

    @property
    def level_sizes(self) -> list[int]:
        return [len(lvl) for lvl in self.levels]

    @functools.cached_property
    def level_of(self) -> dict[str, int]:
        return {n: k for k, lvl in enumerate(self.levels, start=1) for n in lvl}

    @functools.cached_property
    def index(self) -> dict[str, int]:
        return {n: i for i, n in enumerate(self.nodes)}

    def nodes_at(self, k: int) -> tuple[str, ...]:
        return self.levels[k - 1]

    def is_leaf(self, node: str) -> bool:
        return not self.children.get(node)

    def descendants(self, node: str) -> list[str]:
        """All nodes strictly below ``node``, in level-major order."""
        below = set()
        frontier = [node]
        while frontier:
            nxt = []
            for n in frontier:
                nxt.extend(self.children.get(n, ()))
            below.update(nxt)
            frontier = nxt
        return [n for n in self.nodes if n in below]

    def leaf_descendants(self, node: str) -> list[str]:
        if self.is_leaf(node):
            return [node]
        below = set(self.descendants(node))
        return [leaf for leaf in self.leaves if leaf in below]

    def truncate(self, k_max: int) -> Hierarchy:
        """Sub-hierarchy over levels ``1..k_max``; level ``k_max`` nodes become leaves."""
        if not 1 <= k_max <= self.K:
            raise HierarchyError(f"cannot truncate a {self.K}-level hierarchy to {k_max} levels")
        levels = self.levels[:k_max]
        keep = {n for lvl in levels for n in lvl}
        parent = {c: p for c, p in self.parent.items() if c in keep}
        children = {
            n: (self.children[n] if self.level_of[n] < k_max else ())
            for n in keep
        }
        return Hierarchy(levels=levels, parent=parent, children=children)

    def edges(self) -> list[tuple[str, str]]:
        return [(self.parent[c], c) for c in self.nodes[1:]]


def build_hierarchy(
    edges: Iterable[tuple[str, str]], nodes: Sequence[str] | None = None
) -> Hierarchy:
    """Build a :class:`Hierarchy` from ``(parent, child)`` edges.

    ``nodes`` optionally lists every expected node; any node that appears in it
    but in no edge is reported as an orphan.
    """
    edges = [(str(p), str(c)) for p, c in edges]
    if not edges:
        raise HierarchyError("edge list is empty")

    parent: dict[str, str] = {}
    children: dict[str, list[str]] = {}
    order: list[str] = []
    seen: set[str] = set()
    for p, c in edges:
        if p == c:
            raise HierarchyError(f"cycle detected: {p!r} is its own parent")
        if c in parent:
            raise HierarchyError(
                f"duplicate parent for node {c!r}: {parent[c]!r} and {p!r}"
            )
        parent[c] = p
        children.setdefault(p, []).append(c)
        for n in (p, c):
            if n not in seen:
                seen.add(n)
                order.append(n)

    if nodes is not None:
        orphans = [str(n) for n in nodes if str(n) not in seen]
        if orphans:
            raise HierarchyError(f"orphan node(s) with no edges: {orphans}")

    roots = [n for n in order if n not in parent]
    if not roots:
        raise HierarchyError("cycle detected: every node has a parent")
    if len(roots) > 1:
        raise HierarchyError(f"multiple roots: {roots}")

    root = roots[0]
    levels = [[root]]
    reached = {root}
    while True:
        nxt = []
        for n in levels[-1]:
            nxt.extend(children.get(n, ()))
        if not nxt:
            break
        reached.update(nxt)
        levels.append(nxt)
    unreached = [n for n in order if n not in reached]
    if unreached:
        raise HierarchyError(f"cycle detected among nodes {unreached}")

    # stable within-level order: order of first appearance in the edge list
    rank = {n: i for i, n in enumerate(order)}
    levels = [sorted(lvl, key=rank.__getitem__) for lvl in levels]

    for lvl in levels[:-1]:
        shallow = [n for n in lvl if n not in children]
        if shallow:
            raise HierarchyError(
                f"unbalanced hierarchy: leaves {shallow} are above the bottom level"
            )

    return Hierarchy(
        levels=tuple(tuple(lvl) for lvl in levels),
        parent=dict(parent),
        children={n: tuple(children.get(n, ())) for n in order},
    )


def load_hierarchy_csv(path: str | Path) -> Hierarchy:
    """Read a ``parent_id,child_id`` CSV (header required) into a hierarchy."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["parent_id", "child_id"]:
            raise HierarchyError(f"{path}: expected header 'parent_id,child_id', got {header}")
        edges = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 2 or not row[0].strip() or not row[1].strip():
                raise HierarchyError(f"{path}:{lineno}: malformed edge row {row}")
            edges.append((row[0].strip(), row[1].strip()))
    return build_hierarchy(edges)


def summing_matrix(h: Hierarchy) -> np.ndarray:
    """Binary (n_nodes x n_leaves) matrix; row order = ``h.nodes``, columns = ``h.leaves``."""
    S = np.zeros((len(h.nodes), len(h.leaves)), dtype=np.int64)
    col = {leaf: j for j, leaf in enumerate(h.leaves)}
    for i, node in enumerate(h.nodes):
        for leaf in h.leaf_descendants(node):
            S[i, col[leaf]] = 1
    S.setflags(write=False)
    return S


def sum_vectors(vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Left-to-right elementwise sum.

    Both aggregation and the coherence check use this, so a parent built from
    its children compares bit-identical to a re-summation of those children.
    """
    acc = np.array(vectors[0], dtype=np.float64, copy=True)
    for v in vectors[1:]:
        acc = acc + v
    return acc


def aggregate_bottom_up(
    h: Hierarchy, leaf_values: Mapping[str, np.ndarray]
) -> dict[str, np.ndarray]:
    """Per-node vectors where every internal node is the sum of its children."""
    missing = [leaf for leaf in h.leaves if leaf not in leaf_values]
    if missing:
        raise HierarchyError(f"missing leaf values for {missing}")
    out: dict[str, np.ndarray] = {}
    length = None
    for leaf in h.leaves:
        v = np.asarray(leaf_values[leaf], dtype=np.float64)
        if length is None:
            length = v.shape
        elif v.shape != length:
            raise HierarchyError(
                f"length mismatch: leaf {leaf!r} has shape {v.shape}, expected {length}"
            )
        out[leaf] = v.copy()
    for k in range(h.K - 1, 0, -1):
        for node in h.nodes_at(k):
            out[node] = sum_vectors([out[c] for c in h.children[node]])
    return {n: out[n] for n in h.nodes}


@dataclass
class CoherenceReport:
    max_abs_violation: float
    max_rel_violation: float
    tolerance: float
    relative: bool
    violations: list[tuple[str, int, float]] = field(default_factory=list)

    @property
    def coherent(self) -> bool:
        return not self.violations

    def to_dict(self, max_items: int = 100) -> dict:
        return {
            "coherent": self.coherent,
            "tolerance": self.tolerance,
            "relative": self.relative,
            "max_abs_violation": self.max_abs_violation,
            "max_rel_violation": self.max_rel_violation,
            "n_violations": len(self.violations),
            "violations": [
                {"parent": p, "step": s, "abs_violation": v}
                for p, s, v in self.violations[:max_items]
            ],
        }


def check_coherence(
    h: Hierarchy,
    forecasts: Mapping[str, np.ndarray],
    tolerance: float = 1e-8,
    relative: bool = True,
) -> CoherenceReport:
    """Compare every parent with the sum of its children, step by step.

    With ``relative=True`` the allowed violation at a step is
    ``tolerance * max(1, |parent|)``; otherwise it is ``tolerance`` itself.
    """
    if tolerance < 0:
        raise ValueError("tolerance must be >= 0")
    values = forecasts if isinstance(forecasts, Mapping) else forecasts.values
    missing = [n for n in h.nodes if n not in values]
    if missing:
        raise HierarchyError(f"missing forecasts for nodes {missing}")
    max_abs = 0.0
    max_rel = 0.0
    violations = []
    for node in h.nodes:
        kids = h.children.get(node)
        if not kids:
            continue
        parent_v = np.asarray(values[node], dtype=np.float64)
        diff = np.abs(parent_v - sum_vectors([np.asarray(values[c], dtype=np.float64) for c in kids]))
        scale = np.maximum(1.0, np.abs(parent_v))
        rel = diff / scale
        if diff.size:
            # nan compares false everywhere; count it as an unbounded violation
            max_abs = max(max_abs, float(np.where(np.isfinite(diff), diff, np.inf).max()))
            max_rel = max(max_rel, float(np.where(np.isfinite(rel), rel, np.inf).max()))
        bad = ~(rel <= tolerance) if relative else ~(diff <= tolerance)
        for step in np.flatnonzero(bad):
            violations.append((node, int(step), float(diff[step])))
    return CoherenceReport(max_abs, max_rel, float(tolerance), relative, violations)
