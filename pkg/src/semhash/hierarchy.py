"""Label taxonomies and hierarchy-derived semantic distances.

A taxonomy is a rooted tree over label names, read from a plain-text edge
list ("parent child" per line, ``#`` comments).  The distance between two
leaf labels is the height of their lowest common ancestor divided by the
height of the root, which yields a normalized ultrametric on the leaves.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import (
    CycleDetected,
    EmptyInput,
    MalformedFile,
    MultipleParents,
    MultipleRoots,
    NoRoot,
    NotALeaf,
    UnknownNode,
)


@dataclass(frozen=True)
class TaxonomyNode:
    id: int
    name: str
    parent: Optional[int]


@dataclass
class Taxonomy:
    """Rooted label tree with precomputed depth/height tables.

    Immutable after construction; safe for concurrent reads.
    """

    nodes: list[TaxonomyNode]
    root: int
    height: int
    leaf_labels: dict[str, int]

    _parent: list[Optional[int]] = field(init=False, repr=False)
    _children: list[list[int]] = field(init=False, repr=False)
    _depth: list[int] = field(init=False, repr=False)
    _node_height: list[int] = field(init=False, repr=False)
    _name_to_id: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        n = len(self.nodes)
        if n == 0:
            raise EmptyInput("taxonomy has no nodes")
        if any(node.id != i for i, node in enumerate(self.nodes)):
            raise UnknownNode("node ids must be 0..n-1 in order")

        self._parent = [node.parent for node in self.nodes]
        self._children = [[] for _ in range(n)]
        roots = []
        for node in self.nodes:
            if node.parent is None:
                roots.append(node.id)
            else:
                if not 0 <= node.parent < n:
                    raise UnknownNode(f"parent id {node.parent} out of range")
                self._children[node.parent].append(node.id)
        if not roots:
            raise NoRoot("no parentless node")
        if len(roots) > 1:
            names = ", ".join(self.nodes[r].name for r in roots)
            raise MultipleRoots(f"multiple roots: {names}")
        if roots[0] != self.root:
            raise NoRoot(f"declared root {self.root} is not the parentless node")

        # depth via parent chains; a chain longer than n means a cycle
        self._depth = [-1] * n
        self._depth[self.root] = 0
        for i in range(n):
            trail = []
            j: Optional[int] = i
            while j is not None and self._depth[j] < 0:
                trail.append(j)
                if len(trail) > n:
                    raise CycleDetected(f"cycle through node {self.nodes[i].name!r}")
                j = self._parent[j]
            if j is None:
                raise CycleDetected(f"cycle through node {self.nodes[i].name!r}")
            base = self._depth[j]
            for step, node_id in enumerate(reversed(trail), start=1):
                self._depth[node_id] = base + step

        # height = max edge count down to a descendant leaf
        self._node_height = [0] * n
        for i in sorted(range(n), key=lambda k: self._depth[k], reverse=True):
            if self._children[i]:
                self._node_height[i] = 1 + max(self._node_height[c] for c in self._children[i])
        if self._node_height[self.root] != self.height:
            raise MalformedFile(
                f"declared height {self.height} != computed {self._node_height[self.root]}"
            )

        self._name_to_id = {node.name: node.id for node in self.nodes}
        if len(self._name_to_id) != n:
            raise MalformedFile("duplicate node names")
        expected_leaves = {
            node.name: node.id for node in self.nodes if not self._children[node.id]
        }
        if self.leaf_labels != expected_leaves:
            raise MalformedFile("leaf_labels inconsistent with tree structure")

    @classmethod
    def from_nodes(cls, nodes: list[TaxonomyNode]) -> "Taxonomy":
        """Build a Taxonomy from node records, deriving root, height, leaves."""
        roots = [node.id for node in nodes if node.parent is None]
        if not roots:
            raise NoRoot("no parentless node")
        if len(roots) > 1:
            raise MultipleRoots("multiple roots: " + ", ".join(nodes[r].name for r in roots))
        root = roots[0]

        n = len(nodes)
        children_count = [0] * n
        for node in nodes:
            if node.parent is not None:
                children_count[node.parent] += 1
        leaf_labels = {node.name: node.id for node in nodes if children_count[node.id] == 0}

        # height of root by walking every leaf-to-root chain
        height = 0
        for node in nodes:
            if children_count[node.id] != 0:
                continue
            depth = 0
            j: Optional[int] = node.id
            seen = set()
            while j is not None and nodes[j].parent is not None:
                if j in seen:
                    raise CycleDetected(f"cycle through node {nodes[j].name!r}")
                seen.add(j)
                j = nodes[j].parent
                depth += 1
            height = max(height, depth)
        return cls(nodes=nodes, root=root, height=height, leaf_labels=leaf_labels)

    # --- lookups ---

    def __len__(self) -> int:
        return len(self.nodes)

    def name(self, node_id: int) -> str:
        self._check_id(node_id)
        return self.nodes[node_id].name

    def node_id(self, name: str) -> int:
        try:
            return self._name_to_id[name]
        except KeyError:
            raise UnknownNode(f"unknown node name {name!r}") from None

    def parent(self, node_id: int) -> Optional[int]:
        self._check_id(node_id)
        return self._parent[node_id]

    def children(self, node_id: int) -> list[int]:
        self._check_id(node_id)
        return list(self._children[node_id])

    def depth(self, node_id: int) -> int:
        self._check_id(node_id)
        return self._depth[node_id]

    def node_height(self, node_id: int) -> int:
        self._check_id(node_id)
        return self._node_height[node_id]

    def is_leaf(self, node_id: int) -> bool:
        self._check_id(node_id)
        return not self._children[node_id]

    def leaves(self) -> list[int]:
        """Leaf node ids in id order."""
        return [node.id for node in self.nodes if not self._children[node.id]]

    def _check_id(self, node_id) -> None:
        if not isinstance(node_id, (int, np.integer)) or not 0 <= node_id < len(self.nodes):
            raise UnknownNode(f"unknown node id {node_id!r}")


@dataclass
class SemanticDistanceMatrix:
    """Symmetric matrix of normalized leaf-to-leaf distances in [0, 1]."""

    labels: list[int]
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        n = len(self.labels)
        if self.values.shape != (n, n):
            raise UnknownNode(f"matrix shape {self.values.shape} != ({n}, {n})")


def parse_taxonomy(text: str) -> Taxonomy:
    """Parse an edge-list taxonomy.

    Each non-comment line is "parent_name child_name"; node ids are assigned
    in first-appearance order and the root is the unique name that never
    appears as a child.
    """
    edges: list[tuple[str, str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise MalformedFile(f"line {lineno}: expected 'parent child', got {raw!r}")
        edges.append((parts[0], parts[1]))
    if not edges:
        raise EmptyInput("no edges in taxonomy text")

    order: list[str] = []
    ids: dict[str, int] = {}

    def intern(name: str) -> int:
        if name not in ids:
            ids[name] = len(order)
            order.append(name)
        return ids[name]

    parent_of: dict[int, int] = {}
    for parent_name, child_name in edges:
        p = intern(parent_name)
        c = intern(child_name)
        if c in parent_of and parent_of[c] != p:
            raise MultipleParents(
                f"node {child_name!r} has parents {order[parent_of[c]]!r} and {parent_name!r}"
            )
        if p == c:
            raise CycleDetected(f"self-edge on {child_name!r}")
        parent_of[c] = p

    if all(i in parent_of for i in range(len(order))):
        # every node is some edge's child, so a parent chain must loop
        raise CycleDetected("every node appears as a child; edge list contains a cycle")
    for start in range(len(order)):
        seen = set()
        j: Optional[int] = start
        while j is not None:
            if j in seen:
                raise CycleDetected(f"cycle through node {order[j]!r}")
            seen.add(j)
            j = parent_of.get(j)

    nodes = [TaxonomyNode(i, order[i], parent_of.get(i)) for i in range(len(order))]
    return Taxonomy.from_nodes(nodes)


def serialize_taxonomy(t: Taxonomy) -> str:
    """Edge-list text that reparses to the same tree (ids may be relabeled)."""
    lines = []
    for node in t.nodes:
        if node.parent is not None:
            lines.append(f"{t.nodes[node.parent].name} {node.name}")
    return "\n".join(lines) + "\n"


def load_taxonomy(path: str | Path) -> Taxonomy:
    return parse_taxonomy(Path(path).read_text(encoding="utf-8"))


def save_taxonomy(path: str | Path, t: Taxonomy) -> None:
    Path(path).write_text(serialize_taxonomy(t), encoding="utf-8")


def lca(t: Taxonomy, a: int, b: int) -> int:
    """Deepest node that is an ancestor of both a and b."""
    t._check_id(a)
    t._check_id(b)
    da, db = t.depth(a), t.depth(b)
    while da > db:
        a = t.parent(a)  # type: ignore[assignment]
        da -= 1
    while db > da:
        b = t.parent(b)  # type: ignore[assignment]
        db -= 1
    while a != b:
        a = t.parent(a)  # type: ignore[assignment]
        b = t.parent(b)  # type: ignore[assignment]
    return a


def semantic_distance(t: Taxonomy, a: int, b: int) -> float:
    """Normalized distance between two leaf labels: lca height / root height."""
    t._check_id(a)
    t._check_id(b)
    for node_id in (a, b):
        if not t.is_leaf(node_id):
            raise NotALeaf(f"node {t.name(node_id)!r} is not a leaf")
    if t.height == 0:
        return 0.0
    return t.node_height(lca(t, a, b)) / t.height


def distance_matrix(t: Taxonomy, labels: Sequence[int]) -> SemanticDistanceMatrix:
    """Pairwise semantic distances for an ordered list of leaf labels."""
    labels = [int(label) for label in labels]
    n = len(labels)
    values = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            d = semantic_distance(t, labels[i], labels[j])
            values[i, j] = d
            values[j, i] = d
    # validates leaf-ness even when there is a single label
    for label in labels:
        semantic_distance(t, label, label)
    return SemanticDistanceMatrix(labels=labels, values=values)
