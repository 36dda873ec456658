"""Directed acyclic graphs over integer-indexed nodes.

Nodes are ``0 .. p-1``. Every query that returns a collection of nodes
iterates in ascending index order, and path lists are sorted
lexicographically, so results are reproducible across runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import GraphError, InvalidAdjustmentSetError, PathLimitError

MAX_PATHS = 10**5

NodePath = tuple[int, ...]


@dataclass(frozen=True)
class Dag:
    """An immutable DAG with ``p`` nodes and a set of directed edges ``(k, j)``."""

    p: int
    edges: frozenset[tuple[int, int]] = field(default_factory=frozenset)

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 1:
            raise GraphError(f"node count must be a positive integer, got {self.p!r}")
        edges = frozenset((int(k), int(j)) for k, j in self.edges)
        for k, j in edges:
            if not (0 <= k < self.p and 0 <= j < self.p):
                raise GraphError(f"edge {k}->{j} out of range for p={self.p}")
            if k == j:
                raise GraphError(f"self-loop at node {k}")
        object.__setattr__(self, "edges", edges)
        # raises on cycles
        self.topological_order

    @classmethod
    def from_edges(cls, p: int, edges: Iterable[tuple[int, int]]) -> "Dag":
        edges = list(edges)
        if len(set(edges)) != len(edges):
            raise GraphError("duplicate edges")
        return cls(p, frozenset(edges))

    @cached_property
    def _parents(self) -> tuple[tuple[int, ...], ...]:
        pa = [[] for _ in range(self.p)]
        for k, j in self.edges:
            pa[j].append(k)
        return tuple(tuple(sorted(x)) for x in pa)

    @cached_property
    def _children(self) -> tuple[tuple[int, ...], ...]:
        ch = [[] for _ in range(self.p)]
        for k, j in self.edges:
            ch[k].append(j)
        return tuple(tuple(sorted(x)) for x in ch)

    @cached_property
    def topological_order(self) -> tuple[int, ...]:
        # Kahn's algorithm, smallest available index first
        indeg = [len(pa) for pa in self._parents]
        ready = sorted(j for j in range(self.p) if indeg[j] == 0)
        order = []
        while ready:
            k = ready.pop(0)
            order.append(k)
            for j in self._children[k]:
                indeg[j] -= 1
                if indeg[j] == 0:
                    ready.append(j)
                    ready.sort()
        if len(order) != self.p:
            raise GraphError("graph contains a directed cycle")
        return tuple(order)

    def parents(self, j: int) -> tuple[int, ...]:
        self._check(j)
        return self._parents[j]

    def children(self, j: int) -> tuple[int, ...]:
        self._check(j)
        return self._children[j]

    @property
    def roots(self) -> tuple[int, ...]:
        return tuple(j for j in range(self.p) if not self._parents[j])

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.p, self.p), dtype=bool)
        for k, j in self.edges:
            a[k, j] = True
        return a

    def without_incoming(self, j: int) -> "Dag":
        """The mutilated graph with every edge into ``j`` deleted."""
        self._check(j)
        return Dag(self.p, frozenset(e for e in self.edges if e[1] != j))

    def _check(self, j):
        if not (0 <= j < self.p):
            raise GraphError(f"node index {j} out of range for p={self.p}")


def parents(dag: Dag, j: int) -> set[int]:
    return set(dag.parents(j))


def _reach(dag: Dag, j: int, step) -> set[int]:
    seen: set[int] = set()
    stack = list(step(j))
    while stack:
        k = stack.pop()
        if k not in seen:
            seen.add(k)
            stack.extend(step(k))
    return seen


def descendants(dag: Dag, j: int) -> set[int]:
    """Nodes reachable from ``j`` by a directed path; ``j`` itself excluded."""
    dag._check(j)
    return _reach(dag, j, dag.children)


def ancestors(dag: Dag, j: int) -> set[int]:
    dag._check(j)
    return _reach(dag, j, dag.parents)


def _d_separated(dag: Dag, x: int, y: int, given: set[int]) -> bool:
    """Reachability ("Bayes ball") test for d-separation of ``x`` and ``y``."""
    # nodes with a descendant (or themselves) in the conditioning set
    anc_given = set(given)
    for z in given:
        anc_given |= ancestors(dag, z)
    # states: (node, arrived_from_child)
    visited = set()
    stack = [(x, True)]
    while stack:
        node, up = stack.pop()
        if (node, up) in visited:
            continue
        visited.add((node, up))
        if node == y and node not in given:
            return False
        if up and node not in given:
            stack.extend((k, True) for k in dag.parents(node))
            stack.extend((c, False) for c in dag.children(node))
        elif not up:
            if node not in given:
                stack.extend((c, False) for c in dag.children(node))
            if node in anc_given:
                stack.extend((k, True) for k in dag.parents(node))
    return True


def is_valid_backdoor_set(dag: Dag, x: int, y: int, s: Iterable[int]) -> bool:
    """Check the backdoor criterion for adjustment set ``s`` relative to (x, y).

    ``s`` must contain no descendant of ``x`` and must block every path
    between ``x`` and ``y`` that starts with an edge pointing into ``x``.
    """
    s = set(_members(s))
    for j in (x, y, *s):
        dag._check(j)
    if x == y:
        raise InvalidAdjustmentSetError("x and y must differ")
    if x in s or y in s:
        raise InvalidAdjustmentSetError("adjustment set must exclude x and y")
    if s & descendants(dag, x):
        return False
    # backdoor paths are exactly the x-y paths in the graph without x's out-edges
    cut = Dag(dag.p, frozenset(e for e in dag.edges if e[0] != x))
    return _d_separated(cut, x, y, s)


def _enumerate(dag: Dag, sources: Sequence[int], target: int, cap: int) -> list[NodePath]:
    # prune to nodes that can reach the target
    can_reach = ancestors(dag, target) | {target}
    out: list[NodePath] = []
    for src in sorted(sources):
        if src not in can_reach or src == target:
            continue
        stack = [(src, (src,))]
        while stack:
            node, path = stack.pop()
            if node == target:
                out.append(path)
                if len(out) > cap:
                    raise PathLimitError(f"more than {cap} paths to node {target}")
                continue
            for c in reversed(dag.children(node)):
                if c in can_reach:
                    stack.append((c, path + (c,)))
    out.sort()
    return out


def directed_paths(dag: Dag, x: int, y: int, cap: int = MAX_PATHS) -> list[NodePath]:
    """All directed paths from ``x`` to ``y``, sorted lexicographically."""
    dag._check(x)
    dag._check(y)
    if x == y:
        raise GraphError("x and y must differ")
    return _enumerate(dag, [x], y, cap)


def root_paths(dag: Dag, x: int, y: int, cap: int = MAX_PATHS) -> list[NodePath]:
    """Directed paths to ``y`` from every root of the graph with ``x``'s in-edges cut.

    ``x`` is a root of the mutilated graph, so its own paths are included.
    Returns an empty list when ``y`` is not a descendant of ``x``.
    """
    dag._check(x)
    dag._check(y)
    if x == y:
        raise GraphError("x and y must differ")
    if y not in descendants(dag, x):
        return []
    cut = dag.without_incoming(x)
    return _enumerate(cut, cut.roots, y, cap)


def random_dag(p: int, pc: float, seed=None) -> Dag:
    """Random DAG: draw a causal order, then keep each forward pair with probability ``pc``."""
    if not 0.0 <= pc <= 1.0:
        raise GraphError(f"edge probability must lie in [0, 1], got {pc}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(p)
    keep = rng.random((p, p)) < pc
    edges = [
        (int(order[a]), int(order[b]))
        for a in range(p)
        for b in range(a + 1, p)
        if keep[a, b]
    ]
    return Dag(p, frozenset(edges))


def structural_hamming_distance(a: Dag, b: Dag) -> int:
    """Number of directed-edge insertions and deletions turning ``a`` into ``b``."""
    if a.p != b.p:
        raise GraphError("graphs have different node counts")
    return len(a.edges ^ b.edges)


def perturb_dag(dag: Dag, h: int, seed=None) -> Dag:
    """Remove ``h/2`` random edges, then add ``h/2`` random new edges keeping acyclicity.

    Added edges are never edges of the input graph, so the structural
    Hamming distance to the input is exactly ``h``.
    """
    if h < 0 or h % 2:
        raise GraphError(f"h must be an even nonnegative integer, got {h}")
    half = h // 2
    if half > dag.n_edges:
        raise GraphError(f"cannot remove {half} edges from a graph with {dag.n_edges}")
    if half == 0:
        return dag
    rng = np.random.default_rng(seed)
    original = sorted(dag.edges)
    drop = rng.choice(len(original), size=half, replace=False)
    dropped = {original[i] for i in drop}
    edges = set(dag.edges) - dropped

    children = [set() for _ in range(dag.p)]
    for k, j in edges:
        children[k].add(j)

    def reaches(a, b):
        stack, seen = [a], set()
        while stack:
            u = stack.pop()
            if u == b:
                return True
            if u not in seen:
                seen.add(u)
                stack.extend(children[u])
        return False

    candidates = [
        (k, j)
        for k in range(dag.p)
        for j in range(dag.p)
        if k != j and (k, j) not in dag.edges
    ]
    added = 0
    for i in rng.permutation(len(candidates)):
        k, j = candidates[i]
        if (k, j) in edges or reaches(j, k):
            continue
        edges.add((k, j))
        children[k].add(j)
        added += 1
        if added == half:
            break
    if added < half:
        raise GraphError(f"only {added} of {half} edges could be added without a cycle")
    return Dag(dag.p, frozenset(edges))


@dataclass(frozen=True)
class AdjustmentSet:
    members: frozenset[int]
    provenance: str = "explicit"

    def __post_init__(self):
        if self.provenance not in ("explicit", "parents", "order-superset"):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        object.__setattr__(self, "members", frozenset(int(m) for m in self.members))

    def __iter__(self):
        return iter(sorted(self.members))

    def __len__(self):
        return len(self.members)

    def __contains__(self, j):
        return j in self.members


def _members(s) -> list[int]:
    if isinstance(s, AdjustmentSet):
        return sorted(s.members)
    return sorted(int(m) for m in s)


def parent_set(dag: Dag, j: int) -> AdjustmentSet:
    return AdjustmentSet(frozenset(dag.parents(j)), "parents")


def order_superset(order: Sequence[int], j: int, p_max: int) -> AdjustmentSet:
    """The at most ``p_max`` nodes immediately preceding ``j`` in ``order``."""
    if p_max < 1:
        raise ValueError(f"p_max must be at least 1, got {p_max}")
    order = [int(o) for o in order]
    if len(set(order)) != len(order):
        raise ValueError("order contains repeated nodes")
    try:
        pos = order.index(int(j))
    except ValueError:
        raise ValueError(f"node {j} does not occur in the order") from None
    return AdjustmentSet(frozenset(order[max(0, pos - p_max):pos]), "order-superset")


def read_edgelist(path) -> Dag:
    """Parse the edge-list format: ``p=<int>`` header, then ``<src> <dst>`` lines."""
    p = None
    edges = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if p is None:
                if not line.startswith("p="):
                    raise GraphError(f"{path}:{lineno}: expected 'p=<integer>' header")
                try:
                    p = int(line[2:])
                except ValueError:
                    raise GraphError(f"{path}:{lineno}: bad node count {line[2:]!r}") from None
                continue
            parts = line.split()
            if len(parts) != 2:
                raise GraphError(f"{path}:{lineno}: expected '<src> <dst>'")
            try:
                edges.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise GraphError(f"{path}:{lineno}: non-integer node index") from None
    if p is None:
        raise GraphError(f"{path}: missing 'p=<integer>' header")
    return Dag.from_edges(p, edges)


def write_edgelist(dag: Dag, path, comment: str | None = None) -> None:
    with open(path, "w") as fh:
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        fh.write(f"p={dag.p}\n")
        for k, j in sorted(dag.edges):
            fh.write(f"{k} {j}\n")
