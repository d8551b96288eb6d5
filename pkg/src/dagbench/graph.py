"""Directed graphs, random DAG generators and reachability / d-separation."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ParameterError

__all__ = [
    "Dag",
    "GraphKind",
    "GraphFamily",
    "ParameterError",
    "gen_er",
    "gen_sf",
    "gen_grp",
    "generate",
    "is_acyclic",
    "topological_order",
    "descendants",
    "ancestors",
    "d_separated",
    "bayes_ball",
    "adjacency_lists",
    "total_effect",
    "read_edge_list",
    "write_edge_list",
]


def _as_adj(adj) -> np.ndarray:
    a = np.asarray(adj)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"adjacency must be square, got shape {a.shape}")
    return a != 0


def topological_order(adj) -> list[int] | None:
    """Kahn peeling; returns None when the graph has a cycle.

    Ties are broken by smallest node index so the order is deterministic.
    """
    a = _as_adj(adj)
    d = a.shape[0]
    indeg = a.sum(axis=0).astype(int)
    ready = [i for i in range(d) if indeg[i] == 0]
    order = []
    while ready:
        ready.sort()
        v = ready.pop(0)
        order.append(v)
        for w in np.flatnonzero(a[v]):
            indeg[w] -= 1
            if indeg[w] == 0:
                ready.append(int(w))
    return order if len(order) == d else None


def is_acyclic(adj) -> bool:
    """True iff the directed graph given by ``adj`` has no directed cycle."""
    a = _as_adj(adj)
    if np.any(np.diag(a)):
        return False
    return topological_order(a) is not None


@dataclass(frozen=True, eq=False)
class Dag:
    """Boolean adjacency of a DAG; ``adj[i, j]`` means edge i -> j."""

    adj: np.ndarray

    def __post_init__(self):
        a = _as_adj(self.adj).copy()
        if np.any(np.diag(a)):
            raise ValueError("DAG may not contain self-loops")
        if topological_order(a) is None:
            raise ValueError("adjacency contains a directed cycle")
        a.setflags(write=False)
        object.__setattr__(self, "adj", a)

    @classmethod
    def empty(cls, d: int) -> "Dag":
        return cls(np.zeros((d, d), dtype=bool))

    @classmethod
    def from_edges(cls, d: int, edges: Iterable[tuple[int, int]]) -> "Dag":
        a = np.zeros((d, d), dtype=bool)
        for i, j in edges:
            a[i, j] = True
        return cls(a)

    @property
    def d(self) -> int:
        return self.adj.shape[0]

    @property
    def n_edges(self) -> int:
        return int(self.adj.sum())

    def edges(self) -> list[tuple[int, int]]:
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.adj))]

    def parents(self, j: int) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.adj[:, j])]

    def children(self, i: int) -> list[int]:
        return [int(j) for j in np.flatnonzero(self.adj[i])]

    def order(self) -> list[int]:
        return topological_order(self.adj)

    def __eq__(self, other):
        return isinstance(other, Dag) and np.array_equal(self.adj, other.adj)

    def __hash__(self):
        return hash(np.packbits(self.adj).tobytes() + bytes([self.d % 256]))

    def __repr__(self):
        return f"Dag(d={self.d}, edges={self.edges()})"


class GraphFamily(str, Enum):
    ER = "ER"
    SF = "SF"
    GRP = "GRP"


@dataclass(frozen=True)
class GraphKind:
    """Random-graph family together with its expected node degree."""

    kind: GraphFamily
    degree: int

    def __post_init__(self):
        object.__setattr__(self, "kind", GraphFamily(self.kind))

    @property
    def canonical(self) -> bool:
        if self.kind is GraphFamily.GRP:
            return self.degree == 6
        return self.degree in (2, 4, 6)

    @property
    def label(self) -> str:
        return f"{self.kind.value}-{self.degree}"


def _relabel(a: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    perm = rng.permutation(a.shape[0])
    out = np.zeros_like(a)
    out[np.ix_(perm, perm)] = a
    return out


def gen_er(d: int, k: float, seed) -> Dag:
    """Erdos-Renyi DAG with exactly ``round(k*d/2)`` edges.

    Edges are drawn uniformly among unordered pairs and oriented along a
    uniformly random node ranking.
    """
    if d < 2:
        raise ParameterError("gen_er needs d >= 2")
    m = int(round(k * d / 2))
    cap = d * (d - 1) // 2
    if m < 0 or m > cap:
        raise ParameterError(f"edge budget {m} exceeds complete-graph capacity {cap}")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(d, k=1)
    pick = rng.choice(cap, size=m, replace=False)
    a = np.zeros((d, d), dtype=bool)
    a[iu[pick], ju[pick]] = True
    return Dag(_relabel(a, rng))


def gen_sf(d: int, k: int, seed) -> Dag:
    """Scale-free DAG by preferential attachment with ``k/2`` edges per new node.

    Each new node points to existing nodes chosen with probability
    proportional to their current degree; nodes are relabeled at the end.
    """
    if k % 2:
        raise ParameterError("gen_sf needs an even degree k")
    m = k // 2
    if not (m >= 1 and d > m):
        raise ParameterError("gen_sf needs d > k/2 >= 1")
    rng = np.random.default_rng(seed)
    a = np.zeros((d, d), dtype=bool)
    deg = np.zeros(d)
    for v in range(1, d):
        w = deg[:v]
        p = w / w.sum() if w.sum() > 0 else np.full(v, 1.0 / v)
        take = min(m, int(np.count_nonzero(p)))
        targets = rng.choice(v, size=take, replace=False, p=p)
        a[v, targets] = True
        deg[targets] += 1
        deg[v] += take
    return Dag(_relabel(a, rng))


GRP_P_IN = 0.4


def gen_grp(d: int, k: float, seed) -> Dag:
    """Gaussian random partition graph oriented by a random ranking.

    Cluster sizes are ``max(2, round(N(d/5, d/10)))`` until the d nodes are
    used up. The intra-cluster probability is 0.4 (lowered if that alone
    overshoots the edge budget) and the inter-cluster probability is set so
    the expected degree is ``k``.
    """
    if d < 4:
        raise ParameterError("gen_grp needs d >= 4")
    rng = np.random.default_rng(seed)
    sizes = []
    left = d
    while left > 0:
        s = max(2, int(round(rng.normal(d / 5, d / 10))))
        s = min(s, left)
        sizes.append(s)
        left -= s
    labels = np.repeat(np.arange(len(sizes)), sizes)
    same = labels[:, None] == labels[None, :]
    iu = np.triu_indices(d, k=1)
    within = same[iu]
    n_in = int(within.sum())
    n_out = len(within) - n_in
    target = k * d / 2
    p_in = min(GRP_P_IN, target / n_in) if n_in else 0.0
    p_out = (target - p_in * n_in) / n_out if n_out else 0.0
    p_out = float(np.clip(p_out, 0.0, 1.0))
    probs = np.where(within, p_in, p_out)
    hit = rng.random(len(probs)) < probs
    a = np.zeros((d, d), dtype=bool)
    a[iu[0][hit], iu[1][hit]] = True
    return Dag(_relabel(a, rng))


_GENERATORS = {GraphFamily.ER: gen_er, GraphFamily.SF: gen_sf, GraphFamily.GRP: gen_grp}


def generate(kind: GraphKind, d: int, seed) -> Dag:
    return _GENERATORS[kind.kind](d, kind.degree, seed)


def _check_node(d: int, i: int):
    if not 0 <= i < d:
        raise IndexError(f"node {i} out of range for d={d}")


def _reach(adj: np.ndarray, start: int) -> set[int]:
    seen = {start}
    queue = deque([start])
    while queue:
        v = queue.popleft()
        for w in np.flatnonzero(adj[v]):
            w = int(w)
            if w not in seen:
                seen.add(w)
                queue.append(w)
    seen.discard(start)
    return seen


def descendants(g: Dag, i: int) -> set[int]:
    """Nodes reachable from ``i`` by a directed path (``i`` excluded)."""
    _check_node(g.d, i)
    return _reach(g.adj, i)


def ancestors(g: Dag, i: int) -> set[int]:
    _check_node(g.d, i)
    return _reach(g.adj.T, i)


def d_separated(g: Dag, i: int, j: int, z: Iterable[int] = ()) -> bool:
    """Bayes-ball reachability test of ``i _||_ j | z`` in ``g``."""
    z = set(int(v) for v in z)
    for v in (i, j, *z):
        _check_node(g.d, v)
    if i == j or i in z or j in z:
        raise ParameterError("i, j and the conditioning set must be disjoint")
    return d_separated_adj(g.adj, i, j, z)


def adjacency_lists(adj: np.ndarray) -> tuple[list[list[int]], list[list[int]]]:
    """Parent and child lists of a boolean adjacency matrix."""
    d = adj.shape[0]
    return (
        [np.flatnonzero(adj[:, v]).tolist() for v in range(d)],
        [np.flatnonzero(adj[v]).tolist() for v in range(d)],
    )


def d_separated_adj(adj: np.ndarray, i: int, j: int, z: set) -> bool:
    """Unchecked Bayes ball on a boolean adjacency matrix assumed acyclic."""
    parents, children = adjacency_lists(adj)
    return bayes_ball(parents, children, i, j, z)


def bayes_ball(parents, children, i: int, j: int, z: set, cut=()) -> bool:
    """True iff i and j are d-separated given z.

    ``cut`` lists children c of i whose edge i -> c is treated as removed.
    """
    cut = set(cut)
    if cut:
        parents = list(parents)
        children = list(children)
        children[i] = [c for c in children[i] if c not in cut]
        for c in cut:
            parents[c] = [p for p in parents[c] if p != i]
    # ancestors of the conditioning set, for collider activation
    anc_z = set(z)
    stack = list(z)
    while stack:
        for p in parents[stack.pop()]:
            if p not in anc_z:
                anc_z.add(p)
                stack.append(p)
    # states: (node, arrived-from-child "up" | arrived-from-parent "down")
    visited = set()
    queue = deque([(i, "up")])
    while queue:
        v, direction = queue.popleft()
        if (v, direction) in visited:
            continue
        visited.add((v, direction))
        if v == j:
            return False
        if direction == "up" and v not in z:
            queue.extend((p, "up") for p in parents[v])
            queue.extend((c, "down") for c in children[v])
        elif direction == "down":
            if v not in z:
                queue.extend((c, "down") for c in children[v])
            if v in anc_z:
                queue.extend((p, "up") for p in parents[v])
    return True


def total_effect(g: Dag, weights, i: int, j: int) -> float:
    """Sum over directed paths i ~> j of the product of edge weights."""
    w = np.asarray(weights, dtype=float)
    if w.shape != g.adj.shape:
        raise ParameterError("weight matrix shape does not match the graph")
    if np.any((w != 0) & ~g.adj):
        raise ParameterError("weights are supported off the graph's edges")
    _check_node(g.d, i)
    _check_node(g.d, j)
    if i == j:
        return 0.0
    # row i of (I - W)^{-1} by substitution along a topological order; exact
    # zeros for non-descendants
    effect = np.zeros(g.d)
    effect[i] = 1.0
    for v in g.order():
        pa = np.flatnonzero(w[:, v])
        if v != i and pa.size:
            effect[v] = effect[pa] @ w[pa, v]
    return float(effect[j])


def write_edge_list(g: Dag, path) -> None:
    lines = [f"# dag d={g.d}"] + [f"{i} {j}" for i, j in g.edges()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path) -> Dag:
    """Parse the ``# dag d=<d>`` edge-list format (extra ``#`` lines ignored)."""
    d = None
    edges = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line.startswith("# dag d="):
                d = int(line.split("=", 1)[1])
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'i j', got {raw!r}")
        edges.append((int(parts[0]), int(parts[1])))
    if d is None:
        raise ValueError(f"{path}: missing '# dag d=<d>' header")
    return Dag.from_edges(d, edges)
