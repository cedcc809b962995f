"""Undirected connected graphs on dense integer nodes.

Graphs come from generator descriptors (``path:8``, ``grid:3x4``,
``gnp:50:0.1:7`` ...) or from plain edge-list text. Nodes are always the
indices ``0..n-1``.
"""

from __future__ import annotations

import os
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

GNP_MAX_ATTEMPTS = 1000


class GraphError(ValueError):
    """Base class for invalid graph input."""


class GraphSpecError(GraphError):
    """Malformed generator descriptor."""


class EdgeListParseError(GraphError):
    pass


class SelfLoopError(GraphError):
    pass


class DisconnectedGraphError(GraphError):
    pass


class ConnectivityRetryError(GraphError):
    """G(n, p) resampling never produced a connected graph."""

    def __init__(self, n: int, p: float, attempts: int):
        super().__init__(
            f"gnp:{n}:{p} still disconnected after {attempts} attempts (retry cap)"
        )
        self.attempts = attempts


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable undirected connected graph.

    ``adjacency[u]`` is the sorted tuple of neighbours of ``u``; ``edges``
    holds each undirected edge once as ``(min, max)``.
    """

    n: int
    adjacency: tuple[tuple[int, ...], ...]
    edges: frozenset[tuple[int, int]]
    spec: str | None = field(default=None, compare=False)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return self.n == other.n and self.edges == other.edges

    def __hash__(self) -> int:
        return hash((self.n, self.edges))

    @classmethod
    def from_edges(cls, n: int, edges, spec: str | None = None) -> Graph:
        if n < 1:
            raise GraphError("a graph needs at least one node")
        canon = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if u == v:
                raise SelfLoopError(f"self-loop on node {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise GraphError(f"edge ({u}, {v}) out of range for n={n}")
            canon.add((min(u, v), max(u, v)))
        nbrs: list[list[int]] = [[] for _ in range(n)]
        for u, v in canon:
            nbrs[u].append(v)
            nbrs[v].append(u)
        g = cls(n, tuple(tuple(sorted(a)) for a in nbrs), frozenset(canon), spec)
        if not g.is_connected():
            raise DisconnectedGraphError(
                f"graph with {n} nodes is disconnected "
                f"({len(g._reachable(0))} reachable from node 0)"
            )
        return g

    def _reachable(self, source: int) -> set[int]:
        seen = {source}
        queue = deque([source])
        while queue:
            u = queue.popleft()
            for v in self.adjacency[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return seen

    def is_connected(self) -> bool:
        return len(self._reachable(0)) == self.n

    def has_edge(self, u: int, v: int) -> bool:
        return (min(u, v), max(u, v)) in self.edges

    def degree(self, u: int) -> int:
        return len(self.adjacency[u])

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def arcs(self) -> tuple[np.ndarray, np.ndarray]:
        """Both orientations of every edge as ``(src, dst)`` index arrays."""
        e = np.array(sorted(self.edges), dtype=np.intp).reshape(-1, 2)
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
        return src, dst

    def sparse_adjacency(self) -> csr_matrix:
        src, dst = self.arcs
        data = np.ones(src.size, dtype=np.int8)
        return csr_matrix((data, (src, dst)), shape=(self.n, self.n))

    def to_edge_list(self) -> str:
        """Serialize as ``"u v"`` lines, readable by :func:`load_edge_list`.

        A single-node graph has no edges to write, so it is emitted as the
        comment line ``# n 1``, which the loader understands.
        """
        lines = [f"# n {self.n}"] if self.n == 1 else []
        lines += [f"{u} {v}" for u, v in sorted(self.edges)]
        return "\n".join(lines) + "\n"

    def __repr__(self) -> str:
        label = self.spec or "edge-list"
        return f"Graph({label}, n={self.n}, m={self.num_edges})"


@dataclass(frozen=True, eq=False)
class DistanceTable:
    dist: np.ndarray
    diameter: int

    def neighborhood(self, u: int, d: int) -> np.ndarray:
        """Nodes at hop distance exactly ``d`` from ``u``."""
        return np.flatnonzero(self.dist[u] == d)

    def __getitem__(self, uv) -> int:
        return int(self.dist[uv])


def distances(g: Graph) -> DistanceTable:
    """All-pairs hop distances by breadth-first search."""
    if g.n == 1:
        dist = np.zeros((1, 1), dtype=np.int64)
    else:
        # method "D" with unweighted=True runs one BFS per source
        d = shortest_path(g.sparse_adjacency(), method="D", unweighted=True, directed=False)
        dist = d.astype(np.int64)
    dist.setflags(write=False)
    return DistanceTable(dist, int(dist.max()))


def load_edge_list(text: str, spec: str | None = None) -> Graph:
    """Parse ``"u v"`` lines into a graph with ``1 + max index`` nodes.

    Blank lines and ``#`` comments are skipped, except that ``# n <count>``
    fixes the node count (needed for the edgeless one-node graph).
    """
    edges = []
    declared_n = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "n" and parts[1].isdigit():
                declared_n = int(parts[1])
            continue
        parts = line.split()
        if len(parts) != 2 or not all(p.isdigit() for p in parts):
            raise EdgeListParseError(f"line {lineno}: expected 'u v', got {raw!r}")
        edges.append((int(parts[0]), int(parts[1])))
    if not edges and declared_n is None:
        raise EdgeListParseError("no edges found")
    n = max([max(e) for e in edges], default=-1) + 1
    if declared_n is not None:
        if declared_n < n:
            raise EdgeListParseError(f"declared n={declared_n} but saw node {n - 1}")
        n = declared_n
    return Graph.from_edges(n, edges, spec=spec)


def _parse_int(tok: str, what: str, spec: str) -> int:
    try:
        v = int(tok)
    except ValueError:
        raise GraphSpecError(f"{spec!r}: {what} must be an integer, got {tok!r}") from None
    return v


def _uniform_tree(n: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    # Prüfer decoding: uniform over the n^(n-2) labeled trees
    if n == 1:
        return []
    if n == 2:
        return [(0, 1)]
    seq = rng.integers(0, n, size=n - 2).tolist()
    degree = [1] * n
    for x in seq:
        degree[x] += 1
    edges = []
    for x in seq:
        leaf = next(i for i in range(n) if degree[i] == 1)
        edges.append((leaf, x))
        degree[leaf] -= 1
        degree[x] -= 1
    u, v = [i for i in range(n) if degree[i] == 1]
    edges.append((u, v))
    return edges


def generate(spec: str) -> Graph:
    """Build a graph from a generator descriptor.

    Grammar (``n >= 1``)::

        path:n  cycle:n  clique:n  grid:WxH  tree:n:seed  gnp:n:p:seed

    ``tree`` draws a uniform labeled tree; ``gnp`` resamples Erdős–Rényi
    graphs until one is connected (at most ``GNP_MAX_ATTEMPTS`` draws).
    Seeded generators are deterministic in the descriptor.
    """
    parts = spec.strip().split(":")
    kind, args = parts[0], parts[1:]
    arity = {"path": 1, "cycle": 1, "clique": 1, "grid": 1, "tree": 2, "gnp": 3}
    if kind not in arity:
        raise GraphSpecError(f"unknown graph family {kind!r} in {spec!r}")
    if len(args) != arity[kind]:
        raise GraphSpecError(f"{spec!r}: {kind} takes {arity[kind]} argument(s)")

    if kind == "grid":
        dims = args[0].lower().split("x")
        if len(dims) != 2:
            raise GraphSpecError(f"{spec!r}: grid size must look like WxH")
        w, h = (_parse_int(d, "grid side", spec) for d in dims)
        if w < 1 or h < 1:
            raise GraphSpecError(f"{spec!r}: grid sides must be >= 1")
        edges = []
        for y in range(h):
            for x in range(w):
                u = y * w + x
                if x + 1 < w:
                    edges.append((u, u + 1))
                if y + 1 < h:
                    edges.append((u, u + w))
        return Graph.from_edges(w * h, edges, spec=spec)

    n = _parse_int(args[0], "n", spec)
    if n < 1:
        raise GraphSpecError(f"{spec!r}: n must be >= 1")

    if kind == "path":
        edges = [(i, i + 1) for i in range(n - 1)]
    elif kind == "cycle":
        edges = [(i, (i + 1) % n) for i in range(n)] if n >= 3 else [(i, i + 1) for i in range(n - 1)]
    elif kind == "clique":
        edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    elif kind == "tree":
        seed = _parse_int(args[1], "seed", spec)
        edges = _uniform_tree(n, np.random.default_rng(seed))
    else:
        try:
            p = float(args[1])
        except ValueError:
            raise GraphSpecError(f"{spec!r}: p must be a float") from None
        if not 0.0 <= p <= 1.0:
            raise GraphSpecError(f"{spec!r}: p must lie in [0, 1]")
        seed = _parse_int(args[2], "seed", spec)
        rng = np.random.default_rng(seed)
        iu, ju = np.triu_indices(n, k=1)
        for _ in range(GNP_MAX_ATTEMPTS):
            keep = rng.random(iu.size) < p
            try:
                return Graph.from_edges(n, zip(iu[keep], ju[keep]), spec=spec)
            except DisconnectedGraphError:
                continue
        raise ConnectivityRetryError(n, p, GNP_MAX_ATTEMPTS)

    return Graph.from_edges(n, edges, spec=spec)


def resolve(graph: str) -> Graph:
    """Accept a generator descriptor or a path to an edge-list file."""
    if os.path.isfile(graph):
        with open(graph) as fh:
            return load_edge_list(fh.read(), spec=None)
    return generate(graph)
