"""Graph of identified transform pairs, spanning trees and chain-rule anchoring."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import DisconnectedGraphError, PreconditionError

Pair = tuple[int, int]


@dataclass(frozen=True)
class Edge:
    """Undirected edge storing ``Upsilon(nu, mu)`` for one orientation."""

    nu: int
    mu: int
    upsilon: np.ndarray = field(compare=False)
    residual: float = 0.0

    @property
    def key(self) -> Pair:
        return (min(self.nu, self.mu), max(self.nu, self.mu))


@dataclass(frozen=True, eq=False)
class UpsilonGraph:
    sigma: int
    edges: dict[Pair, Edge]

    def __post_init__(self):
        for (a, b), e in self.edges.items():
            if a == b:
                raise PreconditionError(f"self-loop at vertex {a}")
            if not (1 <= a < b <= self.sigma):
                raise PreconditionError(f"edge {(a, b)} outside vertices 1..{self.sigma}")

    @property
    def vertices(self) -> list[int]:
        return list(range(1, self.sigma + 1))

    def neighbours(self, v: int) -> list[int]:
        out = [b if a == v else a for a, b in self.edges if v in (a, b)]
        return sorted(out)

    def upsilon(self, nu: int, mu: int) -> np.ndarray:
        """``Upsilon(nu, mu)``, inverting the stored orientation when needed."""
        if nu == mu:
            return np.eye(self._n())
        e = self.edges.get((min(nu, mu), max(nu, mu)))
        if e is None:
            raise KeyError(f"no edge between {nu} and {mu}")
        if (e.nu, e.mu) == (nu, mu):
            return e.upsilon
        return np.linalg.inv(e.upsilon)

    def _n(self) -> int:
        for e in self.edges.values():
            return e.upsilon.shape[0]
        raise PreconditionError("edgeless graph has no matrix dimension")

    def to_dot(self, tree: Iterable[Pair] = ()) -> str:
        tree = {tuple(sorted(e)) for e in tree}
        lines = ["graph upsilon {"]
        for v in self.vertices:
            lines.append(f"  {v};")
        for (a, b), e in sorted(self.edges.items()):
            style = ' [style=bold, label="tree"]' if (a, b) in tree else ""
            lines.append(f"  {a} -- {b}{style};")
        lines.append("}")
        return "\n".join(lines) + "\n"


def build_graph(solutions: Mapping, sigma: int) -> UpsilonGraph:
    """One undirected edge per solved ordered pair.

    ``solutions`` maps ``(nu, mu)`` to either a matrix or an object with
    ``upsilon`` and ``residual``/``z_norm`` attributes. If both orientations
    were solved, the one with the smaller relative residual is kept.
    """
    edges: dict[Pair, Edge] = {}
    for (nu, mu), sol in sorted(solutions.items()):
        if nu == mu:
            continue
        if hasattr(sol, "upsilon"):
            U = np.asarray(sol.upsilon)
            z = getattr(sol, "z_norm", 0.0)
            res = sol.residual / z if z else sol.residual
        else:
            U, res = np.asarray(sol, dtype=float), 0.0
        e = Edge(nu, mu, U, float(res))
        old = edges.get(e.key)
        if old is None or e.residual < old.residual:
            edges[e.key] = e
    return UpsilonGraph(sigma, edges)


def reachable(g: UpsilonGraph, start: int = 1) -> set[int]:
    seen = {start}
    queue = deque([start])
    while queue:
        v = queue.popleft()
        for w in g.neighbours(v):
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return seen


def is_connected(g: UpsilonGraph) -> bool:
    return len(reachable(g)) == g.sigma


def spanning_tree(g: UpsilonGraph) -> tuple[Pair, ...]:
    """Kruskal tree preferring small solve residuals, then low vertex indices.

    With equal residuals on a complete graph this is the star at vertex 1.

    Raises:
        DisconnectedGraphError: naming the vertices unreachable from vertex 1.
    """
    unreachable = set(g.vertices) - reachable(g)
    if unreachable:
        raise DisconnectedGraphError(
            f"modes {sorted(unreachable)} cannot be reached from mode 1; "
            "no spanning tree exists (the hybrid input is not persistently exciting)",
            unreachable,
        )
    parent = {v: v for v in g.vertices}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    tree = []
    for key, e in sorted(g.edges.items(), key=lambda kv: (kv[1].residual, kv[0])):
        ra, rb = find(key[0]), find(key[1])
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
            tree.append(key)
            if len(tree) == g.sigma - 1:
                break
    return tuple(sorted(tree))


def count_spanning_trees(sigma: int) -> int:
    """Number of spanning trees of the complete graph on ``sigma`` vertices."""
    if sigma < 1:
        raise PreconditionError("sigma must be positive")
    if sigma <= 2:
        return 1
    return sigma ** (sigma - 2)


def matrix_tree_count(sigma: int, edges: Iterable[Pair]) -> int:
    """Spanning-tree count from the determinant of the reduced Laplacian."""
    L = np.zeros((sigma, sigma))
    for a, b in edges:
        L[a - 1, b - 1] -= 1
        L[b - 1, a - 1] -= 1
        L[a - 1, a - 1] += 1
        L[b - 1, b - 1] += 1
    if sigma == 1:
        return 1
    return int(round(np.linalg.det(L[1:, 1:])))


def chain_factorize(g: UpsilonGraph, tree: Iterable[Pair], n: int | None = None) -> dict[int, np.ndarray]:
    """Anchor every mode to mode 1 by multiplying along the tree path.

    Walking outward from 1, a child ``c`` of ``p`` gets
    ``Upsilon(c, 1) = Upsilon(p, 1) @ Upsilon(c, p)``.
    """
    tree = [tuple(sorted(e)) for e in tree]
    adj: dict[int, list[int]] = {v: [] for v in g.vertices}
    for a, b in tree:
        if (a, b) not in g.edges:
            raise PreconditionError(f"tree edge {(a, b)} is not in the graph")
        adj[a].append(b)
        adj[b].append(a)
    dim = n if n is not None else (g._n() if g.edges else None)
    if dim is None:
        if g.sigma == 1:
            raise PreconditionError("pass n for a single-vertex graph")
        raise DisconnectedGraphError("edgeless graph", set(g.vertices) - {1})
    anchored = {1: np.eye(dim)}
    queue = deque([1])
    while queue:
        p = queue.popleft()
        for c in sorted(adj[p]):
            if c not in anchored:
                anchored[c] = anchored[p] @ g.upsilon(c, p)
                queue.append(c)
    missing = set(g.vertices) - set(anchored)
    if missing:
        raise DisconnectedGraphError(
            f"tree does not reach modes {sorted(missing)} from mode 1", missing
        )
    return dict(sorted(anchored.items()))
