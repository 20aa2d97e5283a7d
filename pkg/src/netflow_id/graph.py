"""Undirected simple networks, random-graph generators and graph Laplacians."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import GraphFormatError

__all__ = [
    "Network",
    "generate_grid",
    "generate_er",
    "generate_ba",
    "generate_ws",
    "load_edge_list",
    "save_edge_list",
    "laplacian",
]


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Network:
    """Immutable undirected graph on nodes ``0..n-1`` without self-loops.

    ``edges`` holds each undirected edge once as ``(u, v)`` with ``u < v``,
    sorted lexicographically. ``src``/``dst`` list every edge in both
    directions grouped by source node (CSR order); summing per-edge terms
    over ``src`` gives the neighbour aggregation used by every vector field.
    """

    n: int
    edges: np.ndarray
    neighbors: tuple = field(repr=False)
    degrees: np.ndarray = field(repr=False)
    src: np.ndarray = field(repr=False)
    dst: np.ndarray = field(repr=False)

    @classmethod
    def from_edges(cls, n, edges) -> "Network":
        n = int(n)
        if n < 1:
            raise ValueError(f"node count must be positive, got {n}")
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n):
            raise ValueError("edge endpoint out of range")
        if np.any(e[:, 0] == e[:, 1]):
            raise ValueError("self-loops are not allowed")
        e = np.sort(e, axis=1)
        e = np.unique(e, axis=0) if e.size else e
        neighbors = [[] for _ in range(n)]
        for u, v in e:
            neighbors[u].append(v)
            neighbors[v].append(u)
        neighbors = tuple(_frozen(np.array(sorted(nb), dtype=np.int64)) for nb in neighbors)
        degrees = np.array([len(nb) for nb in neighbors], dtype=np.int64)
        src = np.repeat(np.arange(n, dtype=np.int64), degrees)
        dst = np.concatenate(neighbors) if len(e) else np.zeros(0, dtype=np.int64)
        return cls(n, _frozen(e), neighbors, _frozen(degrees), _frozen(src), _frozen(dst))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def edge_set(self) -> set:
        return {(int(u), int(v)) for u, v in self.edges}

    def adjacency(self) -> sp.csr_matrix:
        """Sparse symmetric 0/1 adjacency matrix."""
        data = np.ones(len(self.src))
        return sp.csr_matrix((data, (self.src, self.dst)), shape=(self.n, self.n))

    def permuted(self, perm) -> "Network":
        """Relabel node ``i`` as ``perm[i]``."""
        perm = np.asarray(perm, dtype=np.int64)
        return Network.from_edges(self.n, perm[self.edges])

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.edges, other.edges)

    def __hash__(self):
        return hash((self.n, self.edges.tobytes()))


def generate_grid(side: int) -> Network:
    """Square lattice of ``side**2`` nodes with 8-neighbourhood (king-move) edges.

    Node ``v(k, l)`` (0-based row ``k``, column ``l``) has index ``k * side + l``.
    """
    if side < 2:
        raise ValueError(f"grid side must be >= 2, got {side}")
    idx = np.arange(side * side).reshape(side, side)
    pairs = [
        (idx[:, :-1], idx[:, 1:]),      # horizontal
        (idx[:-1, :], idx[1:, :]),      # vertical
        (idx[:-1, :-1], idx[1:, 1:]),   # main diagonal
        (idx[:-1, 1:], idx[1:, :-1]),   # anti-diagonal
    ]
    edges = np.concatenate([np.stack([a.ravel(), b.ravel()], axis=1) for a, b in pairs])
    return Network.from_edges(side * side, edges)


def generate_er(n: int, p: float, seed: int) -> Network:
    """Erdos-Renyi G(n, p): every node pair is an edge independently with probability p."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    return Network.from_edges(n, np.stack([iu[keep], ju[keep]], axis=1))


def generate_ba(n: int, m: int, seed: int) -> Network:
    """Barabasi-Albert preferential attachment.

    Starts from a complete core on ``m`` nodes; each later node attaches to
    ``m`` distinct existing nodes drawn with probability proportional to
    degree. The result has ``m*(m-1)/2 + m*(n-m)`` edges.
    """
    if not 1 <= m < n:
        raise ValueError(f"need 1 <= m < n, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    edges = [(u, v) for u in range(m) for v in range(u + 1, m)]
    deg = np.zeros(n)
    for u, v in edges:
        deg[u] += 1
        deg[v] += 1
    for new in range(m, n):
        w = deg[:new]
        total = w.sum()
        # m == 1 starts from a single degree-0 node
        prob = w / total if total > 0 else np.full(new, 1.0 / new)
        targets = rng.choice(new, size=m, replace=False, p=prob)
        for t in targets:
            edges.append((int(t), new))
            deg[t] += 1
        deg[new] += m
    return Network.from_edges(n, edges)


def generate_ws(n: int, k: int, beta: float, seed: int) -> Network:
    """Watts-Strogatz small world: ring lattice of even degree k, edges rewired with probability beta."""
    if k % 2 or not 0 <= k < n:
        raise ValueError(f"k must be even with 0 <= k < n, got k={k}, n={n}")
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    rng = np.random.default_rng(seed)
    adj = [set() for _ in range(n)]
    for u in range(n):
        for j in range(1, k // 2 + 1):
            v = (u + j) % n
            adj[u].add(v)
            adj[v].add(u)
    for j in range(1, k // 2 + 1):
        for u in range(n):
            v = (u + j) % n
            if v not in adj[u] or rng.random() >= beta:
                continue
            candidates = [w for w in range(n) if w != u and w not in adj[u]]
            if not candidates:
                continue
            w = candidates[rng.integers(len(candidates))]
            adj[u].discard(v)
            adj[v].discard(u)
            adj[u].add(w)
            adj[w].add(u)
    edges = [(u, v) for u in range(n) for v in adj[u] if u < v]
    return Network.from_edges(n, edges)


_NODES_HEADER = re.compile(r"#\s*nodes\s*[:=]\s*(\d+)")


def load_edge_list(path) -> Network:
    """Read a whitespace-separated ``u v`` edge list (0-indexed, ``#`` comments).

    Node count is ``max id + 1`` unless a ``# nodes: N`` comment declares more.
    Self-loops, duplicate edges and malformed lines raise GraphFormatError.
    """
    declared = 0
    edges = []
    seen = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                m = _NODES_HEADER.match(line)
                if m:
                    declared = int(m.group(1))
                continue
            parts = line.split()
            if len(parts) != 2:
                raise GraphFormatError(f"expected two node ids, got {line!r}", lineno)
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise GraphFormatError(f"non-integer node id in {line!r}", lineno) from None
            if u < 0 or v < 0:
                raise GraphFormatError(f"negative node id in {line!r}", lineno)
            if u == v:
                raise GraphFormatError(f"self-loop on node {u}", lineno)
            key = (min(u, v), max(u, v))
            if key in seen:
                raise GraphFormatError(f"duplicate edge {key} (first on line {seen[key]})", lineno)
            seen[key] = lineno
            edges.append(key)
    n = max([declared] + [v + 1 for _, v in edges])
    if n < 1:
        raise GraphFormatError("edge list declares no nodes")
    return Network.from_edges(n, edges)


def save_edge_list(net: Network, path, comment: str | None = None) -> None:
    lines = ([f"# {comment}"] if comment else []) + [f"# nodes: {net.n}"] + [f"{u} {v}" for u, v in net.edges]
    Path(path).write_text("\n".join(lines) + "\n")


def laplacian(net: Network) -> sp.csr_matrix:
    """Combinatorial Laplacian ``L = D - A`` as a sparse CSR matrix."""
    return (sp.diags(net.degrees.astype(float)) - net.adjacency()).tocsr()
