"""
Hypergraph data model.

Vertices are 1-based in every file format and 0-based in memory; the
conversion happens only in ``validate`` / ``to_dict``. Vertices ``0..n-1`` are
free, ``n..n+m-1`` are controlled.
"""

import json
import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, List, Mapping, Sequence, Tuple

import numpy as np
import scipy.sparse
from scipy.sparse import csgraph

from hyperlap.errors import (
    Disconnected,
    DuplicateVertex,
    EdgeTooSmall,
    EmptyVertexSet,
    MalformedInput,
    NonpositiveWeight,
    VertexOutOfRange,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Hypergraph:
    """Immutable weighted hypergraph G = (V, E, w) with a free/controlled split."""

    n: int
    m: int
    edges: Tuple[Tuple[int, ...], ...]
    weights: Tuple[float, ...]

    @property
    def N(self) -> int:
        return self.n + self.m

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def edge_index(self) -> Tuple[np.ndarray, ...]:
        """Vertex index arrays, one per edge (read-only)."""
        arrays = []
        for e in self.edges:
            idx = np.asarray(e, dtype=np.intp)
            idx.setflags(write=False)
            arrays.append(idx)
        return tuple(arrays)

    @cached_property
    def weight_array(self) -> np.ndarray:
        w = np.asarray(self.weights, dtype=float)
        w.setflags(write=False)
        return w

    @cached_property
    def edge_sizes(self) -> np.ndarray:
        sizes = np.asarray([len(e) for e in self.edges], dtype=int)
        sizes.setflags(write=False)
        return sizes

    @cached_property
    def incidence(self) -> scipy.sparse.csr_matrix:
        """Vertex-edge incidence matrix (N x |E|)."""
        rows: List[int] = []
        cols: List[int] = []
        for j, e in enumerate(self.edges):
            rows.extend(e)
            cols.extend([j] * len(e))
        data = np.ones(len(rows))
        return scipy.sparse.csr_matrix((data, (rows, cols)), shape=(self.N, self.num_edges))

    @property
    def is_two_uniform(self) -> bool:
        """True when every edge has exactly two vertices (usual graph)."""
        return all(len(e) == 2 for e in self.edges)

    def scaled(self, factor: float) -> "Hypergraph":
        """Same hypergraph with every weight multiplied by ``factor``."""
        if factor <= 0:
            raise NonpositiveWeight(f"weight scale must be positive, got {factor}")
        return Hypergraph(self.n, self.m, self.edges, tuple(w * factor for w in self.weights))


# -----------------------------
# Parsing / serialization
# -----------------------------
def validate(raw_spec: Mapping[str, Any]) -> Hypergraph:
    """
    Build a validated Hypergraph from a parsed JSON-like mapping.

    Expected shape: ``{"n": int, "m": int, "edges": [{"v": [1-based ints], "w": float}, ...]}``.
    Edges are stored with sorted vertices, and the edge list itself is sorted,
    so every later iteration order is deterministic.
    """
    if not isinstance(raw_spec, Mapping):
        raise MalformedInput("hypergraph spec must be a JSON object")

    try:
        n = int(raw_spec.get("n", 0))
        m = int(raw_spec.get("m", 0))
    except (TypeError, ValueError) as e:
        raise MalformedInput(f"n and m must be integers: {e}")

    if n < 0 or m < 0:
        raise EmptyVertexSet(f"vertex counts must be non-negative (n={n}, m={m})")
    N = n + m
    if N < 1:
        raise EmptyVertexSet("hypergraph needs at least one vertex (n + m >= 1)")

    raw_edges = raw_spec.get("edges", [])
    if not isinstance(raw_edges, Sequence) or isinstance(raw_edges, (str, bytes)):
        raise MalformedInput("'edges' must be a list")

    parsed: List[Tuple[Tuple[int, ...], float]] = []
    for pos, item in enumerate(raw_edges):
        if not isinstance(item, Mapping) or "v" not in item:
            raise MalformedInput(f"edge #{pos + 1} must be an object with 'v' and 'w'")
        try:
            verts = [int(v) for v in item["v"]]
            weight = float(item.get("w", 1.0))
        except (TypeError, ValueError) as e:
            raise MalformedInput(f"edge #{pos + 1}: {e}")

        if len(verts) < 2:
            raise EdgeTooSmall(f"edge #{pos + 1} has {len(verts)} vertex; every edge needs #e >= 2")
        for v in verts:
            if v < 1 or v > N:
                raise VertexOutOfRange(f"edge #{pos + 1}: vertex {v} outside 1..{N}")
        if len(set(verts)) != len(verts):
            raise DuplicateVertex(f"edge #{pos + 1} repeats a vertex: {verts}")
        if not np.isfinite(weight) or weight <= 0:
            raise NonpositiveWeight(f"edge #{pos + 1} has weight {weight}; weights must be > 0")

        parsed.append((tuple(sorted(v - 1 for v in verts)), weight))

    parsed.sort()
    graph = Hypergraph(
        n=n,
        m=m,
        edges=tuple(e for e, _ in parsed),
        weights=tuple(w for _, w in parsed),
    )
    logger.debug(f"Validated hypergraph: N={graph.N} (n={n}, m={m}), |E|={graph.num_edges}")
    return graph


def to_dict(graph: Hypergraph) -> Dict[str, Any]:
    """Serialize back to the 1-based JSON shape."""
    return {
        "n": graph.n,
        "m": graph.m,
        "edges": [{"v": [i + 1 for i in e], "w": w} for e, w in zip(graph.edges, graph.weights)],
    }


def load_hypergraph(path: str) -> Hypergraph:
    """Read and validate a hypergraph JSON file."""
    file_path = Path(path)
    with open(file_path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise MalformedInput(f"{file_path}: invalid JSON ({e})")
    return validate(data)


# -----------------------------
# Structure
# -----------------------------
def _adjacency(graph: Hypergraph) -> scipy.sparse.csr_matrix:
    """Vertices sharing at least one edge are adjacent (2-section of the incidence)."""
    B = graph.incidence
    adj = (B @ B.T).tocsr()
    adj = (adj - scipy.sparse.diags(adj.diagonal())).tocsr()
    adj.eliminate_zeros()
    adj.data[:] = 1.0
    return adj


def is_connected(graph: Hypergraph) -> bool:
    """True iff every vertex pair is joined by a chain of edges."""
    if graph.N == 1:
        return True
    n_components, _ = csgraph.connected_components(_adjacency(graph), directed=False)
    return n_components == 1


def distances(graph: Hypergraph) -> np.ndarray:
    """All-pairs minimal edge-chain lengths (BFS on the incidence structure); inf if unreachable."""
    return csgraph.shortest_path(_adjacency(graph), directed=False, unweighted=True)


def diameter(graph: Hypergraph) -> int:
    """Largest minimal edge-chain length over all vertex pairs."""
    if not is_connected(graph):
        raise Disconnected("diameter is only defined for connected hypergraphs")
    if graph.N == 1:
        return 0
    return int(distances(graph).max())


def nu_E(graph: Hypergraph) -> float:
    """max over edges of #e(#e-1)/2 (1 for an edgeless graph, the neutral value)."""
    if graph.num_edges == 0:
        return 1.0
    sizes = graph.edge_sizes
    return float((sizes * (sizes - 1) // 2).max())


def clique_weights(graph: Hypergraph) -> np.ndarray:
    """
    Clique-expansion weights: w_ij = sum of w(e) over edges containing both i and j.

    Returns a symmetric N x N array with zero diagonal.
    """
    W = np.zeros((graph.N, graph.N))
    for idx, w in zip(graph.edge_index, graph.weights):
        W[np.ix_(idx, idx)] += w
    np.fill_diagonal(W, 0.0)
    return W
