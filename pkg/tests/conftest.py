import json

import numpy as np
import pytest

from hyperlap.hypergraph import is_connected, validate


def random_hypergraph(rng, N, num_edges, max_size=4, m=0):
    """Random connected hypergraph: a spanning chain of edges plus random extra edges."""
    order = rng.permutation(N)
    edges = []
    for i in range(N - 1):
        edges.append({"v": [int(order[i]) + 1, int(order[i + 1]) + 1], "w": float(rng.uniform(0.5, 2.0))})
    for _ in range(num_edges):
        size = int(rng.integers(2, max_size + 1))
        verts = rng.choice(N, size=min(size, N), replace=False) + 1
        edges.append({"v": [int(v) for v in verts], "w": float(rng.uniform(0.5, 2.0))})
    return validate({"n": N - m, "m": m, "edges": edges})


def random_uniform_hypergraph(rng, N, num_edges, size):
    """Connected hypergraph whose edges all have ``size`` vertices."""
    while True:
        edges = []
        for _ in range(num_edges):
            verts = rng.choice(N, size=size, replace=False) + 1
            edges.append({"v": [int(v) for v in verts], "w": float(rng.uniform(0.5, 2.0))})
        graph = validate({"n": N, "m": 0, "edges": edges})
        if is_connected(graph):
            return graph


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def single_edge():
    """{1,2}, w=1, both vertices free."""
    return validate({"n": 2, "m": 0, "edges": [{"v": [1, 2], "w": 1.0}]})


@pytest.fixture
def single_edge_controlled():
    """{1,2}, w=1, vertex 2 controlled."""
    return validate({"n": 1, "m": 1, "edges": [{"v": [1, 2], "w": 1.0}]})


@pytest.fixture
def triangle_edge():
    """One 3-vertex edge {1,2,3}, w=1."""
    return validate({"n": 3, "m": 0, "edges": [{"v": [1, 2, 3], "w": 1.0}]})


@pytest.fixture
def five_vertex():
    """5 vertices (3 free, 2 controlled), two hyperedges."""
    return validate(
        {
            "n": 3,
            "m": 2,
            "edges": [
                {"v": [1, 2, 4], "w": 1.0},
                {"v": [2, 3, 5], "w": 0.5},
            ],
        }
    )


@pytest.fixture
def write_json(tmp_path):
    def _write(name, data):
        path = tmp_path / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return str(path)

    return _write
