import numpy as np
import pytest

from bethe.nfg import EdgeDecl, LocalFunction, NormalFactorGraph
from bethe.rng import seeded_rng


def two_node_graph(vec_a, vec_b, kind="snfg", alphabet=None):
    """Single-edge graph with one vector factor at each endpoint."""
    vec_a = np.asarray(vec_a)
    vec_b = np.asarray(vec_b)
    if alphabet is None:
        alphabet = len(vec_a) if kind == "snfg" else int(round(len(vec_a) ** 0.5))
    return NormalFactorGraph(
        kind=kind,
        num_nodes=2,
        edges=[EdgeDecl(0, (0, 1), alphabet)],
        factors=[
            LocalFunction(0, (len(vec_a),), dense=vec_a),
            LocalFunction(1, (len(vec_b),), dense=vec_b),
        ],
    )


def random_tree_graph(seed, kind="snfg", max_nodes=7, max_alphabet=3):
    """Random tree with positive classical tables or strict-sense
    double-edge tables."""
    rng = seeded_rng(seed, 17)
    num_nodes = int(rng.integers(2, max_nodes + 1))
    edges = []
    for v in range(1, num_nodes):
        u = int(rng.integers(0, v))
        d = int(rng.integers(2, max_alphabet + 1))
        edges.append(EdgeDecl(id=v - 1, endpoints=(u, v), alphabet_size=d))
    degree = [0] * num_nodes
    dims = {}
    for e in edges:
        for v in e.endpoints:
            degree[v] += 1
    incident = {v: [] for v in range(num_nodes)}
    for pos, e in enumerate(sorted(edges, key=lambda e: e.id)):
        for v in e.endpoints:
            incident[v].append(e.alphabet_size)
    factors = []
    for node in range(num_nodes):
        dims = incident[node]
        if kind == "snfg":
            shape = tuple(dims)
            table = 1.0 - rng.uniform(size=shape)
            factors.append(LocalFunction(node, shape, dense=table))
        else:
            dim = int(np.prod(dims))
            gmat = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal(
                (dim, dim)
            )
            choi = gmat @ gmat.conj().T
            choi /= np.trace(choi).real
            k = len(dims)
            split = choi.reshape(dims + dims)
            perm = [a for pair in zip(range(k), range(k, 2 * k)) for a in pair]
            table = split.transpose(perm).reshape([d * d for d in dims])
            factors.append(LocalFunction(node, table.shape, dense=table))
    return NormalFactorGraph(
        kind=kind, num_nodes=num_nodes, edges=edges, factors=factors
    )


@pytest.fixture
def rng():
    return seeded_rng(20240811, 0)
