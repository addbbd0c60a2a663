import numpy as np
import pytest

from spangraph.graphstore import build_graph


def graph_from_edges(num_nodes, edges, feature_dim=2, labels=None, train=None):
    """Small-graph helper: features are node ids replicated, labels alternate."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    features = np.tile(
        np.arange(num_nodes, dtype=np.float64)[:, None] + 1.0, (1, feature_dim)
    )
    if labels is None:
        labels = np.arange(num_nodes, dtype=np.int64) % 2
    splits = np.array(["train"] * num_nodes)
    if train is not None:
        splits = np.array(["train" if i in train else "none" for i in range(num_nodes)])
    return build_graph(num_nodes, edges, features, np.asarray(labels), splits)


@pytest.fixture
def triangle():
    return graph_from_edges(3, [[0, 1], [1, 2], [0, 2]])


@pytest.fixture
def path4():
    """Path 0-1-2-3: degrees (1, 2, 2, 1)."""
    return graph_from_edges(4, [[0, 1], [1, 2], [2, 3]])


@pytest.fixture
def star4():
    """Star K1,3: center 0, leaves 1..3."""
    return graph_from_edges(4, [[0, 1], [0, 2], [0, 3]])
