"""
Shared fixtures.

example_tree: the 7-leaf tree used throughout the docs.

        b11
      /  |  \  \
    b9  b10  b6  b7
   / |   | \
  b1 b8  b4 b5
     | \
     b2 b3

Leaf b_k carries feature column k - 1. Internal nodes: b8 = {2,3}, b9 = {1,2,3},
b10 = {4,5}, b11 = all seven.
"""
from typing import List

import numpy as np
import pytest

from src.models.dataset import Dataset
from src.models.tree import NodeRecord, Tree
from src.repositories.tree_repository import parse_tree

EXAMPLE_TREE_TSV = """\
# node_id\tparent_id\tleaf_col
b11\t-\t-
b9\tb11\t-
b1\tb9\t0
b8\tb9\t-
b2\tb8\t1
b3\tb8\t2
b10\tb11\t-
b4\tb10\t3
b5\tb10\t4
b6\tb11\t5
b7\tb11\t6
"""

FOREST_TSV = """\
r0\t-\t-
a\tr0\t0
b\tr0\t1
r1\t-\t-
c\tr1\t2
d\tr1\t3
"""

def random_tree(p: int, rng: np.random.Generator, max_depth: int = 4) -> Tree:
    """Random rooted tree over p shuffled columns; every internal node has >= 2 children"""
    cols = rng.permutation(p)
    records: List[NodeRecord] = []
    counter = [0]

    def build(members: np.ndarray, parent, depth: int) -> None:
        if len(members) == 1:
            records.append(NodeRecord(f"x{members[0]}", parent, int(members[0])))
            return
        node_id = f"n{counter[0]}"
        counter[0] += 1
        records.append(NodeRecord(node_id, parent, None))
        if depth >= max_depth - 1:
            for col in members:
                records.append(NodeRecord(f"x{col}", node_id, int(col)))
            return
        n_parts = int(rng.integers(2, min(3, len(members)) + 1))
        cuts = np.sort(rng.choice(np.arange(1, len(members)), size=n_parts - 1, replace=False))
        for part in np.split(members, cuts):
            build(part, node_id, depth + 1)

    build(cols, None, 0)
    return Tree.from_records(records, p)

@pytest.fixture
def example_tree() -> Tree:
    return parse_tree(EXAMPLE_TREE_TSV, 7)

@pytest.fixture
def forest() -> Tree:
    return parse_tree(FOREST_TSV, 4)

@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240917)

@pytest.fixture
def tree_factory():
    return random_tree

@pytest.fixture
def gaussian_data(rng) -> Dataset:
    """n = 40 observations on the example tree with groups {1}, {2,3}, {4,5}, {6}, {7}"""
    X = rng.standard_normal((40, 7))
    beta = np.array([1.0, -2.0, -2.0, 3.0, 3.0, 0.5, -1.0])
    y = X @ beta + 0.5 * rng.standard_normal(40)
    return Dataset(X=X, y=y)

@pytest.fixture
def binary_data(rng) -> Dataset:
    X = rng.standard_normal((60, 7))
    beta = np.array([1.0, -1.0, -1.0, 0.5, 0.5, 0.0, 0.0])
    y = (rng.random(60) < 1.0 / (1.0 + np.exp(-(X @ beta)))).astype(float)
    return Dataset(X=X, y=y)
