import numpy as np
import pytest

from sensitivity_projection.utilities import SeedTree, as_seed_tree


def test_seed_tree_streams():
    root = SeedTree.from_seed(3)
    a = root.child('fold', 1).generator().uniform(size=4)
    assert np.array_equal(a, as_seed_tree(3, ('fold', 1)).generator().uniform(size=4))
    assert not np.array_equal(a, root.child('fold', 2).generator().uniform(size=4))
    assert root.child('fold').child(1) == root.child('fold', 1)
    assert 0 <= root.integer_seed() < 2 ** 63


@pytest.mark.parametrize('label, error', [(-1, ValueError), (True, TypeError), (1.5, TypeError)])
def test_seed_tree_rejects_labels(label, error):
    with pytest.raises(error):
        SeedTree.from_seed(0).child(label)


@pytest.mark.parametrize('seed', [-1, 2 ** 64])
def test_seed_tree_rejects_master_seed(seed):
    with pytest.raises(ValueError, match='64-bit'):
        SeedTree.from_seed(seed)


@pytest.mark.parametrize('first, second', [
    (('dgp', 0), ('dgp', 1)),
    (('fold', 1), ('fold', 2)),
    (('outcome1',), ('outcome0',)),
])
def test_sibling_streams_are_uncorrelated(first, second):
    root = SeedTree.from_seed(20261019)
    a = root.child(*first).generator().standard_normal(10_000)
    b = root.child(*second).generator().standard_normal(10_000)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.05


def test_stream_does_not_depend_on_other_nodes():
    root = SeedTree.from_seed(5)
    alone = root.child('fold', 3).generator().uniform(size=8)
    root.child('fold', 2).generator().uniform(size=1000)
    assert np.array_equal(root.child('fold', 3).generator().uniform(size=8), alone)
