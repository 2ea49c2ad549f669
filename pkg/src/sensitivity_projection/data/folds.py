from typing import Iterator, NamedTuple, Tuple, Union

import numpy as np

from sensitivity_projection.data.loader import Dataset
from sensitivity_projection.utilities import SeedTree, as_seed_tree


class InfeasibleSplitError(ValueError):
    pass


class FoldAssignment(NamedTuple):
    labels: np.ndarray
    K: int
    seed: int

    def eval_index(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.labels == k)

    def train_index(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.labels != k)

    def split(self, ds: Dataset, k: int) -> Tuple[Dataset, Dataset]:
        """The (training, evaluation) pair for fold ``k``."""
        return ds.subset(self.train_index(k)), ds.subset(self.eval_index(k))

    def folds(self) -> Iterator[int]:
        return iter(range(1, self.K + 1))

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.K + 1)[1:]


def assign_folds(ds: Dataset, K: int, seed: Union[int, SeedTree]) -> FoldAssignment:
    """Splits units into K folds, stratified by treatment arm.

    Units of each arm are shuffled and dealt round-robin, the control arm
    continuing where the treated arm stopped, so fold sizes differ by at most
    one and every fold holds both arms whenever each arm has at least K units.

    Parameters
    ----------
    ds
        The dataset to split. Only its size and treatment vector are used.
    K
        Number of folds, 2 <= K <= n.
    seed
        Master seed, or a seed tree node to draw the shuffles from.

    Returns
    -------
        Fold labels in 1..K.

    """
    if not 2 <= K <= ds.n:
        raise ValueError(f'Fold count K must lie in [2, {ds.n}], got {K}.')
    treated = np.flatnonzero(ds.treatment == 1)
    control = np.flatnonzero(ds.treatment == 0)
    for arm, units in (('treated', treated), ('control', control)):
        if len(units) < K:
            raise InfeasibleSplitError(f'Cannot stratify {K} folds: the {arm} arm has only '
                                       f'{len(units)} units.')

    tree = as_seed_tree(seed, ('folds',))
    rng = tree.generator()
    order = np.concatenate([rng.permutation(treated), rng.permutation(control)])

    labels = np.empty(ds.n, dtype=np.int64)
    labels[order] = np.arange(ds.n) % K + 1
    return FoldAssignment(labels=labels, K=K, seed=int(tree.master_seed))
