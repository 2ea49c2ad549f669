from typing import Iterable, NamedTuple, Sequence, Tuple, Union

import numpy as np
from vivarium.framework.randomness import get_hash

Label = Union[int, str]


def _label_to_int(label: Label) -> int:
    if isinstance(label, (bool, np.bool_)):
        raise TypeError(f'Seed labels must be integers or strings, got {label!r}.')
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError(f'Integer seed labels must be non-negative, got {label}.')
        return int(label)
    if isinstance(label, str):
        return get_hash(label)
    raise TypeError(f'Seed labels must be integers or strings, got {label!r}.')


class SeedTree(NamedTuple):
    """A deterministic tree of independent random streams.

    Every node is identified by a master seed and a path of labels. The stream
    at a node is drawn from a counter-based ``Philox`` generator keyed by a
    :class:`numpy.random.SeedSequence` with the path as its spawn key, so a
    node's draws never depend on which other nodes were used, or in what order.

    """
    master_seed: int
    path: Tuple[int, ...] = ()

    @classmethod
    def from_seed(cls, seed: int, path: Iterable[Label] = ()) -> 'SeedTree':
        if seed < 0 or seed >= 2 ** 64:
            raise ValueError(f'Master seed must be a 64-bit non-negative integer, got {seed}.')
        return cls(int(seed), tuple(_label_to_int(label) for label in path))

    def child(self, *labels: Label) -> 'SeedTree':
        return SeedTree(self.master_seed, self.path + tuple(_label_to_int(label) for label in labels))

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.master_seed, spawn_key=self.path)

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(self.seed_sequence()))

    def integer_seed(self) -> int:
        """A 63-bit integer summarising this node, for APIs that take a plain seed."""
        return int(self.seed_sequence().generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def as_seed_tree(seed: Union[int, SeedTree], path: Sequence[Label] = ()) -> SeedTree:
    if isinstance(seed, SeedTree):
        return seed.child(*path)
    return SeedTree.from_seed(int(seed), path)
