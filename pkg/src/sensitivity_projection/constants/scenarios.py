from typing import NamedTuple, Tuple

from sensitivity_projection.constants import paths

########################
# Simulation scenarios #
########################


class DgpScenario:

    def __init__(
            self,
            name: str,
            constraint_file: str,
            parameter: str = 'gamma',
            grid: Tuple[float, ...] = (0.0,),
            n: int = 1000,
            binary_outcome: bool = True,
    ):
        self.name = name
        self.constraint_file = constraint_file
        # sweep parameter of the experiment, either 'gamma' or 'eta2'
        self.parameter = parameter
        self.grid = grid
        self.n = n
        self.binary_outcome = binary_outcome

    @property
    def constraint_path(self):
        return paths.CONSTRAINTS_DIR / self.constraint_file

    @property
    def spec_path(self):
        return paths.MODEL_SPEC_DIR / f'{self.name}.yaml'

    def __repr__(self):
        return f"DgpScenario({self.name})"


class __DgpScenarios(NamedTuple):
    EXAMPLE1: DgpScenario = DgpScenario('example1', 'example1.txt', grid=(0.0,), n=1000)
    EXAMPLE2: DgpScenario = DgpScenario('example2', 'example2.txt', grid=(-4.0, 0.0, 4.0), n=500)
    # projected with example1's constraints, which this process violates
    MISSPEC: DgpScenario = DgpScenario('misspec', 'example1.txt', grid=(-4.0,), n=500)
    OVB: DgpScenario = DgpScenario(
        'ovb', 'example1.txt', parameter='eta2', grid=(0.01, 0.05, 0.1, 0.2, 0.25), n=500,
        binary_outcome=False,
    )

    def get(self, name: str) -> DgpScenario:
        for scenario in self:
            if scenario.name == name:
                return scenario
        raise ValueError(f'Unknown data generating process {name}. '
                         f'Expected one of {[s.name for s in self]}.')

    @property
    def names(self):
        return [s.name for s in self]


DGP_SCENARIOS = __DgpScenarios()
