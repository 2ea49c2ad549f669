from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np

from sensitivity_projection.constants import metadata


class IfSamples(NamedTuple):
    """Influence function values for one target at a set of units.

    ``centered_at`` is the estimate subtracted inside the influence function,
    so ``centered_at + mean(values)`` is the one-step estimate.

    """
    values: np.ndarray
    target: str
    gamma: Optional[float] = None
    centered_at: float = 0.0

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def with_values(self, values: np.ndarray) -> 'IfSamples':
        return self._replace(values=np.asarray(values, dtype=float))


def one_step_estimate(samples: IfSamples) -> Tuple[float, float]:
    """Point estimate and variance estimate from influence function values."""
    n = samples.n
    if n < 2:
        raise ValueError(f'Variance is undefined for a fold with {n} unit.')
    estimate = samples.centered_at + float(np.mean(samples.values))
    variance = float(np.var(samples.values, ddof=1)) / n
    return estimate, variance


def contrast(treated: IfSamples, control: IfSamples) -> IfSamples:
    return IfSamples(
        values=treated.values - control.values,
        target=metadata.TARGETS.CONTRAST,
        gamma=treated.gamma,
        centered_at=treated.centered_at - control.centered_at,
    )


def median_aggregate(estimates: Sequence[float], variances: Sequence[float]) -> Tuple[float, float]:
    """Medians of fold estimates and fold variances."""
    return float(np.median(estimates)), float(np.median(variances))
