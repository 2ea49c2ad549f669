from typing import NamedTuple

import numpy as np
import pytest

from sensitivity_projection.constants import metadata, results
from sensitivity_projection.data import DomainError, assign_folds, build_dataset
from sensitivity_projection.estimation import (
    AlternatingProjector,
    CondMeanEstimator,
    IfSamples,
    aipw_samples,
    cross_fit_aipw,
    cross_fit_curve,
    eif_samples,
    fit_nuisances,
    fold_estimate,
    one_step_estimate,
    plugin_psi,
    tilted_moments,
    tilted_ratio,
)
from sensitivity_projection.estimation.influence import contrast, median_aggregate
from sensitivity_projection.graphs import CiConstraint
from sensitivity_projection.utilities import SeedTree

TARGETS = metadata.TARGETS
VARIANTS = metadata.VARIANTS


def test_tilted_moments_without_tilt():
    mu = np.array([0.0, 0.2, 0.7, 1.0])
    m0, m1 = tilted_moments(mu, 0.0)
    assert np.allclose(m0, 1.0)
    assert np.allclose(m1, mu)


@pytest.mark.parametrize('gamma', [-15.0, -10.5, 12.0, 20.0])
def test_tilted_moments_in_log_space(gamma):
    mu = np.array([1e-6, 0.3, 0.5, 0.9])
    m0, m1 = tilted_moments(mu, gamma)
    assert np.allclose(m0, np.exp(gamma) * mu + 1 - mu, rtol=1e-12)
    assert np.allclose(m1, np.exp(gamma) * mu, rtol=1e-12)


def test_tilted_moments_by_hand():
    m0, m1 = tilted_moments(0.5, np.log(2.0))
    assert m0 == pytest.approx(1.5, abs=1e-12)
    assert m1 == pytest.approx(1.0, abs=1e-12)
    assert tilted_ratio(0.5, np.log(2.0)) == pytest.approx(2 / 3, abs=1e-12)


@pytest.mark.parametrize('gamma', [-15.0, -1.0, 3.0, 12.0])
def test_tilted_moments_without_events(gamma):
    m0, m1 = tilted_moments(0.0, gamma)
    assert m0 == pytest.approx(1.0)
    assert m1 == 0.0


@pytest.mark.parametrize('gamma', [20.5, -21.0, np.inf, np.nan])
def test_tilted_moments_reject_large_gamma(gamma):
    with pytest.raises(ValueError, match='gamma'):
        tilted_moments(0.5, gamma)


def test_tilted_ratio_is_monotone():
    gammas = np.linspace(-20, 20, 81)
    ratios = np.array([tilted_ratio(0.3, g) for g in gammas])
    assert np.all(np.diff(ratios) >= 0)
    assert np.all((ratios >= 0) & (ratios <= 1))
    assert tilted_ratio(0.3, 0.0) == pytest.approx(0.3)


def test_one_step_estimate():
    samples = IfSamples(np.array([-1.0, 0.0, 1.0, 2.0]), TARGETS.PSI1, centered_at=0.5)
    estimate, variance = one_step_estimate(samples)
    assert estimate == pytest.approx(1.0)
    assert variance == pytest.approx(np.var([-1.0, 0.0, 1.0, 2.0], ddof=1) / 4)
    with pytest.raises(ValueError):
        one_step_estimate(IfSamples(np.array([1.0]), TARGETS.PSI1))


def test_median_aggregate():
    assert median_aggregate([1.0, 3.0, 2.0], [0.1, 0.3, 0.2]) == (2.0, 0.2)


def test_median_aggregate_ignores_fold_labels():
    estimates = np.array([0.31, 0.12, 0.55, 0.27, 0.40])
    variances = np.array([0.02, 0.05, 0.01, 0.03, 0.04])
    assert median_aggregate(estimates, variances) == (np.sort(estimates)[2], np.sort(variances)[2])
    rng = np.random.default_rng(0)
    for _ in range(5):
        order = rng.permutation(5)
        assert median_aggregate(estimates[order], variances[order]) == median_aggregate(estimates, variances)


class HandSetNuisances(NamedTuple):
    """Per-unit nuisance values, in the order of the evaluation units."""
    pi1: np.ndarray
    mu1: np.ndarray
    mu0: np.ndarray

    def treatment_probabilities(self, ds, t):
        return self.pi1 if t == 1 else 1.0 - self.pi1

    def outcome_means(self, ds, t):
        return self.mu1 if t == 1 else self.mu0

    def repeated(self, copies):
        return HandSetNuisances(*(np.tile(values, copies) for values in self))


def _units(treatment, outcome):
    n = len(treatment)
    return build_dataset(np.zeros((n, 1)), np.array(treatment), np.array(outcome, dtype=float))


def test_plugin_by_hand():
    nf = HandSetNuisances(pi1=np.array([0.2, 0.5, 0.8]), mu1=np.array([0.3, 0.6, 0.9]), mu0=np.zeros(3))
    ds = _units([1, 0, 1], [1, 0, 0])
    # mean of mu * pi + e mu / (e mu + 1 - mu) * (1 - pi)
    assert plugin_psi(nf, ds, 1, 1.0) == pytest.approx(0.701384001404, abs=1e-10)


@pytest.mark.parametrize('gamma', [-4.0, 0.0, 2.0, 15.0])
@pytest.mark.parametrize('level', [0.0, 1.0])
def test_plugin_of_a_certain_outcome(gamma, level):
    nf = HandSetNuisances(pi1=np.array([0.2, 0.5, 0.8]), mu1=np.full(3, level), mu0=np.full(3, level))
    ds = _units([1, 0, 1], [level] * 3)
    for t in (0, 1):
        assert plugin_psi(nf, ds, t, gamma) == pytest.approx(level, abs=1e-12)


def test_plugin_of_a_constant_mean_without_tilt():
    nf = HandSetNuisances(pi1=np.array([0.2, 0.5, 0.8]), mu1=np.full(3, 0.35), mu0=np.full(3, 0.6))
    ds = _units([1, 0, 1], [1, 0, 0])
    assert plugin_psi(nf, ds, 1, 0.0) == pytest.approx(0.35, abs=1e-12)
    assert plugin_psi(nf, ds, 0, 0.0) == pytest.approx(0.6, abs=1e-12)


@pytest.fixture
def four_units():
    nf = HandSetNuisances(pi1=np.array([0.5, 0.25, 0.6, 0.8]), mu1=np.array([0.5, 0.4, 0.2, 0.7]),
                          mu0=np.full(4, 0.5))
    return nf, _units([1, 1, 0, 0], [1, 0, 1, 0])


def test_eif_by_hand(four_units):
    nf, ds = four_units
    samples = eif_samples(nf, ds, 1, 1.0, 0.5)
    assert samples.target == TARGETS.PSI1
    assert samples.centered_at == 0.5
    assert np.allclose(samples.values, [0.893223866483, -1.645736004937, -0.095390324808, 0.363809528578],
                       rtol=0, atol=1e-10)


def test_eif_of_a_certain_outcome():
    nf = HandSetNuisances(pi1=np.array([0.3, 0.6, 0.9]), mu1=np.ones(3), mu0=np.ones(3))
    samples = eif_samples(nf, _units([1, 0, 1], [1, 1, 1]), 1, 1.5, 1.0)
    assert np.allclose(samples.values, 0.0, atol=1e-12)


def test_fold_estimate_by_hand(four_units):
    nf, ds = four_units
    estimate, variance, samples = fold_estimate(nf, ds, 1, 1.0)
    assert samples.centered_at == pytest.approx(plugin_psi(nf, ds, 1, 1.0))
    assert estimate == pytest.approx(0.378976766329, abs=1e-10)
    assert variance == pytest.approx(0.299097172367, abs=1e-10)


def test_fold_estimate_ignores_duplicated_units(four_units):
    nf, ds = four_units
    doubled = _units(np.tile(ds.treatment, 2), np.tile(ds.outcome, 2))
    estimate, _, _ = fold_estimate(nf, ds, 1, 1.0)
    doubled_estimate, _, _ = fold_estimate(nf.repeated(2), doubled, 1, 1.0)
    assert doubled_estimate == pytest.approx(estimate, abs=1e-12)


def test_fold_estimate_needs_two_units():
    nf = HandSetNuisances(pi1=np.array([0.5]), mu1=np.array([0.5]), mu0=np.array([0.5]))
    with pytest.raises(ValueError):
        fold_estimate(nf, _units([1], [1]), 1, 0.0)


@pytest.fixture
def split(discrete_observational, fast_nuisances):
    folds = assign_folds(discrete_observational, 3, 0)
    train, evaluation = folds.split(discrete_observational, 1)
    nf = fit_nuisances(train, fast_nuisances, SeedTree.from_seed(0, ('fold', 1)))
    return nf, train, evaluation


def test_propensity_scores_are_truncated(split):
    nf, _, evaluation = split
    scores = nf.propensity_scores(evaluation)
    lo, hi = nf.trunc
    assert np.all((scores >= lo) & (scores <= hi))


def test_fit_nuisances_requires_binary_outcome(discrete_continuous_outcome, fast_nuisances):
    with pytest.raises(DomainError, match='binary'):
        fit_nuisances(discrete_continuous_outcome, fast_nuisances)


def test_fit_nuisances_requires_both_arms(fast_nuisances):
    x = np.arange(20, dtype=float)
    ds = build_dataset(x, np.ones(20), np.arange(20) % 2)
    with pytest.raises(DomainError, match='no units'):
        fit_nuisances(ds, fast_nuisances)


@pytest.mark.parametrize('t', [0, 1])
def test_eif_without_tilt_is_aipw(split, t):
    nf, _, evaluation = split
    psi = plugin_psi(nf, evaluation, t, 0.0)
    eif = eif_samples(nf, evaluation, t, 0.0, psi)
    aipw = aipw_samples(nf, evaluation, t)
    assert np.allclose(eif.values + eif.centered_at, aipw.values + aipw.centered_at, rtol=0, atol=1e-10)
    assert one_step_estimate(eif)[0] == pytest.approx(one_step_estimate(aipw)[0], abs=1e-10)


def test_fold_estimate_is_centered_at_plugin(split):
    nf, _, evaluation = split
    estimate, variance, samples = fold_estimate(nf, evaluation, 1, 2.0)
    assert samples.centered_at == pytest.approx(plugin_psi(nf, evaluation, 1, 2.0))
    assert estimate == pytest.approx(samples.centered_at + samples.values.mean())
    assert variance > 0


def test_tilt_moves_estimates_monotonically(split):
    nf, _, evaluation = split
    plugins = [plugin_psi(nf, evaluation, 1, gamma) for gamma in (-4.0, -2.0, 0.0, 2.0, 4.0)]
    assert np.all(np.diff(plugins) > 0)


@pytest.mark.parametrize('gamma', [-4.0, 0.0, 2.0, 10.0 - 5e-5])
def test_plugin_is_continuous_in_gamma(split, gamma):
    nf, _, evaluation = split
    for t in (0, 1):
        step = abs(plugin_psi(nf, evaluation, t, gamma + 1e-4) - plugin_psi(nf, evaluation, t, gamma))
        assert step < 1e-4


def test_curve_reports_the_middle_fold(discrete_observational, fast_nuisances):
    curve = cross_fit_curve(discrete_observational, gammas=(1.0,), K=5, seed=3, cfg=fast_nuisances)
    for target in (TARGETS.PSI1, TARGETS.PSI0, TARGETS.CONTRAST):
        point = curve.point(1.0, target)
        assert point.estimate == np.sort([f.estimate for f in point.folds])[2]
        assert point.variance == np.sort([f.variance for f in point.folds])[2]


def test_contrast_of_samples():
    treated = IfSamples(np.array([1.0, 2.0]), TARGETS.PSI1, gamma=1.0, centered_at=0.7)
    control = IfSamples(np.array([0.5, 0.5]), TARGETS.PSI0, gamma=1.0, centered_at=0.2)
    out = contrast(treated, control)
    assert out.target == TARGETS.CONTRAST
    assert np.array_equal(out.values, [0.5, 1.5])
    assert out.centered_at == pytest.approx(0.5)


def test_curve_at_zero_equals_cross_fit_aipw(discrete_observational, fast_nuisances):
    curve = cross_fit_curve(discrete_observational, gammas=(0.0,), K=3, seed=4, cfg=fast_nuisances)
    aipw = cross_fit_aipw(discrete_observational, K=3, seed=4, cfg=fast_nuisances)
    assert curve.point(0.0).estimate == pytest.approx(aipw.estimate, abs=1e-10)
    fold_estimates = [f.estimate for f in curve.point(0.0).folds]
    assert np.allclose(fold_estimates, aipw.fold_estimates, rtol=0, atol=1e-10)


def test_curve_layout(discrete_observational, fast_nuisances):
    gammas = (-2.0, 0.0, 2.0)
    curve = cross_fit_curve(discrete_observational, gammas=gammas, K=3, seed=1, cfg=fast_nuisances)
    assert len(curve.points) == len(gammas) * 3
    assert curve.variants == [VARIANTS.NONPARAMETRIC]

    frame = curve.to_frame()
    assert list(frame.columns) == results.CURVE_COLUMNS
    assert list(frame['gamma']) == list(gammas)
    assert not frame['projected'].any()
    assert (frame['ci_lo'] <= frame['estimate']).all() and (frame['estimate'] <= frame['ci_hi']).all()

    arms = curve.arm_frame()
    assert list(arms.columns) == results.ARM_CURVE_COLUMNS
    assert len(arms) == len(gammas) * 2
    assert set(arms['target']) == {TARGETS.PSI1, TARGETS.PSI0}

    point = curve.point(2.0, TARGETS.PSI1)
    assert len(point.folds) == 3
    assert point.estimate == pytest.approx(np.median([f.estimate for f in point.folds]))
    assert set(curve.breakdown()) == {'lower', 'upper'}
    assert set(curve.to_dict()['breakdown']) == {VARIANTS.NONPARAMETRIC}


@pytest.fixture
def exact_projector():
    return AlternatingProjector(CondMeanEstimator(metadata.COND_MEAN_POLICIES.EXACT))


def test_projected_curve(discrete_observational, fast_nuisances, exact_projector):
    constraints = [CiConstraint('x1', 'x3'), CiConstraint('x2', 'x3')]
    plain = cross_fit_curve(discrete_observational, gammas=(-1.0, 1.0), K=3, seed=2, cfg=fast_nuisances)
    projected = cross_fit_curve(discrete_observational, gammas=(-1.0, 1.0), K=3, seed=2, cfg=fast_nuisances,
                                constraints=constraints, projector=exact_projector)
    assert projected.projected
    assert len(projected.points) == 2 * 3 * 2

    for p in plain.points:
        same = projected.point(p.gamma, p.target, VARIANTS.NONPARAMETRIC)
        assert same.estimate == p.estimate
        assert same.variance == p.variance

    detail = projected.point(1.0, TARGETS.PSI1, VARIANTS.PROJECTED).folds[0].projection
    assert detail['sweeps'] >= 1
    assert len(detail['delta_history']) == detail['sweeps']


def test_in_fold_projection(discrete_observational, fast_nuisances):
    projector = AlternatingProjector(CondMeanEstimator(metadata.COND_MEAN_POLICIES.EXACT),
                                     fit_sample=metadata.FIT_SAMPLES.IN_FOLD)
    curve = cross_fit_curve(discrete_observational, gammas=(0.0,), K=3, seed=2, cfg=fast_nuisances,
                            constraints=[CiConstraint('x1', 'x3')], projector=projector)
    point = curve.point(0.0, TARGETS.PSI0, VARIANTS.PROJECTED)
    unprojected = curve.point(0.0, TARGETS.PSI0, VARIANTS.NONPARAMETRIC)
    # in-sample single-constraint projections keep each fold mean
    for before, after in zip(unprojected.folds, point.folds):
        assert after.estimate == pytest.approx(before.estimate, abs=1e-12)
        assert after.projection['sweeps'] == 1


def test_curve_requires_projector_with_constraints(discrete_observational, fast_nuisances):
    with pytest.raises(ValueError, match='projector'):
        cross_fit_curve(discrete_observational, gammas=(0.0,), K=3, cfg=fast_nuisances,
                        constraints=[CiConstraint('x1', 'x3')])


def test_curve_rejects_non_binary_outcome(discrete_continuous_outcome, fast_nuisances):
    with pytest.raises(DomainError):
        cross_fit_curve(discrete_continuous_outcome, gammas=(0.0,), K=3, cfg=fast_nuisances)


def test_curve_does_not_depend_on_workers(discrete_observational, fast_nuisances):
    serial = cross_fit_curve(discrete_observational, gammas=(0.0, 1.0), K=3, seed=9, cfg=fast_nuisances)
    parallel = cross_fit_curve(discrete_observational, gammas=(0.0, 1.0), K=3, seed=9, cfg=fast_nuisances,
                               n_jobs=2)
    assert serial.to_frame().equals(parallel.to_frame())
    assert serial.arm_frame().equals(parallel.arm_frame())
