import itertools

import numpy as np
import pytest

from sensitivity_projection.constants import metadata
from sensitivity_projection.data import build_dataset
from sensitivity_projection.estimation import (
    AlternatingProjector,
    CondMeanEstimator,
    ConstraintColumns,
    IfSamples,
    PolicyError,
    alternating_project,
    fit_joint_cond_mean,
    marginalize_cond_mean,
    project_single,
    variance_gain,
)
from sensitivity_projection.graphs import CiConstraint, local_markov_constraints, parse_constraints, parse_dag
from sensitivity_projection.learners import CandidateSpec, LearnerConfig

POLICIES = metadata.COND_MEAN_POLICIES

EXAMPLE1_GRAPH = """
x2 -> x3
x1 -> x4; x2 -> x4
x1 -> t; x2 -> t; x3 -> t; x4 -> t
t -> y; x1 -> y; x2 -> y; x3 -> y; x4 -> y
"""


@pytest.fixture
def independent_binary():
    """x1 ~ Bernoulli(1/4) and x2 ~ Bernoulli(1/2), independent in the sample."""
    cells = {(0, 0): 30, (0, 1): 30, (1, 0): 10, (1, 1): 10}
    rows = [cell for cell, count in cells.items() for _ in range(count)]
    covariates = np.array(rows, dtype=float)
    n = covariates.shape[0]
    return build_dataset(covariates, np.arange(n) % 2, np.zeros(n), covariate_names=('x1', 'x2'))


def _centered_product(ds):
    product = ds.covariates[:, 0] * ds.covariates[:, 1]
    return IfSamples(product - product.mean(), metadata.TARGETS.PSI1)


def test_project_single_matches_cell_enumeration(independent_binary):
    ds = independent_binary
    phi = _centered_product(ds)
    est = CondMeanEstimator(POLICIES.EXACT)
    projected = project_single(phi, ds, CiConstraint('x1', 'x2'), est)

    x1, x2 = ds.covariates[:, 0], ds.covariates[:, 1]
    expected = np.empty(ds.n)
    overall = phi.values.mean()
    for a in (0, 1):
        for b in (0, 1):
            cell = (x1 == a) & (x2 == b)
            mean_a = phi.values[x1 == a].mean()
            mean_b = phi.values[x2 == b].mean()
            cell_mean = phi.values[cell].mean()
            expected[cell] = phi.values[cell] - cell_mean + mean_a + mean_b - overall
    assert np.allclose(projected.values, expected, rtol=0, atol=1e-10)


def test_project_single_preserves_sample_mean(independent_binary):
    ds = independent_binary
    phi = _centered_product(ds)
    projected = project_single(phi, ds, CiConstraint('x1', 'x2'), CondMeanEstimator(POLICIES.EXACT))
    assert abs(projected.values.mean() - phi.values.mean()) <= 1e-12


def test_variance_gain_matches_decomposition(independent_binary):
    ds = independent_binary
    phi = _centered_product(ds)
    est = CondMeanEstimator(POLICIES.EXACT)
    constraint = CiConstraint('x1', 'x2')
    projected = project_single(phi, ds, constraint, est)

    gain = variance_gain(phi, projected, ds, constraint, est)
    assert gain.difference > 0
    assert abs(gain.difference - gain.decomposition.value) <= 1e-12
    assert gain.constraint == 'x1 _||_ x2'


def test_projection_is_idempotent(factorized):
    rng = np.random.default_rng(3)
    phi = IfSamples(rng.standard_normal(factorized.n), metadata.TARGETS.PSI0)
    est = CondMeanEstimator(POLICIES.EXACT)
    constraint = CiConstraint('x3', 'x4', ('x1', 'x2'))
    once = project_single(phi, factorized, constraint, est)
    twice = project_single(once, factorized, constraint, est)
    assert np.allclose(once.values, twice.values, rtol=0, atol=1e-12)


def test_tangent_direction_is_unchanged(independent_binary):
    ds = independent_binary
    x1 = ds.covariates[:, 0]
    phi = IfSamples(x1 - x1.mean(), metadata.TARGETS.PSI1)
    projected = project_single(phi, ds, CiConstraint('x1', 'x2'), CondMeanEstimator(POLICIES.EXACT))
    assert np.allclose(projected.values, phi.values, rtol=0, atol=1e-12)


def test_marginalize_exact_reductions(factorized):
    rng = np.random.default_rng(4)
    phi = IfSamples(rng.standard_normal(factorized.n), metadata.TARGETS.PSI1)
    est = CondMeanEstimator(POLICIES.EXACT)
    joint = fit_joint_cond_mean(phi, factorized, CiConstraint('x1', 'x3', ('x2',)), est)

    x2 = factorized.covariates[:, 1]
    by_s = marginalize_cond_mean(joint, factorized, 'S', est)
    for level in (0, 1):
        assert np.allclose(by_s[x2 == level], phi.values[x2 == level].mean())
    with pytest.raises(ValueError, match='keep'):
        marginalize_cond_mean(joint, factorized, 'x', est)


def test_exact_policy_rejects_continuous_covariates():
    rng = np.random.default_rng(5)
    ds = build_dataset(rng.standard_normal((50, 2)), np.arange(50) % 2, np.zeros(50))
    phi = IfSamples(rng.standard_normal(50), metadata.TARGETS.PSI1)
    with pytest.raises(PolicyError, match='distinct values'):
        project_single(phi, ds, ConstraintColumns(0, 1), CondMeanEstimator(POLICIES.EXACT))


def test_unknown_policy():
    with pytest.raises(PolicyError):
        CondMeanEstimator('kernel')


def test_local_markov_basis_needs_one_sweep(factorized):
    g = parse_dag(EXAMPLE1_GRAPH)
    constraints = local_markov_constraints(g, ['x1', 'x2', 'x3', 'x4'])
    assert [str(c) for c in constraints] == ['x1 _||_ x2', 'x1 _||_ x3 | x2', 'x3 _||_ x4 | x1, x2']

    rng = np.random.default_rng(6)
    phi = IfSamples(rng.standard_normal(factorized.n), metadata.TARGETS.PSI1)
    result = alternating_project(phi, factorized, constraints, CondMeanEstimator(POLICIES.EXACT),
                                 eps=1e-20, max_sweeps=2)
    assert result.sweeps == 2
    assert result.delta_history[0] > 1e-3
    assert result.delta_history[1] <= 1e-12


def test_sweep_changes_do_not_increase(factorized):
    constraints = parse_constraints('x1 _||_ x2\nx1 _||_ x3\nx3 _||_ x4 | x2\n')
    rng = np.random.default_rng(7)
    phi = IfSamples(rng.standard_normal(factorized.n), metadata.TARGETS.PSI1)
    result = alternating_project(phi, factorized, constraints, CondMeanEstimator(POLICIES.EXACT),
                                 eps=1e-14, max_sweeps=10)
    history = result.delta_history
    assert all(later <= earlier * (1 + 1e-9) + 1e-15 for earlier, later in zip(history, history[1:]))
    assert result.var_after <= result.var_before
    if result.converged:
        assert history[-1] <= 1e-14


def test_single_constraint_records_variance_gain(independent_binary):
    phi = _centered_product(independent_binary)
    result = alternating_project(phi, independent_binary, [CiConstraint('x1', 'x2')],
                                 CondMeanEstimator(POLICIES.EXACT))
    assert result.sweeps == 1
    assert result.converged
    assert result.variance_gain['difference'] == pytest.approx(result.var_before - result.var_after)
    assert abs(result.mean_drift) <= 1e-12


@pytest.mark.parametrize('eps, max_sweeps, constraints', [
    (0.0, 5, [CiConstraint('x1', 'x2')]),
    (1e-4, 0, [CiConstraint('x1', 'x2')]),
    (1e-4, 5, []),
])
def test_alternating_project_validates_inputs(independent_binary, eps, max_sweeps, constraints):
    phi = _centered_product(independent_binary)
    with pytest.raises(ValueError):
        alternating_project(phi, independent_binary, constraints, CondMeanEstimator(POLICIES.EXACT),
                            eps=eps, max_sweeps=max_sweeps)


def test_projector_applies_fit_to_held_out_units(factorized):
    rng = np.random.default_rng(8)
    fit_phi = IfSamples(rng.standard_normal(factorized.n), metadata.TARGETS.PSI1)
    eval_ds = factorized.subset(np.arange(0, factorized.n, 3))
    eval_phi = IfSamples(rng.standard_normal(eval_ds.n), metadata.TARGETS.PSI1)

    projector = AlternatingProjector(CondMeanEstimator(POLICIES.EXACT))
    result = projector.project(eval_phi, eval_ds, [CiConstraint('x1', 'x2')], seed=1,
                               fit=(fit_phi, factorized))
    assert result.held_out is not None
    assert result.evaluated.n == eval_ds.n
    assert result.projected.n == factorized.n


@pytest.fixture
def continuous():
    rng = np.random.default_rng(9)
    n = 120
    x = rng.standard_normal((n, 3))
    phi = IfSamples(x[:, 0] * x[:, 1] + 0.1 * rng.standard_normal(n), metadata.TARGETS.PSI1)
    return build_dataset(x, np.arange(n) % 2, np.zeros(n)), phi


@pytest.fixture
def ensemble_estimator():
    learner = LearnerConfig(candidates=(CandidateSpec(metadata.LEARNER_KINDS.LINEAR),
                                        CandidateSpec(metadata.LEARNER_KINDS.SMOOTHER, k=10)),
                            cv_folds=2)
    return CondMeanEstimator(POLICIES.ENSEMBLE, learner=learner, seed=2, reference_size=30)


@pytest.mark.parametrize('constraint', [ConstraintColumns(0, 1), ConstraintColumns(0, 1, (2,))])
def test_ensemble_projection_is_finite(continuous, ensemble_estimator, constraint):
    ds, phi = continuous
    projected = project_single(phi, ds, constraint, ensemble_estimator)
    assert projected.n == ds.n
    assert np.all(np.isfinite(projected.values))


def test_ensemble_joint_model_is_cached(continuous, ensemble_estimator):
    ds, phi = continuous
    first = ensemble_estimator.fit(phi.values, ds, ConstraintColumns(0, 1))
    second = ensemble_estimator.fit(phi.values, ds, ConstraintColumns(0, 1))
    assert first is second
    assert first.reference.shape[0] == 30


def test_ensemble_marginal_without_conditioning_is_constant(continuous, ensemble_estimator):
    ds, phi = continuous
    joint = ensemble_estimator.fit(phi.values, ds, ConstraintColumns(0, 1))
    by_s = marginalize_cond_mean(joint, ds, 'S', ensemble_estimator)
    assert np.allclose(by_s, by_s[0])


def test_reseeded_estimator_is_deterministic(continuous, ensemble_estimator):
    ds, phi = continuous
    a = project_single(phi, ds, ConstraintColumns(0, 1, (2,)), ensemble_estimator.reseeded(5))
    b = project_single(phi, ds, ConstraintColumns(0, 1, (2,)), ensemble_estimator.reseeded(5))
    assert np.array_equal(a.values, b.values)


def test_projectors_do_not_share_an_estimator():
    first, second = AlternatingProjector(), AlternatingProjector()
    assert first.estimator is not second.estimator
    assert first.estimator.policy == POLICIES.EXACT


def latent_pair_design(copies: int = 1):
    """Binary x1..x4 where x2 and x4 share a binary latent cause.

    x1, x3 and the latent are fair coins, x2 depends on x1 and the latent and
    x4 on x3 and the latent. Cell counts are the exact law with the latent
    summed out, so x1 _||_ x3, x1 _||_ x4 | x3 and x2 _||_ x3 | x1 hold in the
    sample while x2 and x4 stay dependent.

    """
    p2 = {(0, 0): 1, (0, 1): 3, (1, 0): 2, (1, 1): 3}  # P(x2 = 1 | x1, u) in quarters
    p4 = {(0, 0): 1, (0, 1): 3, (1, 0): 2, (1, 1): 3}  # P(x4 = 1 | x3, u) in quarters
    rows = []
    for x1, x2, x3, x4 in itertools.product((0, 1), repeat=4):
        count = 0
        for u in (0, 1):
            a = p2[(x1, u)] if x2 else 4 - p2[(x1, u)]
            b = p4[(x3, u)] if x4 else 4 - p4[(x3, u)]
            count += a * b
        rows.extend([(x1, x2, x3, x4)] * (count * copies))
    covariates = np.array(rows, dtype=float)
    n = covariates.shape[0]
    return build_dataset(covariates, np.arange(n) % 2, np.zeros(n), covariate_names=('x1', 'x2', 'x3', 'x4'))


EXAMPLE2_CONSTRAINTS = 'x1 _||_ x3\nx1 _||_ x4 | x3\nx2 _||_ x3 | x1\n'


@pytest.fixture
def latent_pair():
    return latent_pair_design(copies=2)


@pytest.fixture
def noise(latent_pair):
    rng = np.random.default_rng(10)
    return IfSamples(rng.standard_normal(latent_pair.n), metadata.TARGETS.PSI1)


def test_constant_projects_to_itself(latent_pair):
    phi = IfSamples(np.full(latent_pair.n, 2.5), metadata.TARGETS.PSI1)
    result = alternating_project(phi, latent_pair, parse_constraints(EXAMPLE2_CONSTRAINTS),
                                 CondMeanEstimator(POLICIES.EXACT))
    assert np.allclose(result.projected.values, 2.5, rtol=0, atol=1e-12)
    assert result.converged
    assert result.delta_history[0] <= 1e-20


def test_function_of_an_unconstrained_covariate_is_unchanged():
    # x3 is independent of (x1, x2) and outside the constraint
    cells = list(itertools.product((0, 1), (0, 1), (0, 1, 2)))
    ds = build_dataset(np.array(cells * 4, dtype=float), np.arange(48) % 2, np.zeros(48),
                       covariate_names=('x1', 'x2', 'x3'))
    x3 = ds.covariates[:, 2]
    phi = IfSamples(x3 ** 2 - 1.0, metadata.TARGETS.PSI0)
    projected = project_single(phi, ds, CiConstraint('x1', 'x2'), CondMeanEstimator(POLICIES.EXACT))
    assert np.allclose(projected.values, phi.values, rtol=0, atol=1e-12)
    assert projected.values.mean() == pytest.approx(phi.values.mean(), abs=1e-12)


def test_submodel_function_is_a_fixed_point(latent_pair, noise):
    constraints = parse_constraints(EXAMPLE2_CONSTRAINTS)
    est = CondMeanEstimator(POLICIES.EXACT)
    settled = alternating_project(noise, latent_pair, constraints, est, eps=1e-20, max_sweeps=1000)
    assert settled.converged

    again = alternating_project(settled.projected, latent_pair, constraints, est, eps=1e-12, max_sweeps=1)
    assert again.delta_history[0] <= 1e-12
    assert np.allclose(again.projected.values, settled.projected.values, rtol=0, atol=1e-5)


def test_variance_does_not_rise_across_steps(latent_pair, noise):
    est = CondMeanEstimator(POLICIES.EXACT)
    phi = noise
    variances = [np.var(phi.values)]
    for _ in range(3):
        for constraint in parse_constraints(EXAMPLE2_CONSTRAINTS):
            phi = project_single(phi, latent_pair, constraint, est)
            variances.append(np.var(phi.values))
    assert all(later <= earlier + 1e-12 for earlier, later in zip(variances, variances[1:]))
    assert variances[-1] < variances[0]


def test_overlapping_constraints_need_several_sweeps(latent_pair, noise):
    result = alternating_project(noise, latent_pair, parse_constraints(EXAMPLE2_CONSTRAINTS),
                                 CondMeanEstimator(POLICIES.EXACT), eps=1e-30, max_sweeps=3)
    history = result.delta_history
    assert result.sweeps == 3
    assert not result.converged
    assert history[0] > history[1] > history[2] > 0
