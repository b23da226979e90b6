import json
import math

import numpy as np
import pytest

from smcvar import oracle
from smcvar.engine import (ancestor_labels, init, normalized_weights, propagate, resample,
                           run_filter, weight_identity_residual)
from smcvar.errors import DegenerateWeightsError, InvalidConfigurationError, PopulationExtinctionError
from smcvar.model import ModelSpec
from smcvar.resampling import Always, CvThreshold, Never, Scheme


class ConstantWeights(ModelSpec):
    """Gaussian random walk whose incremental weight is a constant (or zero)."""

    def __init__(self, horizon=3, log_kappa=0.0):
        self.horizon = horizon
        self.log_kappa = log_kappa

    def initial_state(self, n):
        return np.zeros(n)

    def propose(self, t, state, rng):
        return state + rng.standard_normal(state.shape[0])

    def log_incremental_weight(self, t, state, new_state):
        return np.full(state.shape[0], self.log_kappa)

    def functional(self, state):
        return state


def test_init():
    pop = init(ConstantWeights(), 3)
    assert pop.origins.tolist() == [0, 1, 2]
    assert pop.stage == 0 and pop.size == 3
    assert np.all(pop.log_v == 0) and pop.resample_times == []
    assert init(ConstantWeights(), 1).origins.tolist() == [0]
    with pytest.raises(InvalidConfigurationError):
        init(ConstantWeights(), 0)


def test_propagate_constant_weight(rng):
    pop = init(ConstantWeights(log_kappa=math.log(3.0)), 5)
    propagate(ConstantWeights(log_kappa=math.log(3.0)), pop, rng)
    assert np.allclose(pop.log_v, math.log(3.0))
    assert np.allclose(normalized_weights(pop), 0.2)
    assert pop.log_wbar_prefix[0] == pytest.approx(math.log(3.0))
    assert pop.origins.tolist() == list(range(5))


def test_propagate_all_zero_weights(rng):
    model = ConstantWeights(log_kappa=-np.inf)
    pop = init(model, 4)
    with pytest.raises(DegenerateWeightsError) as info:
        propagate(model, pop, rng)
    assert info.value.stage == 1


def test_run_filter_annotates_degenerate_error():
    model = ConstantWeights(log_kappa=-np.inf)
    with pytest.raises(DegenerateWeightsError) as info:
        run_filter(model, 4, seed=0)
    assert info.value.cv2_trace == []


def test_propagate_past_horizon(rng):
    model = ConstantWeights(horizon=1)
    pop = init(model, 2)
    propagate(model, pop, rng)
    with pytest.raises(InvalidConfigurationError):
        propagate(model, pop, rng)


def test_resample_identity_and_duplication(rng):
    model = ConstantWeights()
    pop = init(model, 3)
    propagate(model, pop, rng)
    states = pop.states.copy()
    resample(model, pop, [1, 1, 1])
    assert np.array_equal(pop.states, states)
    assert pop.origins.tolist() == [0, 1, 2]
    assert pop.resample_times == [1] and pop.parents[1].tolist() == [0, 1, 2]

    pop = init(model, 2)
    propagate(model, pop, rng)
    pop.log_v = np.array([0.3, -1.0])
    resample(model, pop, [2, 0])
    assert pop.origins.tolist() == [0, 0]
    assert np.all(pop.log_v == 0)
    assert pop.last_resample[0] == 1


def test_resample_extinction(rng):
    model = ConstantWeights()
    pop = init(model, 2)
    propagate(model, pop, rng)
    with pytest.raises(PopulationExtinctionError):
        resample(model, pop, [0, 0])


def test_ancestor_labels_examples(rng):
    model = ConstantWeights(horizon=3)
    pop = init(model, 3)
    propagate(model, pop, rng)
    propagate(model, pop, rng)
    assert ancestor_labels(pop, 1).tolist() == [0, 1, 2]
    pop.parents[2] = np.array([1, 1, 0])
    pop.resample_times.append(2)
    assert ancestor_labels(pop, 2).tolist() == [1, 1, 0]
    assert ancestor_labels(pop, 1).tolist() == [1, 1, 0]


def test_genealogy_consistency(chain3):
    out = run_filter(chain3.to_model(), 50, Always(), seed=3)
    pop = out.population
    assert np.array_equal(ancestor_labels(pop, 1), pop.origins)
    for s in range(2, pop.stage + 1):
        upper = ancestor_labels(pop, s)
        lower = ancestor_labels(pop, s - 1)
        mapped = pop.parents[s - 1][upper] if (s - 1) in pop.parents else upper
        assert np.array_equal(lower, mapped)


def test_normalized_weights_sum_to_one(chain3):
    sums = []
    run_filter(chain3.to_model(), 300, CvThreshold(0.2), Scheme.RESIDUAL, seed=1,
               on_stage=lambda pop: sums.append(normalized_weights(pop).sum()))
    assert np.allclose(sums, 1.0, atol=1e-12, rtol=0)


def test_never_matches_reference_importance_sampler(chain3):
    model = chain3.to_model()
    out = run_filter(model, 400, Never(), seed=11)
    # independent one-pass reference consuming the same draws
    rng = np.random.default_rng(11)
    state = model.initial_state(400)
    lw = np.zeros(400)
    for t in range(1, model.horizon + 1):
        new = model.propose(t, state, rng)
        lw += model.log_incremental_weight(t, state, new)
        state = new
    w = np.exp(lw - lw.max())
    ref = float(np.sum(w * model.functional(state)) / w.sum())
    assert out.estimate == pytest.approx(ref, rel=1e-12)
    assert out.diagnostics.resample_times == ()


def test_huge_threshold_equals_never(chain3):
    model = chain3.to_model()
    a = run_filter(model, 200, Never(), seed=5).as_record()
    b = run_filter(model, 200, CvThreshold(1e9), seed=5).as_record()
    assert a == b


def test_seed_determinism(chain3):
    model = chain3.to_model()
    a = run_filter(model, 300, CvThreshold(0.5), Scheme.RESIDUAL, seed=9, k=2).as_record()
    b = run_filter(model, 300, CvThreshold(0.5), Scheme.RESIDUAL, seed=9, k=2).as_record()
    assert json.dumps(a) == json.dumps(b)


def test_single_particle_has_no_variance(chain3):
    out = run_filter(chain3.to_model(), 1, seed=0)
    assert out.var_ancestral is None and out.se_ancestral is None


def test_bootstrap_size_constant_residual_size_varies(chain3):
    model = chain3.to_model()
    boot = run_filter(model, 101, Always(), Scheme.MULTINOMIAL, seed=2)
    assert set(boot.diagnostics.sizes) == {101}
    sizes = set()
    for s in range(10):
        sizes |= set(run_filter(model, 101, Always(), Scheme.RESIDUAL, seed=s).diagnostics.sizes)
    assert len(sizes) > 1


def test_weight_identity_every_stage(chain3):
    worst = []
    run_filter(chain3.to_model(), 200, Always(), seed=4,
               on_stage=lambda pop: worst.append(np.max(np.abs(weight_identity_residual(pop)))))
    assert max(worst) <= 1e-12


def test_two_form_estimator_identity(chain3):
    model = chain3.to_model()
    log_eta = math.log(chain3.eta[-1])
    for seed in range(5):
        out = run_filter(model, 100, Always(), seed=seed)
        proto = oracle.prototype_estimate(out.population, out.psi - chain3.psi_T, log_eta)
        rhs = math.exp(log_eta - out.population.log_wbar_prefix[0]) * proto
        assert out.estimate - chain3.psi_T == pytest.approx(rhs, rel=1e-10)


def test_groups_never_mix(chain3):
    out = run_filter(chain3.to_model(), 60, Always(), seed=1, k=3)
    pop = out.population
    for g, s in enumerate(pop.group_slices()):
        assert np.all(pop.origins[s] // 20 == g)


def test_running_mean_weight_product_tracks_eta(chain3):
    m = 100_000
    out = run_filter(chain3.to_model(), m, Always(), seed=21, gilks_berzuini=False)
    ratio = math.exp(out.population.log_wbar_prefix[0]) / chain3.eta[-1]
    ones = oracle.DiscreteHMM(chain3.initial, chain3.transition, chain3.emission,
                              chain3.proposal_initial, chain3.proposal, psi=np.ones((2, 2, 2)))
    se = math.sqrt(oracle.sigma2_prototype(ones) / m)
    assert abs(ratio - 1) <= 3 * se
