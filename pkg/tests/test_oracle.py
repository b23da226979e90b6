import math

import numpy as np
import pytest

from smcvar import oracle
from smcvar.acceptance import random_dhmm
from smcvar.engine import run_filter
from smcvar.errors import AmbiguousScheduleError, EnumerationBudgetError, InvalidConfigurationError, OracleError
from smcvar.experiment import derive_seed, two_state_hmm
from smcvar.resampling import Always


def single_stage():
    return oracle.DiscreteHMM([0.5, 0.5], np.zeros((0, 2, 2)), [[0.9, 0.2]])


def instances():
    yield two_state_hmm((0, 1, 1))
    yield random_dhmm(3, 4, 1)
    yield random_dhmm(2, 5, 2)


def test_single_stage_posterior():
    psi_t, eta = oracle.exact_posterior(single_stage())
    assert psi_t == pytest.approx(2 / 11, abs=1e-15)
    assert eta.tolist() == pytest.approx([0.55])


def test_uniform_emission_gives_prior():
    dhmm = oracle.DiscreteHMM([0.3, 0.7], [[0.7, 0.3], [0.4, 0.6]], np.full((2, 2), 0.5))
    prior_mean = 0.3 * 0.3 + 0.7 * 0.6
    assert dhmm.psi_T == pytest.approx(prior_mean, abs=1e-14)


def test_zero_probability_observations():
    with pytest.raises(OracleError):
        oracle.DiscreteHMM([1.0, 0.0], np.eye(2)[None], [[0.0, 1.0], [1.0, 1.0]])


def test_table_validation():
    with pytest.raises(InvalidConfigurationError):
        oracle.DiscreteHMM([0.6, 0.6], np.eye(2)[None], np.ones((2, 2)))
    with pytest.raises(InvalidConfigurationError):
        oracle.DiscreteHMM([0.5, 0.5], [[0.5, 0.5], [0.5, 0.5]], np.ones((2, 2)),
                           proposal=[[1.0, 0.0], [0.5, 0.5]])
    with pytest.raises(InvalidConfigurationError):
        oracle.DiscreteHMM(np.ones(7) / 7, np.eye(7)[None], np.ones((2, 7)))


@pytest.mark.parametrize("dhmm", list(instances()))
def test_eta_two_ways(dhmm):
    assert np.allclose(oracle.eta_direct(dhmm), oracle.exact_posterior(dhmm)[1], rtol=1e-12, atol=0)


@pytest.mark.parametrize("dhmm", list(instances()))
def test_f_invariants(dhmm):
    fs, fts = dhmm.f(), dhmm.f_tilde()
    # conditional expectation of the likelihood ratio given each prefix
    lr = dhmm._backward(dhmm.likelihood_ratio())
    assert float(fs[0]) == 0.0
    assert float(fts[0]) - dhmm.psi_T == 0.0
    for t in range(1, dhmm.horizon + 1):
        assert abs(dhmm.expect(t, fs[t])) <= 1e-12
        assert np.allclose(fts[t] - dhmm.psi_T * lr[t], fs[t], atol=1e-12, rtol=0)
    for t in range(1, dhmm.horizon):
        q = dhmm.proposal[t - 1]
        tower = np.einsum("...ij,ij->...i", fs[t + 1], q)
        assert np.allclose(tower, fs[t], atol=1e-12, rtol=0)
    assert float(fts[0]) == pytest.approx(dhmm.psi_T, abs=1e-15)


@pytest.mark.parametrize("dhmm", list(instances()))
def test_h_star_times_weights_is_eta(dhmm):
    for t in range(1, dhmm.horizon + 1):
        prod = dhmm.h_star(t) * dhmm.wprod[t]
        assert np.allclose(prod, dhmm.eta[t], rtol=1e-12)


@pytest.mark.parametrize("dhmm", list(instances()))
def test_gamma_moment_finite(dhmm):
    gam = np.ones(())
    for t, w in enumerate(dhmm.weights, start=1):
        gam = dhmm._extend(gam, w + w**2, t)
    assert np.all(gam >= dhmm.wprod[dhmm.horizon])
    assert math.isfinite(dhmm.expect(dhmm.horizon, gam))


def test_constant_functional_has_zero_variance(chain3):
    const = oracle.DiscreteHMM(chain3.initial, chain3.transition, chain3.emission,
                               chain3.proposal_initial, chain3.proposal, psi=np.full((2, 2, 2), 4.0))
    for t in range(1, 4):
        assert np.allclose(const.f()[t], 0.0, atol=1e-14)
    assert oracle.exact_sigma2(const) == pytest.approx(0.0, abs=1e-14)


def test_sigma2_terms_nonnegative_and_residual_smaller(chain3):
    boot = oracle.sigma2_terms(chain3)
    resid = oracle.sigma2_terms(chain3, scheme="residual")
    assert len(boot) == 2 * chain3.horizon - 1
    assert all(b >= -1e-15 for b in boot)
    # odd terms coincide; even terms shrink because gamma <= 1
    for k in range(0, len(boot), 2):
        assert resid[k] == pytest.approx(boot[k], rel=1e-12)
    for k in range(1, len(boot), 2):
        assert resid[k] <= boot[k] + 1e-15
    assert oracle.exact_sigma2(chain3, scheme="residual") <= oracle.exact_sigma2(chain3)


def test_no_resampling_variance_is_importance_sampling_variance(chain3):
    # with no resampling the limit is E_q[(psi - psi_T)^2 L_T^2]
    L = chain3.likelihood_ratio()
    direct = chain3.expect(3, (chain3.psi - chain3.psi_T) ** 2 * L**2)
    assert oracle.exact_sigma2(chain3, schedule=()) == pytest.approx(direct, rel=1e-12)


def test_tau_star_examples(chain3):
    assert oracle.exact_tau_star(chain3, 0.0) == (1, 2)
    assert oracle.exact_tau_star(chain3, 1e6) == ()
    c = oracle.limiting_cv2(chain3, 0, 1)
    with pytest.raises(AmbiguousScheduleError):
        oracle.exact_tau_star(chain3, c)


def test_tau_star_constant_weights_never_resample():
    dhmm = oracle.DiscreteHMM([0.5, 0.5], [[0.5, 0.5], [0.5, 0.5]], np.full((2, 2), 0.3))
    assert oracle.exact_tau_star(dhmm, 0.0 + 1e-6) == ()


def test_schedule_validation(chain3):
    with pytest.raises(InvalidConfigurationError):
        oracle.exact_sigma2(chain3, schedule=(3,))


def test_exhaustive_single_particle_single_stage():
    chk = oracle.exhaustive_prototype_check(single_stage(), 1)
    assert chk.mean_prototype == pytest.approx(2 / 11, abs=1e-15)
    assert chk.total_probability == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("m", [2, 3])
def test_exhaustive_prototype_unbiased(m):
    dhmm = two_state_hmm((0, 1))
    chk = oracle.exhaustive_prototype_check(dhmm, m)
    assert abs(chk.mean_prototype - chk.psi_T) <= 1e-12
    assert chk.bias_filter != 0.0


def test_exhaustive_variance_approaches_prototype_limit():
    dhmm = two_state_hmm((0, 1))
    limit = oracle.sigma2_prototype(dhmm)
    scaled = [m * oracle.exhaustive_prototype_check(dhmm, m).var_prototype for m in (1, 2, 3)]
    assert scaled[0] < scaled[1] < scaled[2] < limit
    assert limit - scaled[2] < limit - scaled[1]


def test_exhaustive_budget_refusal():
    with pytest.raises(EnumerationBudgetError):
        oracle.exhaustive_prototype_check(two_state_hmm((0, 1, 1)), 3, budget=1000)


def test_prototype_estimate_is_unbiased_in_simulation(chain3):
    log_eta = math.log(chain3.eta[-1])
    model = chain3.to_model()
    vals = []
    for s in range(400):
        out = run_filter(model, 20, Always(), seed=s)
        vals.append(oracle.prototype_estimate(out.population, out.psi, log_eta))
    se = np.std(vals, ddof=1) / math.sqrt(len(vals))
    assert abs(np.mean(vals) - chain3.psi_T) <= 4 * se


def test_changepoint_recursion_matches_enumeration():
    rng = np.random.default_rng(0)
    for rho, xi in [(0.01, 1.0), (0.2, 2.0), (0.5, 0.3)]:
        y = rng.normal(size=12) * 1.5
        means = oracle.changepoint_exact_mean(y, rho, xi)
        for t in (1, 2, 5, 12):
            enum = oracle.changepoint_enumerated_mean(y[:t], rho, xi)
            assert means[t - 1] == pytest.approx(enum, abs=1e-10)


def test_changepoint_enumeration_budget():
    with pytest.raises(EnumerationBudgetError):
        oracle.changepoint_enumerated_mean(np.zeros(13), 0.1, 1.0)


def test_changepoint_small_rho_limit():
    y = np.array([0.4, -0.3, 1.2, 0.8, 0.1])
    xi = 2.0
    means = oracle.changepoint_exact_mean(y, 1e-14, xi)
    for t in range(1, 6):
        assert means[t - 1] == pytest.approx(y[:t].sum() / (t + 1 / xi), abs=1e-10)


@pytest.mark.slow
def test_sigma2_matches_monte_carlo_two_stage():
    dhmm = two_state_hmm((0, 1))
    sigma2 = oracle.exact_sigma2(dhmm)
    model = dhmm.to_model()
    m = 10_000
    errs = [run_filter(model, m, Always(), seed=derive_seed(77, r), gilks_berzuini=False,
                       keep_population=False).estimate - dhmm.psi_T for r in range(2000)]
    assert abs(m * np.var(errs, ddof=1) / sigma2 - 1) <= 0.10
