"""Pseudo-marginal Metropolis-Hastings machinery."""

import math

import numpy as np
import pytest

from bridgepf.pmmh import (
    ChainState,
    GammaPrior,
    LogTransform,
    NormalPrior,
    ProposalSpec,
    UniformPrior,
    log_prior,
    pilot_proposal,
    pmmh_step,
    propose,
    run_pmmh,
)


class TestPriors:
    def test_uniform_inside_and_outside(self):
        priors = [UniformPrior(-1.0, 1.0)]
        assert log_prior([0.0], priors) == pytest.approx(math.log(0.5))
        assert log_prior([-1.2], priors) == -math.inf
        assert log_prior([1.2], priors) == -math.inf

    def test_unit_interval_support_violation(self):
        assert log_prior([-0.1], [UniformPrior(0.0, 1.0)]) == -math.inf

    def test_gamma_shape_two_algebra(self):
        # Gamma(2, 1): log x - x, the lgamma(2) constant being zero
        for x in (0.3, 1.0, 4.2):
            assert GammaPrior(2.0, 1.0).logpdf(x) == pytest.approx(
                math.log(x) - x, abs=1e-12)
        assert GammaPrior(2.0, 1.0).logpdf(0.0) == -math.inf

    def test_normal_prior(self):
        got = NormalPrior(1.0, 4.0).logpdf(3.0)
        assert got == pytest.approx(-0.5 * (math.log(8 * math.pi) + 1.0), abs=1e-12)

    def test_components_sum(self):
        priors = [UniformPrior(-1, 1), NormalPrior(0.0, 1.0)]
        assert log_prior([0.0, 0.5], priors) == pytest.approx(
            math.log(0.5) + NormalPrior(0.0, 1.0).logpdf(0.5))


class TestProposal:
    def test_zero_covariance_stays_put(self):
        spec = ProposalSpec(cov=np.zeros((2, 2)))
        theta = np.array([1.0, -2.0])
        assert np.array_equal(propose(theta, spec, np.random.default_rng(0)), theta)

    def test_root_factorizes_covariance(self):
        cov = np.array([[0.04, 0.01], [0.01, 0.09]])
        spec = ProposalSpec(cov=cov)
        assert np.allclose(spec._root @ spec._root.T, cov)

    def test_empirical_covariance_matches(self):
        cov = np.array([[0.25, -0.1], [-0.1, 0.5]])
        spec = ProposalSpec(cov=cov)
        rng = np.random.default_rng(1)
        draws = np.array([propose(np.zeros(2), spec, rng) for _ in range(20_000)])
        emp = np.cov(draws, rowvar=False)
        assert np.allclose(emp, cov, atol=0.02)

    def test_asymmetric_covariance_rejected(self):
        with pytest.raises(ValueError):
            ProposalSpec(cov=np.array([[1.0, 0.5], [0.1, 1.0]]))

    def test_pilot_rule(self):
        rng = np.random.default_rng(2)
        samples = rng.normal(size=(5000, 3)) * np.array([1.0, 2.0, 0.5])
        cov = pilot_proposal(samples)
        assert np.allclose(cov, (2.38 ** 2 / 3) * np.cov(samples, rowvar=False))


class TestPmmhStep:
    @staticmethod
    def initial_state(theta, loglik, priors):
        return ChainState(theta=np.asarray(theta, dtype=float),
                          log_prior=log_prior(theta, priors),
                          log_z=loglik(np.asarray(theta), None))

    def test_out_of_support_rejects_without_filter_call(self):
        calls = []

        def loglik(theta, rng):
            calls.append(theta.copy())
            return 0.0

        priors = [UniformPrior(0.0, 1.0)]
        spec = ProposalSpec(cov=np.array([[100.0]]))  # mostly out of support
        state = ChainState(theta=np.array([0.5]), log_prior=0.0, log_z=0.0)
        rng = np.random.default_rng(3)
        rejected_without_call = 0
        for _ in range(200):
            before = len(calls)
            new = pmmh_step(state, loglik, priors, spec, rng)
            if np.array_equal(new.theta, state.theta) and len(calls) == before:
                rejected_without_call += 1
            state = new
        assert rejected_without_call > 100  # scale 10 leaves support constantly

    def test_uphill_moves_always_accepted(self):
        loglik = lambda theta, rng: float(-0.5 * theta[0] ** 2)
        priors = [NormalPrior(0.0, 100.0)]
        spec = ProposalSpec(cov=np.array([[0.5]]))
        rng = np.random.default_rng(4)
        state = ChainState(theta=np.array([3.0]), log_prior=log_prior([3.0], priors),
                           log_z=loglik(np.array([3.0]), None))
        for _ in range(200):
            new = pmmh_step(state, loglik, priors, spec, rng)
            if new.log_z + new.log_prior > state.log_z + state.log_prior - 1e-12:
                pass  # accepted states are consistent by construction
            if abs(new.theta[0]) < abs(state.theta[0]) - 1e-12:
                assert new.accepted == state.accepted + 1
            state = new

    def test_degenerate_likelihood_rejects(self):
        loglik = lambda theta, rng: -math.inf
        priors = [UniformPrior(-10, 10)]
        spec = ProposalSpec(cov=np.array([[0.1]]))
        state = ChainState(theta=np.array([0.0]), log_prior=log_prior([0.0], priors),
                           log_z=-1.0)
        new = pmmh_step(state, loglik, priors, spec, np.random.default_rng(5))
        assert np.array_equal(new.theta, state.theta)
        assert new.log_z == -1.0

    def test_retained_estimate_never_recomputed(self):
        # exactly one filter call per proposal inside the support
        calls = []

        def loglik(theta, rng):
            calls.append(theta.copy())
            return float(-0.5 * theta[0] ** 2)

        priors = [UniformPrior(-5, 5)]
        spec = ProposalSpec(cov=np.array([[0.3]]))
        rng = np.random.default_rng(6)
        trace = run_pmmh(np.array([0.2]), 300, loglik, priors, spec, rng)
        # one call at initialisation plus one per in-support proposal
        assert len(calls) == 1 + 300
        assert len(trace) == 300


class TestRunPmmh:
    def test_zero_covariance_accepts_everything(self):
        loglik = lambda theta, rng: 1.7  # deterministic likelihood
        priors = [UniformPrior(-1, 1)]
        spec = ProposalSpec(cov=np.zeros((1, 1)))
        trace = run_pmmh(np.array([0.3]), 100, loglik, priors, spec,
                         np.random.default_rng(7))
        assert trace.acceptance_rate == 1.0
        assert np.all(trace.thetas == 0.3)

    def test_acceptance_rate_decreases_with_scale(self):
        loglik = lambda theta, rng: float(-0.5 * theta[0] ** 2)
        priors = [NormalPrior(0.0, 100.0)]
        rates = []
        for scale in (0.1, 1.0, 10.0, 100.0):
            spec = ProposalSpec(cov=np.array([[scale ** 2]]))
            trace = run_pmmh(np.array([0.0]), 800, loglik, priors, spec,
                             np.random.default_rng(8))
            rates.append(trace.acceptance_rate)
        assert rates[0] > rates[1] > rates[2] > rates[3]

    def test_same_seed_reproduces_trace(self):
        loglik = lambda theta, rng: float(-0.5 * theta[0] ** 2 + 0.1 * rng.standard_normal())
        priors = [NormalPrior(0.0, 25.0)]
        spec = ProposalSpec(cov=np.array([[0.4]]))
        a = run_pmmh(np.array([0.0]), 200, loglik, priors, spec,
                     np.random.default_rng(9))
        b = run_pmmh(np.array([0.0]), 200, loglik, priors, spec,
                     np.random.default_rng(9))
        assert np.array_equal(a.thetas, b.thetas)
        assert np.array_equal(a.accepted, b.accepted)

    def test_flat_likelihood_samples_the_prior_on_log_scale(self):
        # with a flat likelihood the posterior is the prior; proposing on the
        # log scale must include the Jacobian or the mean drifts visibly
        loglik = lambda theta, rng: 0.0
        priors = [GammaPrior(2.0, 1.0)]
        spec = ProposalSpec(cov=np.array([[0.8]]))
        trace = run_pmmh(np.array([1.5]), 20_000, loglik, priors, spec,
                         np.random.default_rng(10), burn_in=500,
                         transforms=[LogTransform()])
        mean = trace.thetas[:, 0].mean()
        var = trace.thetas[:, 0].var()
        # Gamma(2, 1): mean 2, variance 2; generous MC bands
        assert mean == pytest.approx(2.0, abs=0.15)
        assert var == pytest.approx(2.0, abs=0.5)

    def test_noisy_unbiased_likelihood_targets_same_posterior(self):
        # pseudo-marginal check: multiplicative mean-one noise on the
        # likelihood leaves the invariant distribution unchanged
        def exact(theta, rng):
            return float(-0.5 * theta[0] ** 2)

        def noisy(theta, rng):
            s = 0.6
            return float(-0.5 * theta[0] ** 2 + rng.normal(-0.5 * s * s, s))

        priors = [NormalPrior(0.0, 1e6)]
        spec = ProposalSpec(cov=np.array([[1.2]]))
        t_exact = run_pmmh(np.array([0.0]), 30_000, exact, priors, spec,
                           np.random.default_rng(11), burn_in=500)
        t_noisy = run_pmmh(np.array([0.0]), 30_000, noisy, priors, spec,
                           np.random.default_rng(12), burn_in=500)
        # both target N(0, 1) in theta (up to the flat prior)
        assert t_exact.thetas.mean() == pytest.approx(0.0, abs=0.05)
        assert t_noisy.thetas.mean() == pytest.approx(0.0, abs=0.08)
        assert t_exact.thetas.var() == pytest.approx(1.0, abs=0.1)
        assert t_noisy.thetas.var() == pytest.approx(1.0, abs=0.15)

    def test_bad_start_rejected(self):
        with pytest.raises(ValueError):
            run_pmmh(np.array([2.0]), 10, lambda t, r: 0.0,
                     [UniformPrior(0, 1)], ProposalSpec(cov=np.eye(1)),
                     np.random.default_rng(0))
