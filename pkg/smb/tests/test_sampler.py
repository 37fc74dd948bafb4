from unittest import TestCase  # Don't need database

from django.core.exceptions import ValidationError
import mock
import numpy as np

from smb import sampler
from smb.evaluation import toy_constrained, toy_gaussian
from smb.exceptions import IntegrationError
from smb.pareto import pareto_front
from smb.sampler import Evaluation, OptimizationProblem


def gaussian_problem(**options):
    values = dict(epsilon=(), initial=[0.0, 0.0], penalty_schedule=[1.0], geweke_tol=0)
    values.update(options)
    return OptimizationProblem.create(['x', 'y'], [-10, -10], [10, 10], **values)


class PenaltyTests(TestCase):
    def test_shortfall_is_penalized(self):
        self.assertAlmostEqual(sampler.penalty_objective((0.95, 0.5), 0.99, 100), -0.34)

    def test_met_constraint_costs_nothing(self):
        self.assertEqual(sampler.penalty_objective((0.995, 0.5), 0.99, 1e4), -0.5)

    def test_constraints_add_up(self):
        H = sampler.penalty_objective(([0.8, 0.9], 0.4), [0.9, 0.95], 10)
        self.assertAlmostEqual(H, -0.4 + 10 * (0.01 + 0.0025))

    def test_sigma_must_be_positive(self):
        with self.assertRaises(ValidationError):
            sampler.penalty_objective((0.9, 0.5), 0.99, 0)

    def test_likelihood(self):
        self.assertEqual(sampler.log_likelihood(-0.6), 0.3)
        self.assertAlmostEqual(sampler.likelihood(2.0), np.exp(-1))
        self.assertEqual(sampler.likelihood(np.inf), 0.0)


class ReflectTests(TestCase):
    def test_inside_is_untouched(self):
        np.testing.assert_allclose(sampler.reflect(np.array([0.3]), 0.0, 1.0), [0.3])

    def test_mirrors_at_faces(self):
        folded = sampler.reflect(np.array([1.2, -0.3, 2.5]), np.zeros(3), np.ones(3))
        np.testing.assert_allclose(folded, [0.8, 0.3, 0.5])

    def test_scaled_box(self):
        folded = sampler.reflect(np.array([220.0]), np.array([180.0]), np.array([200.0]))
        np.testing.assert_allclose(folded, [180.0])


class OptimizationProblemTests(TestCase):
    def test_defaults_fill_options(self):
        problem = OptimizationProblem.create(['a'], [0], [1], epsilon=[0.9])
        self.assertEqual(problem.samples, 300)
        self.assertEqual(problem.penalty_schedule, (1.0, 10.0, 100.0, 1e3, 1e4))
        self.assertEqual(problem.burn_in_samples, 150)
        self.assertEqual(problem.dimension, 1)

    def test_sigma_schedule(self):
        problem = OptimizationProblem.create(['a'], [0], [1], samples=100)
        self.assertEqual(problem.sigma_at(0), (0, 1.0))
        self.assertEqual(problem.sigma_at(19), (0, 1.0))
        self.assertEqual(problem.sigma_at(20), (1, 10.0))
        self.assertEqual(problem.sigma_at(99), (4, 1e4))

    def test_short_runs_reach_the_last_stage(self):
        problem = OptimizationProblem.create(['a'], [0], [1], samples=3)
        self.assertEqual(problem.sigma_at(2), (2, 100.0))
        self.assertEqual(problem.sigma_at(10), (4, 1e4))

    def test_objective(self):
        problem = OptimizationProblem.create(['a'], [0], [1], epsilon=[0.99],
                                             nonconvergence_penalty=10)
        good = Evaluation(np.array([0.95]), 0.5, True, 40)
        self.assertAlmostEqual(problem.objective(good, 100), -0.34)
        self.assertAlmostEqual(problem.objective(good._replace(converged=False), 100), 9.66)
        self.assertEqual(problem.objective(None, 100), np.inf)

    def test_unconstrained_objective_is_negative_yield(self):
        problem = OptimizationProblem.create(['a'], [0], [1])
        self.assertEqual(problem.objective(Evaluation(np.zeros(1), 0.7, True, None), 1e4), -0.7)

    def test_validation(self):
        bad = [dict(lower=[1], upper=[0]),
               dict(epsilon=[1.0]),
               dict(penalty_schedule=[10, 1]),
               dict(initial=[2.0]),
               dict(burn_in=1.0),
               dict(samples=0),
               dict(proposal_scale=0),
               dict(colour='blue')]
        for changes in bad:
            values = dict(lower=[0], upper=[1])
            values.update(changes)
            lower, upper = values.pop('lower'), values.pop('upper')
            with self.assertRaises(ValidationError, msg=changes):
                OptimizationProblem.create(['a'], lower, upper, **values)


class GewekeTests(TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(12)

    def test_stationary_chain(self):
        self.assertLess(abs(sampler.geweke(self.rng.standard_normal(10000))), 4)

    def test_drifting_chain(self):
        chain = np.concatenate([self.rng.standard_normal(500), 5 + self.rng.standard_normal(500)])
        self.assertGreater(abs(sampler.geweke(chain)), 10)

    def test_independent_draws_pass(self):
        passed = sum(abs(sampler.geweke(np.random.default_rng(seed).standard_normal(2000))) < 3
                     for seed in range(100))
        self.assertGreaterEqual(passed, 95)

    def test_constant_chain(self):
        self.assertEqual(sampler.geweke(np.full(100, 3.0)), 0.0)

    def test_too_short(self):
        with self.assertRaises(ValidationError):
            sampler.geweke(np.zeros(19))

    def test_bad_fractions(self):
        with self.assertRaises(ValidationError):
            sampler.geweke(np.zeros(100), 0.6, 0.6)

    def test_spectral_variance_of_white_noise(self):
        x = self.rng.standard_normal(20000)
        self.assertAlmostEqual(sampler.spectral_variance(x), 1.0, delta=0.1)


class GaussianTargetTests(TestCase):
    """ With Y = -|θ|² the chain samples a standard normal. """
    @classmethod
    def setUpClass(cls):
        super(GaussianTargetTests, cls).setUpClass()
        cls.problem = gaussian_problem(samples=10000, burn_in=0.1, proposal_scale=0.1)
        cls.chain = sampler.mcmc_sample(cls.problem, toy_gaussian, seed=7)

    def test_moments(self):
        states = self.chain.states(burn_in=False)
        self.assertEqual(states.shape, (9000, 2))
        np.testing.assert_allclose(states.mean(axis=0), 0.0, atol=0.05)
        np.testing.assert_allclose(states.var(axis=0), 1.0, rtol=0.1)
        self.assertLess(abs(np.cov(states.T)[0, 1]), 0.1)

    def test_acceptance_rate(self):
        self.assertGreaterEqual(self.chain.acceptance_rate, 0.1)
        self.assertLessEqual(self.chain.acceptance_rate, 0.6)

    def test_all_evaluations_kept(self):
        first = [s for s in self.chain.samples if s.stage == 0]
        self.assertEqual(len(first), 10000)
        retries = [s for s in self.chain.samples if s.stage == 1]
        self.assertEqual(len(retries), sum(1 for s in first[1:] if not s.accepted))
        self.assertFalse(self.chain.stopped_early)

    def test_chain_stays_in_box(self):
        thetas = np.array([s.theta for s in self.chain.samples])
        self.assertTrue(np.all(thetas >= -10) and np.all(thetas <= 10))

    def test_same_seed_same_chain(self):
        problem = gaussian_problem(samples=200)
        a = sampler.mcmc_sample(problem, toy_gaussian, seed=3)
        b = sampler.mcmc_sample(problem, toy_gaussian, seed=3)
        np.testing.assert_array_equal(a.states(), b.states())


class ConstrainedTargetTests(TestCase):
    def test_front_reaches_the_constrained_optimum(self):
        problem = OptimizationProblem.create(['a', 'b'], [0, 0], [1, 1], epsilon=[0.9],
                                             samples=5000, burn_in=0.5)
        chain = sampler.mcmc_sample(problem, toy_constrained, seed=11)
        retained = chain.retained()
        front = pareto_front([(s.purity[0], s.target_yield) for s in retained])
        feasible = front.yields[front.purity >= 0.9]
        self.assertTrue(feasible.size)
        self.assertGreaterEqual(feasible.max(), 0.588)
        self.assertLessEqual(feasible.max(), 0.6 + 1e-12)

    def test_late_samples_are_feasible(self):
        problem = OptimizationProblem.create(['a', 'b'], [0, 0], [1, 1], epsilon=[0.9],
                                             samples=2000, burn_in=0.5)
        chain = sampler.mcmc_sample(problem, toy_constrained, seed=5)
        last_stage = chain.states()[-400:]
        self.assertGreater(np.mean(last_stage[:, 0] >= 0.75), 0.9)


class FailureTests(TestCase):
    def test_failed_evaluations_are_rejected(self):
        def evaluate(theta):
            if theta[0] > 0.6:
                raise IntegrationError("step size too small")
            return toy_constrained(theta)

        problem = OptimizationProblem.create(['a', 'b'], [0, 0], [1, 1], samples=300)
        chain = sampler.mcmc_sample(problem, evaluate, seed=1)
        failed = [s for s in chain.samples if s.theta[0] > 0.6]
        self.assertTrue(failed)
        for sample in failed:
            self.assertEqual(sample.H, np.inf)
            self.assertIsNone(sample.purity)
            self.assertFalse(sample.accepted)
        self.assertTrue(np.all(chain.states()[:, 0] <= 0.6))
        self.assertTrue(all(np.isfinite(s.H) for s in chain.retained()))

    def test_unexpected_failure_does_not_stop_the_chain(self):
        calls = []

        def flaky(theta):
            calls.append(theta)
            if len(calls) == 5:
                raise RuntimeError("Factor is exactly singular")
            return toy_constrained(theta)

        evaluate = mock.Mock(side_effect=flaky)
        problem = OptimizationProblem.create(['a', 'b'], [0, 0], [1, 1], samples=100,
                                             geweke_tol=0)
        with self.assertLogs('smb.sampler', level='WARNING') as logs:
            chain = sampler.mcmc_sample(problem, evaluate, seed=1)
        self.assertEqual(chain.iterations, 100)
        self.assertTrue(any('RuntimeError' in line for line in logs.output))
        failed = [s for s in chain.samples if s.H == np.inf]
        self.assertEqual(len(failed), 1)
        self.assertFalse(failed[0].accepted)
        self.assertIsNone(failed[0].purity)

    def test_numerical_failures_are_scored_infeasible(self):
        for exc in (np.linalg.LinAlgError("Singular matrix"), FloatingPointError("overflow"),
                    ValueError("array must not contain infs or NaNs")):
            problem = gaussian_problem(samples=5)
            evaluate = mock.Mock(side_effect=exc)
            chain = sampler.mcmc_sample(problem, evaluate, seed=1)
            self.assertEqual(chain.iterations, 5)
            self.assertTrue(all(s.H == np.inf for s in chain.samples))

    def test_nonconvergence_penalty(self):
        def evaluate(theta):
            return toy_gaussian(theta)._replace(converged=False)

        problem = gaussian_problem(samples=2, nonconvergence_penalty=10)
        chain = sampler.mcmc_sample(problem, evaluate, seed=1)
        self.assertEqual(chain.samples[0].H, 10.0)


class StopRuleTests(TestCase):
    def test_geweke_stops_a_settled_chain(self):
        problem = gaussian_problem(samples=1000, burn_in=0.5, geweke_tol=10)
        chain = sampler.mcmc_sample(problem, toy_gaussian, seed=2)
        self.assertTrue(chain.stopped_early)
        self.assertEqual(chain.iterations, 600)

    def test_never_stops_before_the_last_stage(self):
        problem = gaussian_problem(samples=1000, burn_in=0.5, geweke_tol=10,
                                   penalty_schedule=[1, 2, 3, 4])
        chain = sampler.mcmc_sample(problem, toy_gaussian, seed=2)
        # The last stage starts at iteration 750, the first check falls on 799
        self.assertEqual(chain.iterations, 800)

    def test_disabled(self):
        problem = gaussian_problem(samples=1000, burn_in=0.5, geweke_tol=0)
        chain = sampler.mcmc_sample(problem, toy_gaussian, seed=2)
        self.assertFalse(chain.stopped_early)
        self.assertEqual(chain.iterations, 1000)


class ChainSerializationTests(TestCase):
    def test_survives_json_form(self):
        problem = gaussian_problem(samples=50)
        chain = sampler.mcmc_sample(problem, toy_gaussian, seed=4)
        copy = sampler.Chain.from_dict(problem, chain.as_dict())
        np.testing.assert_array_equal(copy.states(), chain.states())
        self.assertEqual(len(copy.samples), len(chain.samples))
        self.assertEqual(copy.acceptance_rate, chain.acceptance_rate)
        self.assertEqual(copy.samples[-1].H, chain.samples[-1].H)
