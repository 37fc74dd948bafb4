"""
Full-size runs of the bundled designs. Slow: set SMB_RUN_SLOW_TESTS=1.
"""
import os
import time
import unittest
from unittest import TestCase  # Don't need database

from django.conf import settings
import numpy as np

from smb import network
from smb.batch import simulate_batch
from smb.evaluation import score, simulate
from smb.indicators import batch_performance, concentration_integral, run_to_css
from smb.utils.config import parse_config, with_parameters


RUNS = os.path.join(settings.BUNDLED_CONFIG_DIR, 'runs')


def bundled_run(name, **overrides):
    return parse_config(os.path.join(RUNS, name), overrides)


@unittest.skipUnless(settings.SMB_RUN_SLOW_TESTS, "Slow regression runs")
class BatchRegressionTests(TestCase):
    def test_point_a(self):
        config = bundled_run('simulate_batch_point_a.json')
        evaluation = score(simulate(config), config)
        self.assertAlmostEqual(evaluation.purity[0], 0.90, delta=0.03)
        self.assertAlmostEqual(evaluation.target_yield, 0.85, delta=0.08)

    def test_point_b_conserves_protein(self):
        config = bundled_run('simulate_batch_point_b_sweep.json')
        protocol, system = config.protocol, config.system
        state, record = simulate_batch(protocol, system, config.solver)
        Q = system.flowrate(protocol.u_int)
        left = Q * concentration_integral(record, (record.t_start, record.t_end))
        fed = Q * protocol.feed * protocol.t_load
        np.testing.assert_allclose(left + state.holdup(system)[1:], fed, rtol=0.005)

    def test_threshold_sweep(self):
        """ A stricter threshold never widens the pool. """
        config = bundled_run('simulate_batch_point_b_sweep.json')
        record = simulate(config).records['B']
        target = config.indicators.target
        lengths, purities, yields = [], [], []
        # Thresholds are listed loosest first
        for mu in config.indicators.pool_thresholds:
            window, indicators = batch_performance(record, config.protocol, config.system,
                                                   target, mu)
            purity, target_yield, _ = indicators.of(target)
            lengths.append(window.length)
            purities.append(purity)
            yields.append(target_yield)
        self.assertTrue(np.all(np.diff(lengths) <= 0))
        self.assertTrue(np.all(np.diff(yields) <= 1e-12))
        self.assertTrue(np.all(np.diff(purities) >= -1e-12))

    def test_parameters_reach_the_simulation(self):
        config = bundled_run('simulate_batch_point_a.json')
        faster = with_parameters(config, ['protocol.dt1'], [1000.0])
        self.assertEqual(faster.protocol.dt1, 1000.0)
        self.assertLess(simulate(faster).records['B'].t_end, simulate(config).records['B'].t_end)


@unittest.skipUnless(settings.SMB_RUN_SLOW_TESTS, "Slow regression runs")
class SMBRegressionTests(TestCase):
    def setUp(self):
        self.config = bundled_run('simulate_four_zone.json')
        self.solver = self.config.solver._replace(Nz=20, Nr=5)

    def test_thirty_switches_balance_in_time(self):
        config = self.config
        state = network.initialize_smb(config.scheme, config.system, self.solver)
        before = state.holdup(config.system)
        started = time.perf_counter()
        for _ in range(30):
            network.advance_switch(state, config.scheme, self.solver, config.system)
        self.assertLess(time.perf_counter() - started, 600.0)

        ledger = state.ledger
        balance = (ledger['fed'] + ledger['recycle_in'] - ledger['withdrawn']
                   - ledger['recycle_out'])
        inside = state.holdup(config.system) - before
        np.testing.assert_array_less(np.abs(balance[1:] - inside[1:]), 5e-3 * ledger['fed'][1:])

    def test_settles_and_stays_settled(self):
        config = self.config
        state = network.initialize_smb(config.scheme, config.system, self.solver)
        # A tolerance nothing reaches: run all 120 switches
        result = run_to_css(state, config.scheme, config.system, self.solver, 1e-300, 120)
        self.assertEqual(result.switches, 120)
        e_t = 1e-3 * result.history[0]
        first_below = next(k for k, d in enumerate(result.history) if d <= e_t)
        self.assertLess(first_below, 115)
        for distance in result.history[first_below + 1:first_below + 6]:
            self.assertLessEqual(distance, 2 * e_t)

    def test_cascade_end_to_end(self):
        config = bundled_run('simulate_cascade_point_a.json',
                             **{'indicators.max_switches': 60})
        config = config._replace(solver=config.solver._replace(Nz=20, Nr=5))
        outcome = simulate(config)
        self.assertEqual(sorted(outcome.records), ['U1.E', 'U2.E', 'U2.R'])
        self.assertEqual(outcome.switches, len(outcome.history) + 1)
        purity, target_yield, productivity = outcome.performance['U2.E'].of(2)
        self.assertTrue(0 <= purity <= 1)
        self.assertTrue(0 <= target_yield <= 1.01)
        self.assertGreater(productivity, 0)
        # Later switches change less than the first ones
        self.assertLess(outcome.history[-1], outcome.history[0])
