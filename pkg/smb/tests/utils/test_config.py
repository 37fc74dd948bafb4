from unittest import TestCase  # Don't need database
import json
import os
import tempfile

from django.conf import settings
from django.core.exceptions import ValidationError

from smb.utils import config


RUNS = os.path.join(settings.BUNDLED_CONFIG_DIR, 'runs')


def batch_data(**changes):
    data = {
        'schema': 1,
        'mode': 'simulate-batch',
        'system': 'reference_system.json',
        'protocol': 'batch_point_a.json',
        'indicators': {'target': 'cyt'},
    }
    data.update(changes)
    return data


def smb_data(scheme, **changes):
    data = {
        'schema': 1,
        'mode': 'simulate-smb',
        'system': 'reference_system.json',
        'scheme': scheme,
        'indicators': {'target': 'cyt'},
    }
    data.update(changes)
    return data


class ConfigTestCase(TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = self._tmp.name
        self.addCleanup(self._tmp.cleanup)

    def write(self, name, data):
        path = os.path.join(self.tmp, name)
        with open(path, 'w') as handle:
            if isinstance(data, str):
                handle.write(data)
            else:
                json.dump(data, handle)
        return path

    def assertInvalid(self, data, *keys):
        with self.assertRaises(ValidationError) as cm:
            config.parse_data(data, self.tmp)
        for key in keys:
            self.assertIn(key, cm.exception.message_dict)


class BundledRunTests(TestCase):
    def test_batch_run(self):
        run = config.parse_config(os.path.join(RUNS, 'simulate_batch_point_a.json'))
        self.assertEqual(run.mode, config.SIMULATE_BATCH)
        self.assertTrue(run.is_batch)
        self.assertEqual(run.protocol.dt1, 2810.0)
        self.assertEqual(run.indicators.target, 2)
        self.assertEqual(run.indicators.pool_threshold, 7.5e-5)
        self.assertEqual(run.solver.Nz, settings.SMB_SOLVER_DEFAULTS['Nz'])
        self.assertEqual(run.output_dir, os.path.join(RUNS, 'out', 'batch_point_a'))

    def test_every_bundled_run_parses(self):
        for name in sorted(os.listdir(RUNS)):
            run = config.parse_config(os.path.join(RUNS, name))
            self.assertIn(run.mode, config.MODES, msg=name)

    def test_resolved_data_is_self_contained(self):
        run = config.parse_config(os.path.join(RUNS, 'optimize_batch.json'))
        data = run.data
        self.assertIsInstance(data['system'], dict)
        self.assertEqual(data['protocol']['t_hold'], None)
        self.assertEqual(data['solver']['Nr'], settings.SMB_SOLVER_DEFAULTS['Nr'])
        self.assertEqual(data['optimization']['chains'], 1)
        self.assertEqual(data['optimization']['geweke_interval'], 100)
        self.assertEqual(data['indicators']['max_switches'], settings.SMB_MAX_SWITCHES)
        # Parsing the resolved data again changes nothing
        again = config.parse_data(json.loads(run.resolved_json()), RUNS, run.path)
        self.assertEqual(again.data, data)

    def test_default_nodes(self):
        expected = {'four_zone_empirical.json': 'E', 'cascade_point_a.json': 'U2.E',
                    'eight_zone_point_a.json': 'E2'}
        for scheme, node in expected.items():
            run = config.parse_data(smb_data(scheme), RUNS)
            self.assertEqual(run.indicators.node, node)
            self.assertIn(node, run.scheme.external_withdrawals())


class IncludeTests(ConfigTestCase):
    def test_local_file_wins(self):
        path = os.path.join(settings.BUNDLED_CONFIG_DIR, 'reference_system.json')
        system = config.load_json(path)
        system['binding']['Lambda'] = 1100.0
        self.write('reference_system.json', system)
        run = config.parse_data(batch_data(), self.tmp)
        self.assertEqual(run.system.binding.Lambda, 1100.0)

    def test_falls_back_to_bundled(self):
        self.assertEqual(config.find_include('batch_point_a.json', self.tmp),
                         os.path.join(settings.BUNDLED_CONFIG_DIR, 'batch_point_a.json'))

    def test_missing_include(self):
        self.assertInvalid(batch_data(protocol='no_such_protocol.json'),
                           'no_such_protocol.json')

    def test_syntax_error_location(self):
        path = self.write('broken.json', '{\n  "schema": 1,\n  "mode" "optimize"\n}\n')
        with self.assertRaises(ValidationError) as cm:
            config.load_json(path)
        self.assertIn('line 3', cm.exception.message_dict[path][0])

    def test_top_level_must_be_an_object(self):
        path = self.write('list.json', [1, 2])
        with self.assertRaises(ValidationError):
            config.parse_config(path)


class ValidationTests(ConfigTestCase):
    def test_unknown_keys_are_named(self):
        protocol = dict(config.load_json(config.find_include('batch_point_a.json', self.tmp)),
                        colour='blue')
        self.assertInvalid(batch_data(protocol=protocol), 'protocol.colour')
        self.assertInvalid(batch_data(colour='blue'), 'colour')

    def test_schema_and_mode(self):
        self.assertInvalid(batch_data(schema=2), 'schema')
        self.assertInvalid(batch_data(mode='simulate'), 'mode')

    def test_required_blocks(self):
        data = batch_data()
        del data['protocol']
        self.assertInvalid(data, 'protocol')
        self.assertInvalid(smb_data('four_zone_empirical.json', protocol='batch_point_a.json'),
                           'protocol')

    def test_target(self):
        self.assertInvalid(batch_data(indicators={}), 'indicators.target')
        self.assertInvalid(batch_data(indicators={'target': 'salt'}), 'indicators.target')
        self.assertInvalid(batch_data(indicators={'target': 'myoglobin'}), 'indicators.target')

    def test_node_must_be_withdrawn(self):
        data = smb_data('four_zone_empirical.json', indicators={'target': 'cyt', 'node': 'F'})
        self.assertInvalid(data, 'indicators.node')

    def test_indicator_settings(self):
        self.assertInvalid(batch_data(indicators={'target': 'cyt', 'pool_threshold': 0}),
                           'indicators.pool_threshold')
        self.assertInvalid(batch_data(indicators={'target': 'cyt', 'max_switches': 1}),
                           'indicators.max_switches')

    def test_seed(self):
        self.assertInvalid(batch_data(seed=-1), 'seed')
        self.assertInvalid(batch_data(seed=True), 'seed')

    def test_protocol_values(self):
        protocol = dict(config.load_json(config.find_include('batch_point_a.json', self.tmp)),
                        t_load=-10.0)
        self.assertInvalid(batch_data(protocol=protocol), 'protocol.t_load')

    def test_feed_matches_components(self):
        scheme = config.load_json(config.find_include('four_zone_empirical.json', self.tmp))
        scheme['feed'] = [1.0, 1.0]
        self.assertInvalid(smb_data(scheme), 'scheme.feed')

    def test_process_parameters_must_exist(self):
        data = batch_data(mode='optimize', optimization={
            'parameters': {'protocol.dt9': [0, 1]}})
        self.assertInvalid(data, 'optimization.parameters.protocol.dt9')

    def test_unknown_optimization_problem(self):
        data = {'schema': 1, 'mode': 'optimize',
                'optimization': {'problem': 'rosenbrock', 'parameters': {'x': [0, 1]}}}
        self.assertInvalid(data, 'optimization.problem')

    def test_predictive_needs_a_chain(self):
        data = batch_data(mode='predictive-check', predictive={'members': 3})
        self.assertInvalid(data, 'predictive.chain')


class OverrideTests(ConfigTestCase):
    def test_overrides_apply_before_validation(self):
        path = self.write('run.json', batch_data())
        run = config.parse_config(path, {'seed': 9, 'output.directory': '/tmp/elsewhere',
                                         'mode': None})
        self.assertEqual(run.seed, 9)
        self.assertEqual(run.output_dir, '/tmp/elsewhere')
        self.assertEqual(run.mode, config.SIMULATE_BATCH)

    def test_override_inside_an_included_block(self):
        path = self.write('run.json', batch_data())
        run = config.parse_config(path, {'protocol.dt1': 1000.0})
        self.assertEqual(run.protocol.dt1, 1000.0)
        self.assertEqual(run.protocol.dt2, 3530.0)


class PathTests(TestCase):
    def setUp(self):
        self.data = {'scheme': {'units': {'U2': {'flows': {'Q_F': 1.5e-8}}}},
                     'protocol': {'feed': [1.0, 2.0, 3.0]}}

    def test_get(self):
        self.assertEqual(config.get_path(self.data, 'scheme.units.U2.flows.Q_F'), 1.5e-8)
        self.assertEqual(config.get_path(self.data, 'protocol.feed.1'), 2.0)

    def test_set(self):
        config.set_path(self.data, 'scheme.units.U2.flows.Q_F', 2e-8)
        config.set_path(self.data, 'protocol.feed.0', 0.5)
        self.assertEqual(self.data['scheme']['units']['U2']['flows']['Q_F'], 2e-8)
        self.assertEqual(self.data['protocol']['feed'], [0.5, 2.0, 3.0])

    def test_missing_entries(self):
        with self.assertRaises(ValidationError):
            config.get_path(self.data, 'scheme.units.U3')
        with self.assertRaises(ValidationError):
            config.set_path(self.data, 'scheme.units.U2.flows.Q_X', 1.0)
        with self.assertRaises(ValidationError):
            config.set_path(self.data, 'protocol.feed.7', 1.0)


class WithParametersTests(TestCase):
    def setUp(self):
        self.run = config.parse_config(os.path.join(RUNS, 'simulate_batch_point_a.json'))

    def test_values_reach_the_protocol(self):
        moved = config.with_parameters(self.run, ['protocol.dt1', 'protocol.m2'], [1000.0, 0.5])
        self.assertEqual(moved.protocol.dt1, 1000.0)
        self.assertEqual(moved.protocol.m2, 0.5)
        self.assertEqual(self.run.protocol.dt1, 2810.0)

    def test_values_are_validated(self):
        with self.assertRaises(ValidationError):
            config.with_parameters(self.run, ['protocol.dt1'], [-5.0])

    def test_scheme_parameters(self):
        run = config.parse_config(os.path.join(RUNS, 'simulate_cascade_point_a.json'))
        moved = config.with_parameters(run, ['scheme.units.U2.salt.c_F'], [210.0])
        self.assertEqual(moved.data['scheme']['units']['U2']['salt']['c_F'], 210.0)
        self.assertIn(210.0, moved.scheme.loops[1].zone_salt)
        self.assertNotIn(210.0, run.scheme.loops[1].zone_salt)
