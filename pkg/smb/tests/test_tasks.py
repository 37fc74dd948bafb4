from unittest import TestCase  # Don't need database
import threading

from django.test import override_settings
import mock

from smb import tasks


def signature(value, seen=None):
    """ Stand-in for a Celery signature whose eager result is `value`. """
    sig = mock.Mock()

    def apply():
        if seen is not None:
            seen.add(threading.current_thread().name)
        return mock.Mock(get=mock.Mock(return_value=value))
    sig.apply.side_effect = apply
    return sig


class SpawnSeedsTests(TestCase):
    def test_deterministic(self):
        self.assertEqual(tasks.spawn_seeds(7, 4), tasks.spawn_seeds(7, 4))

    def test_distinct(self):
        seeds = tasks.spawn_seeds(7, 20)
        self.assertEqual(len(set(seeds)), 20)
        self.assertNotEqual(seeds, tasks.spawn_seeds(8, 20))

    def test_prefix_is_stable(self):
        """ Asking for more chains leaves the first chains' seeds alone. """
        self.assertEqual(tasks.spawn_seeds(3, 5)[:2], tasks.spawn_seeds(3, 2))

    def test_plain_ints(self):
        for seed in tasks.spawn_seeds(0, 3):
            self.assertIs(type(seed), int)


class RunGroupTests(TestCase):
    def test_nothing_to_run(self):
        self.assertEqual(tasks.run_group([]), [])

    def test_in_process(self):
        signatures = [signature(k) for k in range(5)]
        self.assertEqual(tasks.run_group(signatures), [0, 1, 2, 3, 4])
        for sig in signatures:
            sig.apply.assert_called_once_with()

    def test_threads_keep_order(self):
        seen = set()
        signatures = [signature(k, seen) for k in range(8)]
        self.assertEqual(tasks.run_group(signatures, threads=2), list(range(8)))
        self.assertNotIn(threading.current_thread().name, seen)

    @mock.patch('smb.tasks.group')
    def test_broker_dispatch(self, group):
        group.return_value.apply_async.return_value.get.return_value = ['a', 'b']
        signatures = [signature('x'), signature('y')]
        with override_settings(CELERY_TASK_ALWAYS_EAGER=False):
            self.assertEqual(tasks.run_group(signatures, threads=4), ['a', 'b'])
        group.assert_called_once_with(signatures)
        for sig in signatures:
            sig.apply.assert_not_called()


class RunChainTests(TestCase):
    data = {
        'schema': 1,
        'mode': 'optimize',
        'optimization': {
            'problem': 'toy-gaussian',
            'parameters': {'x': [-5.0, 5.0]},
            'initial': [1.0],
            'samples': 30,
            'penalty_schedule': [1.0],
            'geweke_tol': 0,
        },
    }

    def test_eager_chain(self):
        result = tasks.run_chain.s(self.data, '.', 0, 42).apply().get()
        self.assertEqual(result['seed'], 42)
        self.assertEqual(len(result['trajectory']), 30)
        self.assertEqual(result['trajectory'][0], [1.0])
        self.assertFalse(result['stopped_early'])

    def test_same_seed_same_chain(self):
        first = tasks.run_chain.s(self.data, '.', 0, 42).apply().get()
        second = tasks.run_chain.s(self.data, '.', 1, 42).apply().get()
        self.assertEqual(first['trajectory'], second['trajectory'])
