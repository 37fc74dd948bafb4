"""
Files written under a run's output directory.

Every float is written in its shortest round-trip form, so identical runs
produce byte-identical files. Each writer owns exactly one file.
"""
from collections import OrderedDict, namedtuple
import csv
import json
import os

import numpy as np


def fmt(value):
    """ Shortest decimal that reads back as the same float. """
    if value is None:
        return ''
    if isinstance(value, (bool, np.bool_)):
        return '1' if value else '0'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


class OutputDirectory(object):
    """ Keeps track of what a run wrote, for the manifest. """
    def __init__(self, path):
        self.path = path
        self.files = []
        os.makedirs(path, exist_ok=True)

    def open(self, name):
        if name not in self.files:
            self.files.append(name)
        return open(os.path.join(self.path, name), 'w', newline='', encoding='utf-8')

    def write_json(self, name, data):
        with self.open(name) as handle:
            json.dump(data, handle, indent=2, sort_keys=True)
            handle.write('\n')


class CsvWriter(object):
    """ One CSV file: a fixed header, then rows of formatted values. """
    filename = None
    col_constants = OrderedDict()

    def __init__(self, directory, filename=None):
        self.directory = directory
        self.filename = filename or self.filename
        self.labels = namedtuple('Labels', self.col_constants)(**self.col_constants)

    @property
    def header(self):
        return list(self.labels)

    def write(self, rows):
        with self.directory.open(self.filename) as handle:
            writer = csv.writer(handle, lineterminator='\n')
            writer.writerow(self.header)
            for row in rows:
                writer.writerow([fmt(value) if not isinstance(value, str) else value
                                 for value in row])
        return self.filename


class ChromatogramWriter(CsvWriter):
    filename = 'chromatogram.csv'
    col_constants = OrderedDict(time='time_s', component='component', conc='conc_mol_m3')

    def rows(self, record, names):
        for t, values in zip(record.times, record.values):
            for name, value in zip(names, values):
                yield t, name, value

    def write_record(self, record, names):
        return self.write(self.rows(record, names))


class PoolWindowWriter(CsvWriter):
    filename = 'pool_window.csv'
    col_constants = OrderedDict(target='target', mu='mu', start='t_start', end='t_end')


class PoolSweepWriter(CsvWriter):
    filename = 'pool_sweep.csv'
    col_constants = OrderedDict(mu='mu', start='t_start', end='t_end', purity='purity',
                                yield_='yield', productivity='productivity')


class IndicatorWriter(CsvWriter):
    filename = 'indicators.csv'
    col_constants = OrderedDict(node='node', component='component', purity='purity',
                                yield_='yield', productivity='productivity', t_c='t_c',
                                switches='switches_to_css')

    def rows(self, records, names, switches=None):
        for record in records:
            for i, name in enumerate(names[1:]):
                yield (record.node, name, record.purity[i], record.yields[i],
                       record.productivity[i], record.t_c, switches)


class WithdrawalWriter(CsvWriter):
    filename = 'withdrawals.csv'
    col_constants = OrderedDict(switch='switch', time='time_s', node='node',
                                component='component', conc='conc_mol_m3')

    def rows(self, switch, records, names):
        for node in sorted(records):
            record = records[node]
            for t, values in zip(record.times, record.values):
                for name, value in zip(names, values):
                    yield switch, t, node, name, value


class CSSHistoryWriter(CsvWriter):
    filename = 'css_history.csv'
    col_constants = OrderedDict(switch='switch', distance='distance')


class AxialProfileWriter(CsvWriter):
    filename = 'axial_profile.csv'
    col_constants = OrderedDict(loop='loop', column='column', zone='zone', z='z_m',
                                component='component', conc='conc_mol_m3')

    def rows(self, profiles, names):
        for loop, column, zone, z, c in profiles:
            for position, values in zip(z, c):
                for name, value in zip(names, values):
                    yield loop, column, zone, position, name, value


class ChainWriter(CsvWriter):
    """ One row per evaluation, across all chains. """
    filename = 'chain.csv'

    def __init__(self, directory, dimension, filename=None):
        self.col_constants = OrderedDict(
            [('iter', 'iter'), ('accepted', 'accepted')]
            + [('theta_{}'.format(k), 'theta_{}'.format(k)) for k in range(dimension)]
            + [('H', 'H'), ('logL', 'logL'), ('purity', 'purity'), ('yield_', 'yield'),
               ('switches', 'css_switches'), ('stage', 'stage'), ('chain', 'chain'),
               ('burn_in', 'burn_in'), ('sigma', 'sigma')])
        super().__init__(directory, filename)

    def rows(self, chains):
        for index, chain in enumerate(chains):
            for sample in chain.samples:
                purity = None if sample.purity is None else sample.purity[0]
                yield ([sample.iteration, sample.accepted] + list(sample.theta)
                       + [sample.H, sample.log_likelihood, purity, sample.target_yield,
                          sample.switches, sample.stage, index, sample.burn_in, sample.sigma])


class ParetoWriter(CsvWriter):
    filename = 'pareto.csv'

    def __init__(self, directory, dimension, filename=None):
        self.col_constants = OrderedDict(
            [('purity', 'purity'), ('yield_', 'yield')]
            + [('theta_{}'.format(k), 'theta_{}'.format(k)) for k in range(dimension)])
        super().__init__(directory, filename)

    def rows(self, front):
        for purity, target_yield, theta in front:
            yield [purity, target_yield] + list(theta)


class EnsembleWriter(CsvWriter):
    filename = 'ensemble.csv'
    col_constants = OrderedDict(member='member', node='node', time='time_s',
                                component='component', conc='conc_mol_m3')

    def rows(self, members, names):
        for member, records in members:
            for node in sorted(records):
                record = records[node]
                for t, values in zip(record.times, record.values):
                    for name, value in zip(names, values):
                        yield member, node, t, name, value


class EnsembleIndicatorWriter(CsvWriter):
    filename = 'ensemble_indicators.csv'

    def __init__(self, directory, dimension, filename=None):
        self.col_constants = OrderedDict(
            [('member', 'member')]
            + [('theta_{}'.format(k), 'theta_{}'.format(k)) for k in range(dimension)]
            + [('node', 'node'), ('purity', 'purity'), ('yield_', 'yield'),
               ('productivity', 'productivity'), ('switches', 'switches_to_css')])
        super().__init__(directory, filename)
