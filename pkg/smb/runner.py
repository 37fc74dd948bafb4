"""
One runner per mode of the `smbforge` command.

A runner writes everything under the configured output directory, then a
manifest and the resolved configuration, and announces the end of the run
through the `run_finished` signal.
"""
import logging
import os
import time

import numpy as np
import pandas as pd
from django.core.exceptions import ValidationError

from smb import tasks
from smb.column import OutletRecord
from smb.evaluation import simulate
from smb.exceptions import EmptyPoolWindow, SimulationError
from smb.indicators import batch_performance
from smb.network import axial_profiles
from smb.pareto import pareto_front
from smb.sampler import Chain
from smb.signals import run_finished
from smb.utils import config as run_config
from smb.utils import output


logger = logging.getLogger(__name__)

FINISHED = 'finished'
FAILED = 'failed'


class Runner(object):
    def __init__(self, config, threads=1):
        self.config = config
        self.threads = max(int(threads), 1)
        self.messages = []
        self.manifest = {}

    @property
    def base_dir(self):
        return os.path.dirname(self.config.path) if self.config.path else os.getcwd()

    @property
    def names(self):
        return self.config.system.components.names

    def note(self, message, *args):
        text = message % args if args else message
        logger.info(text)
        self.messages.append(text)

    def run(self, directory):
        raise NotImplementedError("Subclasses must implement the mode's work")

    def __call__(self):
        """ Run, then write the manifest whatever happened. Returns the output directory. """
        config = self.config
        started = time.monotonic()
        directory = output.OutputDirectory(config.output_dir)
        status = FAILED
        logger.info("Starting %s run (seed %d) into %s", config.mode, config.seed,
                    config.output_dir)
        try:
            self.run(directory)
            status = FINISHED
        except (SimulationError, ValidationError) as exc:
            self.messages.append("{}: {}".format(type(exc).__name__, exc))
            raise
        finally:
            wall_time = time.monotonic() - started
            directory.write_json('resolved_config.json', config.data)
            manifest = dict(self.manifest, mode=config.mode, seed=config.seed, status=status,
                            wall_time_s=wall_time, resolved_config='resolved_config.json',
                            messages=self.messages)
            manifest['files'] = list(directory.files) + ['manifest.json']
            directory.write_json('manifest.json', manifest)
            run_finished.send(sender=self.__class__, config=config, status=status,
                              wall_time=wall_time, messages=self.messages)
            logger.info("%s run %s after %.1f s", config.mode, status, wall_time)
        return directory


class BatchRunner(Runner):
    """ One load-wash-elute cycle: chromatogram, pool window and indicators. """
    def run(self, directory):
        config = self.config
        outcome = simulate(config)
        record = outcome.records['B']
        output.ChromatogramWriter(directory).write_record(record, self.names)

        target = self.names[config.indicators.target]
        window = outcome.window
        rows = [] if window is None else [(target, window.threshold, window.t_start, window.t_end)]
        output.PoolWindowWriter(directory).write(rows)
        if window is None:
            self.note("No pool window for %s at mu=%g", target, config.indicators.pool_threshold)

        indicators = output.IndicatorWriter(directory)
        indicators.write(indicators.rows(outcome.performance.values(), self.names))

        if config.indicators.pool_thresholds:
            output.PoolSweepWriter(directory).write(self.sweep(record))

    def sweep(self, record):
        config = self.config
        target = config.indicators.target
        for mu in config.indicators.pool_thresholds:
            try:
                window, indicators = batch_performance(record, config.protocol, config.system,
                                                       target, mu)
            except EmptyPoolWindow:
                yield mu, None, None, 0.0, 0.0, 0.0
                continue
            purity, target_yield, productivity = indicators.of(target)
            yield mu, window.t_start, window.t_end, purity, target_yield, productivity


class SMBRunner(Runner):
    """ One SMB scheme run to cyclic steady state. """
    def run(self, directory):
        config = self.config
        outcome = simulate(config)
        if not outcome.converged:
            self.note("No cyclic steady state within %d switches", config.indicators.max_switches)
        self.manifest['switches'] = outcome.switches
        self.manifest['converged'] = outcome.converged

        nodes = config.scheme.external_withdrawals()
        indicators = output.IndicatorWriter(directory)
        indicators.write(indicators.rows([outcome.performance[n] for n in nodes], self.names,
                                         outcome.switches))
        withdrawals = output.WithdrawalWriter(directory)
        withdrawals.write(withdrawals.rows(outcome.switches, outcome.records, self.names))
        output.CSSHistoryWriter(directory).write(
            (switch, distance) for switch, distance in enumerate(outcome.history, start=2))
        profiles = output.AxialProfileWriter(directory)
        profiles.write(profiles.rows(axial_profiles(outcome.state, config.scheme, config.system),
                                     self.names))


class OptimizeRunner(Runner):
    """ MCMC chains over the search box, then the Pareto front of all evaluations. """
    def run(self, directory):
        config = self.config
        problem = config.optimization.problem
        seeds = tasks.spawn_seeds(config.seed, config.optimization.chains)
        signatures = [tasks.run_chain.s(config.data, self.base_dir, k, seed)
                      for k, seed in enumerate(seeds)]
        chains = [Chain.from_dict(problem, data)
                  for data in tasks.run_group(signatures, self.threads)]

        self.manifest.update(
            parameters=list(problem.parameters), chain_seeds=seeds,
            acceptance_rates=[chain.acceptance_rate for chain in chains],
            stopped_early=[chain.stopped_early for chain in chains])
        for k, chain in enumerate(chains):
            self.note("Chain %d: %d iterations, acceptance %.3f", k, chain.iterations,
                      chain.acceptance_rate)

        writer = output.ChainWriter(directory, problem.dimension)
        writer.write(writer.rows(chains))

        retained = [s for chain in chains for s in chain.retained() if s.purity is not None]
        front = pareto_front([(s.purity[0], s.target_yield) for s in retained],
                             [s.theta for s in retained])
        pareto = output.ParetoWriter(directory, problem.dimension)
        pareto.write(pareto.rows(front))


def chain_states(path, dimension):
    """ Post burn-in chain states stored in a chain CSV, in file order.

    Each iteration's state is its accepted evaluation, or the previous
    state when nothing was accepted.
    """
    frame = pd.read_csv(path)
    thetas = ['theta_{}'.format(k) for k in range(dimension)]
    missing = [column for column in thetas + ['iter', 'accepted', 'chain', 'burn_in']
               if column not in frame.columns]
    if missing:
        raise ValidationError({'predictive.chain': ["Chain file lacks column(s) {}".format(
            ', '.join(missing))]})

    iterations = frame.groupby(['chain', 'iter'], sort=False)
    states = frame[frame.accepted == 1].groupby(['chain', 'iter'], sort=False)[thetas].last()
    burn_in = iterations['burn_in'].max()
    states = states.reindex(burn_in.index).groupby(level='chain').ffill()
    return states[burn_in == 0].dropna().to_numpy()


class PredictiveCheckRunner(Runner):
    """ Re-simulate parameter vectors drawn from a finished chain. """
    def run(self, directory):
        config = self.config
        predictive = config.predictive
        if predictive.members == 0:
            self.note("Empty ensemble requested; nothing simulated")
            return

        parameters = predictive.parameters
        states = chain_states(predictive.chain, len(parameters))
        if not len(states):
            raise ValidationError({'predictive.chain': ["No post burn-in states in the chain"]})
        rng = np.random.default_rng(config.seed)
        picks = rng.choice(len(states), size=predictive.members,
                           replace=predictive.members > len(states))
        signatures = [tasks.simulate_member.s(config.data, self.base_dir, list(parameters),
                                              [float(v) for v in states[i]], member)
                      for member, i in enumerate(picks)]
        members = tasks.run_group(signatures, self.threads)
        self.manifest['members'] = [int(i) for i in picks]

        ensemble = output.EnsembleWriter(directory)
        ensemble.write(ensemble.rows(
            ((m['member'], _records(m)) for m in members), self.names))
        target = config.indicators.target - 1
        writer = output.EnsembleIndicatorWriter(directory, len(parameters))
        writer.write(
            [m['member']] + m['theta'] + [node, p['purity'][target], p['yields'][target],
                                         p['productivity'][target], m['switches']]
            for m in members for node, p in sorted(m['performance'].items()))


def _records(member):
    return {node: OutletRecord(np.array(r['times']), np.array(r['values']), r['dt'], node)
            for node, r in member['records'].items()}


RUNNERS = {
    run_config.SIMULATE_BATCH: BatchRunner,
    run_config.SIMULATE_SMB: SMBRunner,
    run_config.OPTIMIZE: OptimizeRunner,
    run_config.PREDICTIVE_CHECK: PredictiveCheckRunner,
}


def runner_for(config, threads=1):
    return RUNNERS[config.mode](config, threads)
