"""
From a parameter vector θ to the indicators the optimizer ranks.

Process problems write θ into the run configuration (dotted paths), run the
batch cycle or the SMB scheme to cyclic steady state, and score the target
stream. The toy problems have closed-form indicators and exist to check the
sampler itself.
"""
from collections import namedtuple
import logging

import numpy as np

from smb.batch import run_batch
from smb.exceptions import EmptyPoolWindow, NoWithdrawal
from smb.indicators import batch_performance, run_to_css
from smb.network import initialize_smb
from smb.sampler import Evaluation
from smb.utils.config import PROCESS, TOY_CONSTRAINED, TOY_GAUSSIAN, with_parameters


logger = logging.getLogger(__name__)


class SimulationOutcome(namedtuple('SimulationOutcome', [
        'records', 'performance', 'switches', 'converged', 'window', 'state', 'history'])):
    """ Everything one process simulation produced.

    `records` maps node ids to the outlet records that were scored (the
    batch outlet, or every withdrawal of the final switch).
    """
    __slots__ = ()

    def target(self, node):
        return self.performance.get(node)


def simulate(config):
    """ Run the configured process once. """
    if config.is_batch:
        record = run_batch(config.protocol, config.system, config.solver)
        try:
            window, indicators = batch_performance(record, config.protocol, config.system,
                                                   config.indicators.target,
                                                   config.indicators.pool_threshold)
            performance = {record.node: indicators}
        except EmptyPoolWindow:
            window, performance = None, {}
        return SimulationOutcome({record.node: record}, performance, None, True, window,
                                 None, [])

    state = initialize_smb(config.scheme, config.system, config.solver)
    ind = config.indicators
    result = run_to_css(state, config.scheme, config.system, config.solver,
                        ind.css_tolerance, ind.max_switches, ind.norm)
    return SimulationOutcome(result.state.last_records(), result.performance, result.switches,
                             result.converged, None, result.state, result.history)


def score(outcome, config):
    """ Evaluation of the target at the configured node. """
    ind = config.indicators
    node = 'B' if config.is_batch else ind.node
    record = outcome.target(node)
    if record is None:
        # Nothing could be pooled
        return Evaluation(np.zeros(1), 0.0, outcome.converged, outcome.switches)
    purity, target_yield, _ = record.of(ind.target)
    if not np.isfinite(purity):
        return Evaluation(np.zeros(1), 0.0, outcome.converged, outcome.switches)
    return Evaluation(np.array([purity]), float(target_yield), outcome.converged,
                      outcome.switches)


class ProcessEvaluator(object):
    """ θ → configured simulation → Evaluation. """
    def __init__(self, config, parameters):
        self.config = config
        self.parameters = tuple(parameters)

    def configure(self, theta):
        return with_parameters(self.config, self.parameters, theta)

    def __call__(self, theta):
        config = self.configure(theta)
        try:
            return score(simulate(config), config)
        except NoWithdrawal:
            return Evaluation(np.zeros(1), 0.0, True, None)


def toy_gaussian(theta):
    """ Y = -|θ|², no constraint: samples follow a standard normal. """
    theta = np.asarray(theta, dtype=float)
    return Evaluation(np.ones(1), -float(theta @ theta), True, None)


def toy_constrained(theta):
    """ Purity rises and yield falls with θ0; θ1 only costs yield away from 0.5.

    With ε = 0.9 on [0, 1]² the best feasible yield is 0.6 at θ = (0.8, 0.5).
    """
    theta = np.asarray(theta, dtype=float)
    purity = 0.5 + 0.5 * theta[0]
    target_yield = 1 - 0.5 * theta[0] - 0.2 * (theta[1] - 0.5) ** 2
    return Evaluation(np.array([purity]), float(target_yield), True, None)


TOY_PROBLEMS = {TOY_GAUSSIAN: toy_gaussian, TOY_CONSTRAINED: toy_constrained}


def evaluator_for(config):
    """ The θ → Evaluation callable of an optimize run. """
    optimization = config.optimization
    if optimization.kind == PROCESS:
        return ProcessEvaluator(config, optimization.problem.parameters)
    return TOY_PROBLEMS[optimization.kind]
