from concurrent.futures import ThreadPoolExecutor
import logging

from celery import group, shared_task
from django.conf import settings
import numpy as np

from smb.evaluation import evaluator_for, score, simulate
from smb.sampler import mcmc_sample
from smb.utils.config import parse_data, with_parameters


logger = logging.getLogger(__name__)


def spawn_seeds(seed, count):
    """ Independent integer seeds derived from one run seed. """
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(child.generate_state(1)[0]) for child in children]


def run_group(signatures, threads=1):
    """ Run task signatures and return their results in submission order.

    With a broker configured the work goes to Celery workers; otherwise it
    runs in this process, on `threads` threads when asked.
    """
    signatures = list(signatures)
    if not signatures:
        return []
    if not settings.CELERY_TASK_ALWAYS_EAGER:
        return group(signatures).apply_async().get()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda signature: signature.apply().get(), signatures))
    return [signature.apply().get() for signature in signatures]


@shared_task
def run_chain(config_data, base_dir, chain_index, seed):
    """ One MCMC chain of an optimize run. """
    config = parse_data(config_data, base_dir)
    logger.info("Chain %d started (seed %d)", chain_index, seed)
    chain = mcmc_sample(config.optimization.problem, evaluator_for(config), seed)
    logger.info("Chain %d finished: %d iterations, acceptance %.2f",
                chain_index, chain.iterations, chain.acceptance_rate)
    return chain.as_dict()


def _record_dict(record):
    return {'times': record.times.tolist(), 'values': record.values.tolist(), 'dt': record.dt}


def _performance_dict(performance):
    return {'purity': performance.purity.tolist(), 'yields': performance.yields.tolist(),
            'productivity': performance.productivity.tolist(), 't_c': performance.t_c}


@shared_task
def simulate_member(config_data, base_dir, parameters, theta, member):
    """ One posterior-predictive ensemble member. """
    config = with_parameters(parse_data(config_data, base_dir), parameters, theta)
    outcome = simulate(config)
    evaluation = score(outcome, config)
    return {
        'member': member,
        'theta': [float(v) for v in theta],
        'records': {node: _record_dict(record) for node, record in outcome.records.items()},
        'performance': {node: _performance_dict(p) for node, p in outcome.performance.items()},
        'switches': outcome.switches,
        'converged': outcome.converged,
        'purity': float(evaluation.purity[0]),
        'yield': evaluation.target_yield,
    }
