"""
Multi-objective design by Markov chain Monte Carlo.

Maximizing the yield of a target under purity constraints is turned into
sampling from L(θ) = exp(-H(θ; σ)/2), with

    H = -Y + σ Σ_j min(0, Pu_j - ε_j)²

and σ increased along a fixed schedule. The chain is a random-walk
Metropolis-Hastings sampler, reflected at the search box, with one
delayed-rejection stage and a proposal covariance adapted during burn-in.
Every evaluated point is kept so the Pareto front can be drawn from all of
them.
"""
from collections import namedtuple
import hashlib
import logging

from django.conf import settings
from django.core.exceptions import ValidationError
import numpy as np

from smb.exceptions import SimulationError


logger = logging.getLogger(__name__)

# Optimal random-walk scaling for a d-dimensional Gaussian target
ADAPTIVE_SCALING = 2.38 ** 2


class Evaluation(namedtuple('Evaluation', ['purity', 'target_yield', 'converged', 'switches'])):
    """ What a simulation reports back for one θ. `purity` has one entry per constraint. """
    __slots__ = ()


def penalty_objective(indicators, epsilon, sigma):
    """ H = -Y + σ Σ min(0, Pu - ε)² for indicators (Pu, Y). """
    if not sigma > 0:
        raise ValidationError({'sigma': ["Penalty factor must be > 0"]})
    purity, target_yield = indicators
    shortfall = np.minimum(0.0, np.atleast_1d(purity) - np.atleast_1d(epsilon))
    return -target_yield + sigma * float(np.sum(shortfall ** 2))


def log_likelihood(H):
    return -0.5 * H


def likelihood(H):
    """ exp(-H/2); use log_likelihood for comparisons. """
    return float(np.exp(log_likelihood(H)))


class OptimizationProblem(namedtuple('OptimizationProblem', [
        'parameters', 'lower', 'upper', 'epsilon', 'penalty_schedule', 'samples',
        'burn_in', 'proposal_scale', 'dr_scale', 'adapt_start', 'adapt_interval',
        'nonconvergence_penalty', 'geweke_first', 'geweke_last', 'geweke_tol',
        'geweke_interval', 'initial'])):
    """ Search box, constraints and sampler budget.

    `parameters` names what each θ entry sets (a dotted config path for
    process problems). Missing options come from SMB_OPTIMIZER_DEFAULTS.
    """
    __slots__ = ()

    @classmethod
    def create(cls, parameters, lower, upper, epsilon=(), initial=None, **options):
        values = dict(settings.SMB_OPTIMIZER_DEFAULTS)
        values.pop('chains', None)
        unknown = set(options) - set(cls._fields)
        if unknown:
            raise ValidationError({'optimization': ["Unknown option(s): {}".format(
                ', '.join(sorted(unknown)))]})
        values.update({k: v for k, v in options.items() if v is not None})
        return cls(parameters=tuple(parameters),
                   lower=np.asarray(lower, dtype=float),
                   upper=np.asarray(upper, dtype=float),
                   epsilon=np.atleast_1d(np.asarray(epsilon, dtype=float)),
                   initial=None if initial is None else np.asarray(initial, dtype=float),
                   **values).validated()

    @property
    def dimension(self):
        return len(self.parameters)

    @property
    def width(self):
        return self.upper - self.lower

    @property
    def burn_in_samples(self):
        return int(self.burn_in * self.samples)

    def validated(self):
        errors = {}
        d = len(self.parameters)
        if d < 1:
            errors['optimization.parameters'] = ["Need at least one parameter"]
        if self.lower.shape != (d,) or self.upper.shape != (d,):
            errors['optimization.parameters'] = ["Need a [low, high] pair per parameter"]
        elif not np.all(self.lower < self.upper):
            bad = [p for p, lo, hi in zip(self.parameters, self.lower, self.upper) if not lo < hi]
            errors['optimization.parameters'] = ["Empty range for {}".format(', '.join(bad))]
        if np.any(self.epsilon < 0) or np.any(self.epsilon >= 1):
            errors['optimization.epsilon'] = ["Purity thresholds must lie in [0, 1)"]
        schedule = np.asarray(self.penalty_schedule, dtype=float)
        if schedule.size < 1 or schedule[0] <= 0 or np.any(np.diff(schedule) <= 0):
            errors['optimization.penalty_schedule'] = ["Need a strictly increasing positive schedule"]
        if int(self.samples) < 1:
            errors['optimization.samples'] = ["Need at least one sample"]
        if not 0 <= self.burn_in < 1:
            errors['optimization.burn_in'] = ["Burn-in fraction must lie in [0, 1)"]
        for field in ('proposal_scale', 'dr_scale'):
            if not getattr(self, field) > 0:
                errors['optimization.' + field] = ["Must be > 0"]
        if self.initial is not None and not errors and (
                self.initial.shape != (d,) or np.any(self.initial < self.lower)
                or np.any(self.initial > self.upper)):
            errors['optimization.initial'] = ["Initial point must lie inside the bounds"]
        if errors:
            raise ValidationError(errors)
        return self._replace(samples=int(self.samples),
                             penalty_schedule=tuple(float(s) for s in schedule))

    def sigma_at(self, iteration):
        """ Penalty stage and factor for an iteration. """
        stages = len(self.penalty_schedule)
        length = max(self.samples // stages, 1)
        stage = min(iteration // length, stages - 1)
        return stage, self.penalty_schedule[stage]

    def objective(self, evaluation, sigma):
        if evaluation is None:
            return np.inf
        if self.epsilon.size:
            H = penalty_objective((evaluation.purity, evaluation.target_yield), self.epsilon, sigma)
        else:
            H = -evaluation.target_yield
        if not evaluation.converged:
            H += self.nonconvergence_penalty
        return H


def reflect(theta, lower, upper):
    """ Fold a point back into the box by mirroring at the faces. """
    width = upper - lower
    folded = np.mod(theta - lower, 2 * width)
    return lower + np.where(folded > width, 2 * width - folded, folded)


class ChainSample(namedtuple('ChainSample', [
        'iteration', 'stage', 'theta', 'H', 'log_likelihood', 'purity', 'target_yield',
        'switches', 'accepted', 'sigma', 'burn_in'])):
    """ One evaluated proposal (stage 0) or delayed-rejection retry (stage 1). """
    __slots__ = ()

    @property
    def likelihood(self):
        return likelihood(self.H)


class Chain(object):
    """ Every evaluation plus the sequence of chain states. """
    def __init__(self, problem, seed):
        self.problem = problem
        self.seed = seed
        self.samples = []
        self.trajectory = []
        self.stopped_early = False

    @property
    def iterations(self):
        return len(self.trajectory)

    @property
    def acceptance_rate(self):
        """ Share of first proposals accepted. """
        first = [s for s in self.samples if s.stage == 0 and s.iteration > 0]
        return sum(s.accepted for s in first) / len(first) if first else 0.0

    def states(self, burn_in=True):
        """ Trajectory as an array, without the burn-in rows unless asked. """
        states = np.array(self.trajectory)
        return states if burn_in else states[self.problem.burn_in_samples:]

    def retained(self):
        """ Evaluations after burn-in with a finite objective. """
        return [s for s in self.samples if not s.burn_in and np.isfinite(s.H)]

    def as_dict(self):
        """ JSON-friendly form, for passing chains between processes. """
        def plain(sample):
            values = sample._asdict()
            values['theta'] = [float(v) for v in sample.theta]
            values['purity'] = None if sample.purity is None else [float(v) for v in sample.purity]
            for key in ('H', 'log_likelihood', 'target_yield', 'sigma'):
                values[key] = float(values[key])
            values['accepted'] = bool(sample.accepted)
            return values
        return {'seed': self.seed, 'stopped_early': self.stopped_early,
                'samples': [plain(s) for s in self.samples],
                'trajectory': [[float(v) for v in theta] for theta in self.trajectory]}

    @classmethod
    def from_dict(cls, problem, data):
        chain = cls(problem, data['seed'])
        chain.stopped_early = data['stopped_early']
        for values in data['samples']:
            values = dict(values, theta=np.array(values['theta']))
            if values['purity'] is not None:
                values['purity'] = np.array(values['purity'])
            chain.samples.append(ChainSample(**values))
        chain.trajectory = [np.array(theta) for theta in data['trajectory']]
        return chain


def _alpha(log_from, log_to):
    """ First-stage acceptance probability. """
    if log_to == -np.inf:
        return 0.0
    if log_from == -np.inf or log_to >= log_from:
        return 1.0
    return float(np.exp(log_to - log_from))


class MetropolisSampler(object):
    """ Random-walk Metropolis with delayed rejection and adaptive proposals.

    `evaluate(theta)` runs whatever simulation scores θ and returns an
    Evaluation. Simulation, validation and numerical failures count as
    H = inf and the chain moves on.
    """
    def __init__(self, problem, evaluate, seed=None):
        self.problem = problem
        self.evaluate = evaluate
        self.rng = np.random.default_rng(seed)
        self.seed = seed
        self._cache = {}

    def _evaluation(self, theta, iteration):
        key = hashlib.sha1(np.ascontiguousarray(theta, dtype=float).tobytes()).hexdigest()
        if key not in self._cache:
            try:
                self._cache[key] = self.evaluate(theta)
            except (SimulationError, ValidationError, ArithmeticError, ValueError,
                    RuntimeError, np.linalg.LinAlgError) as exc:
                logger.warning("Sample %d: evaluation failed at %s (%s: %s)", iteration,
                               theta, type(exc).__name__, exc)
                self._cache[key] = None
        return self._cache[key]

    def _propose(self, theta, chol, scale=1.0):
        step = chol @ self.rng.standard_normal(theta.size)
        return reflect(theta + scale * step, self.problem.lower, self.problem.upper)

    def _record(self, chain, iteration, stage, theta, evaluation, H, accepted, sigma):
        chain.samples.append(ChainSample(
            iteration=iteration, stage=stage, theta=theta.copy(), H=H,
            log_likelihood=log_likelihood(H),
            purity=None if evaluation is None else np.atleast_1d(evaluation.purity),
            target_yield=np.nan if evaluation is None else evaluation.target_yield,
            switches=None if evaluation is None else evaluation.switches,
            accepted=accepted, sigma=sigma,
            burn_in=iteration < self.problem.burn_in_samples))

    def _adapted(self, chain, chol):
        states = np.array(chain.trajectory)
        d = states.shape[1]
        cov = np.atleast_2d(np.cov(states, rowvar=False)) * ADAPTIVE_SCALING / d
        cov += np.diag((1e-6 * self.problem.width) ** 2)
        try:
            return np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            return chol

    def _log_q(self, chol, a, b):
        """ Log density (up to a constant) of stepping from a to b. """
        z = np.linalg.solve(chol, b - a)
        return -0.5 * float(z @ z)

    def __call__(self):
        p = self.problem
        chain = Chain(p, self.seed)
        theta = p.initial if p.initial is not None else (p.lower + p.upper) / 2
        theta = np.array(theta, dtype=float)
        chol = np.diag(p.proposal_scale * p.width)

        stage, sigma = p.sigma_at(0)
        current = self._evaluation(theta, 0)
        H = p.objective(current, sigma)
        self._record(chain, 0, 0, theta, current, H, True, sigma)
        chain.trajectory.append(theta.copy())

        for iteration in range(1, p.samples):
            new_stage, sigma = p.sigma_at(iteration)
            if new_stage != stage:
                stage = new_stage
                H = p.objective(current, sigma)
                logger.info("Penalty stage %d (sigma=%g) at iteration %d", stage, sigma, iteration)
            log_current = log_likelihood(H)

            proposal = self._propose(theta, chol)
            first = self._evaluation(proposal, iteration)
            H1 = p.objective(first, sigma)
            log1 = log_likelihood(H1)
            alpha1 = _alpha(log_current, log1)
            accepted = self.rng.random() < alpha1
            self._record(chain, iteration, 0, proposal, first, H1, accepted, sigma)

            if accepted:
                theta, current, H = proposal, first, H1
            else:
                retry = self._propose(theta, chol, p.dr_scale)
                second = self._evaluation(retry, iteration)
                H2 = p.objective(second, sigma)
                log2 = log_likelihood(H2)
                alpha2 = self._second_stage(chol, theta, log_current, proposal, log1,
                                            retry, log2)
                accepted = self.rng.random() < alpha2
                self._record(chain, iteration, 1, retry, second, H2, accepted, sigma)
                if accepted:
                    theta, current, H = retry, second, H2
            chain.trajectory.append(theta.copy())

            if (iteration < p.burn_in_samples and iteration >= p.adapt_start
                    and (iteration - p.adapt_start) % p.adapt_interval == 0):
                chol = self._adapted(chain, chol)

            if self._converged(chain, iteration, stage):
                logger.info("Geweke stop rule met at iteration %d", iteration)
                chain.stopped_early = True
                break
        return chain

    def _second_stage(self, chol, x, log_x, y1, log_y1, y2, log_y2):
        """ Delayed-rejection acceptance for the retry y2 after rejecting y1. """
        if log_y2 == -np.inf:
            return 0.0
        if log_x == -np.inf:
            return 1.0
        reverse = 1.0 - _alpha(log_y2, log_y1)
        if reverse <= 0:
            return 0.0
        forward = 1.0 - _alpha(log_x, log_y1)
        log_ratio = (log_y2 + self._log_q(chol, y2, y1) + np.log(reverse)
                     - log_x - self._log_q(chol, x, y1) - np.log(forward))
        return 1.0 if log_ratio >= 0 else float(np.exp(log_ratio))

    def _converged(self, chain, iteration, stage):
        p = self.problem
        if (p.geweke_tol <= 0 or stage != len(p.penalty_schedule) - 1
                or iteration < p.burn_in_samples or p.geweke_interval < 1
                or (iteration + 1) % p.geweke_interval):
            return False
        states = chain.states(burn_in=False)
        if states.shape[0] < 20:
            return False
        scores = [geweke(states[:, k], p.geweke_first, p.geweke_last)
                  for k in range(states.shape[1])]
        return max(abs(z) for z in scores) < p.geweke_tol


def mcmc_sample(problem, evaluate, seed=None):
    """ Run one chain and return it. """
    return MetropolisSampler(problem, evaluate, seed)()


def spectral_variance(x):
    """ Spectral density at frequency zero, Bartlett-windowed autocovariances. """
    x = np.asarray(x, dtype=float)
    n = x.size
    centred = x - x.mean()
    lags = int(np.floor(np.sqrt(n)))
    gamma = [float(centred[:n - k] @ centred[k:]) / n for k in range(lags + 1)]
    weights = 1 - np.arange(1, lags + 1) / (lags + 1)
    return max(gamma[0] + 2 * float(np.dot(weights, gamma[1:])), 0.0)


def geweke(chain, first=0.1, last=0.5):
    """ z-score comparing the means of the first and last parts of a chain.

    A chain with no variance scores 0 when both parts agree and inf when
    they don't.
    """
    chain = np.asarray(chain, dtype=float)
    n = chain.size
    if n < 20:
        raise ValidationError({'chain': ["Need at least 20 values, got {}".format(n)]})
    if not (0 < first < 1 and 0 < last < 1 and first + last <= 1):
        raise ValidationError({'chain': ["Fractions must be positive and sum to at most 1"]})
    a = chain[:int(first * n)]
    b = chain[n - int(last * n):]
    diff = a.mean() - b.mean()
    denom = np.sqrt(spectral_variance(a) / a.size + spectral_variance(b) / b.size)
    if denom == 0:
        return 0.0 if diff == 0 else np.inf
    return float(diff / denom)
