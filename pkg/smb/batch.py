"""
Single column bind-and-elute runs: load, wash, a two-step linear salt
gradient, an isocratic hold and an optional high-salt strip.

The column starts equilibrated at the load salt level.
"""
from collections import namedtuple
import logging

from django.core.exceptions import ValidationError
import numpy as np
from scipy.integrate import trapezoid

from smb.column import InletProfile, integrate_column
from smb.exceptions import EmptyPoolWindow
from smb.system import fresh_state


logger = logging.getLogger(__name__)

# Target concentrations at or below this are outside the peak
SUPPORT_THRESHOLD = 1e-10


class BatchProtocol(namedtuple('BatchProtocol', [
        'u_int', 'feed', 'load_salt', 't_load', 't_wash',
        'dt1', 'dt2', 'm1', 'm2', 'c_init0', 't_hold', 'strip_salt', 't_strip'])):
    """ Operating protocol of one batch cycle.

    `t_hold` of None means three residence times. The strip phase only runs
    when both `strip_salt` and `t_strip` are set.
    """
    __slots__ = ()

    def __new__(cls, u_int, feed, load_salt, t_load, t_wash, dt1, dt2, m1, m2, c_init0,
                t_hold=None, strip_salt=None, t_strip=0.0):
        return super().__new__(cls, u_int, np.asarray(feed, dtype=float), load_salt,
                               t_load, t_wash, dt1, dt2, m1, m2, c_init0,
                               t_hold, strip_salt, t_strip)

    @property
    def t_elute(self):
        """ Start of the gradient. """
        return self.t_load + self.t_wash

    @property
    def salt_after_first_step(self):
        return self.c_init0 + self.m1 * self.dt1

    @property
    def salt_after_second_step(self):
        return self.salt_after_first_step + self.m2 * self.dt2

    def hold_time(self, L):
        return 3 * L / self.u_int if self.t_hold is None else self.t_hold

    def duration(self, L):
        strip = self.t_strip if self.strip_salt is not None else 0.0
        return self.t_elute + self.dt1 + self.dt2 + self.hold_time(L) + strip

    def validated(self, config):
        errors = {}
        if not self.u_int > 0:
            errors['protocol.u_int'] = ["Must be > 0"]
        for field in ('t_load', 't_wash', 'dt1', 'dt2', 'm1', 'm2', 'load_salt',
                      'c_init0', 't_strip'):
            value = getattr(self, field)
            if value is None or not value >= 0:
                errors['protocol.' + field] = ["Must be >= 0"]
        if self.t_hold is not None and not self.t_hold >= 0:
            errors['protocol.t_hold'] = ["Must be >= 0"]
        if self.strip_salt is not None and not self.strip_salt >= 0:
            errors['protocol.strip_salt'] = ["Must be >= 0"]
        if self.feed.shape != (config.M,) or (self.feed < 0).any():
            errors['protocol.feed'] = ["Need {} non-negative protein concentrations".format(config.M)]
        if errors:
            raise ValidationError(errors)
        return self


def salt_program(protocol, t, L=None):
    """ Inlet salt concentration at time(s) t.

    The strip phase starts after the hold, whose default length depends on
    the column length `L`; without either, the hold runs forever.
    """
    t = np.asarray(t, dtype=float)
    p = protocol
    since = t - p.t_elute
    first = p.c_init0 + p.m1 * np.clip(since, 0, p.dt1)
    salt = first + p.m2 * np.clip(since - p.dt1, 0, p.dt2)
    salt = np.where(since < 0, p.load_salt, salt)
    if p.strip_salt is not None and p.t_strip > 0 and (L is not None or p.t_hold is not None):
        strip_start = p.t_elute + p.dt1 + p.dt2 + p.hold_time(L)
        salt = np.where(t >= strip_start, p.strip_salt, salt)
    return salt if salt.ndim else float(salt)


def protocol_inlet(protocol, config):
    """ Inlet profile of the whole cycle, restarting the integrator at every phase change. """
    p = protocol
    n = config.n_components
    loading = np.concatenate([[p.load_salt], p.feed])
    buffer = np.zeros(n)

    def salt_only(level):
        values = buffer.copy()
        values[0] = level
        return values

    segments = [
        (p.t_load, loading, loading),
        (p.t_wash, salt_only(p.load_salt), salt_only(p.load_salt)),
        (p.dt1, salt_only(p.c_init0), salt_only(p.salt_after_first_step)),
        (p.dt2, salt_only(p.salt_after_first_step), salt_only(p.salt_after_second_step)),
        (p.hold_time(config.geometry.L),
         salt_only(p.salt_after_second_step), salt_only(p.salt_after_second_step)),
    ]
    if p.strip_salt is not None and p.t_strip > 0:
        segments.append((p.t_strip, salt_only(p.strip_salt), salt_only(p.strip_salt)))

    times, values = [], []
    t = 0.0
    for length, start, end in segments:
        if length <= 0:
            continue
        times.extend([t, t + length])
        values.extend([start, end])
        t += length
    if not times:
        raise ValidationError({'protocol': ["Cycle has zero length"]})
    return InletProfile(times, values)


def simulate_batch(protocol, config, settings):
    """ Run one cycle; returns the final column state and the outlet record. """
    protocol.validated(config)
    state = fresh_state(config, settings.Nz, settings.Nr, protocol.load_salt)
    inlet = protocol_inlet(protocol, config)
    logger.debug("Batch cycle of %.0f s", inlet.t_end)
    return integrate_column(state, inlet, protocol.u_int, settings, config,
                            dt_sample=settings.dt_sample, node='B')


def run_batch(protocol, config, settings):
    """ Outlet chromatogram of one cycle. """
    _, record = simulate_batch(protocol, config, settings)
    return record


class PoolWindow(namedtuple('PoolWindow', ['t_start', 't_end', 'threshold'])):
    __slots__ = ()

    @property
    def length(self):
        return self.t_end - self.t_start


def _runs(mask):
    """ (first, last) index pairs of the True runs of a boolean array. """
    padded = np.concatenate([[False], mask, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(int)))
    return list(zip(edges[::2], edges[1::2] - 1))


def compute_pool_window(record, target, mu, support=SUPPORT_THRESHOLD):
    """ Widest-yield pooling interval for protein `target`.

    Candidates are runs of samples where every other protein is below `mu`
    and the target is present; the run holding most of the target wins.
    """
    n = record.values.shape[1]
    if not 1 <= target < n:
        raise ValidationError({'target': ["Target must be a protein index in [1, {}]".format(n - 1)]})
    if record.times.size < 2:
        raise ValidationError({'record': ["Need at least two samples"]})

    proteins = record.values[:, 1:]
    impurities = np.delete(proteins, target - 1, axis=1)
    clean = (impurities < mu).all(axis=1)
    wanted = record.values[:, target]
    mask = clean & (wanted > support)

    best, best_mass = None, 0.0
    for first, last in _runs(mask):
        if last == first:
            continue
        mass = trapezoid(wanted[first:last + 1], record.times[first:last + 1])
        if mass > best_mass:
            best, best_mass = (first, last), mass
    if best is None:
        logger.info("No pool window for component %d at mu=%g", target, mu)
        raise EmptyPoolWindow("No interval with impurities below {:g}".format(mu))
    first, last = best
    return PoolWindow(float(record.times[first]), float(record.times[last]), mu)
