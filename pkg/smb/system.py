"""
Physical and operating parameters shared by every simulation.

Component index 0 is always the salt; proteins follow in the order given.
All quantities are SI (m, s, mol/m3).
"""
from collections import namedtuple
import logging

from django.core.exceptions import ValidationError
import numpy as np

from smb.exceptions import CapacityError, IntegrationError


logger = logging.getLogger(__name__)

# Below this, a concentration is an integrator undershoot to be clamped
NEGATIVE_TOLERANCE = 1e-8
# Below this, the state is considered broken
NEGATIVE_LIMIT = 1e-4


def _frozen(values):
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


class ComponentSet(namedtuple('ComponentSet', ['names'])):
    """ Labels of all components, salt first. """
    __slots__ = ()

    @property
    def M(self):
        """ Number of proteins. """
        return len(self.names) - 1

    @property
    def proteins(self):
        return self.names[1:]

    def index(self, name):
        """ Component index from a label (or pass an index through). """
        if isinstance(name, int):
            if not 0 <= name < len(self.names):
                raise ValidationError({'component': ["No component {}".format(name)]})
            return name
        try:
            return self.names.index(name)
        except ValueError:
            raise ValidationError({'component': ["Unknown component '{}'".format(name)]})


class ColumnGeometry(namedtuple('ColumnGeometry', ['L', 'd_c', 'd_p', 'eps_c', 'eps_p'])):
    __slots__ = ()

    @property
    def r_p(self):
        return self.d_p / 2

    @property
    def area(self):
        """ Column cross section [m2]. """
        return np.pi * self.d_c ** 2 / 4

    @property
    def volume(self):
        return self.area * self.L


class TransportParams(namedtuple('TransportParams',
                                 ['D_ax', 'D_p', 'k_f', 'D_p_salt', 'k_f_salt'])):
    """ Dispersion, pore diffusion and film coefficients.

    `D_p` and `k_f` hold one entry per protein. The salt uses the protein
    mean unless `D_p_salt`/`k_f_salt` override it.
    """
    __slots__ = ()

    def per_component(self):
        """ (D_p, k_f) arrays over all M+1 components. """
        d_salt = self.D_p.mean() if self.D_p_salt is None else self.D_p_salt
        k_salt = self.k_f.mean() if self.k_f_salt is None else self.k_f_salt
        return (np.concatenate([[d_salt], self.D_p]),
                np.concatenate([[k_salt], self.k_f]))


class SMABinding(namedtuple('SMABinding', ['Lambda', 'k_a', 'k_d', 'nu', 'sigma'])):
    __slots__ = ()

    def free_ligand(self, q_proteins):
        """ q̄0 = Λ - Σ (ν_i + σ_i) q_i over the trailing axis. """
        return self.Lambda - np.tensordot(q_proteins, self.nu + self.sigma, axes=([-1], [0]))

    def bound_salt(self, q_proteins):
        """ q_0 = q̄0 + Σ σ_i q_i, i.e. Λ - Σ ν_i q_i. """
        return self.Lambda - np.tensordot(q_proteins, self.nu, axes=([-1], [0]))


class SystemConfig(namedtuple('SystemConfig',
                              ['components', 'geometry', 'transport', 'binding'])):
    """ Immutable bundle of everything that describes one column type. """
    __slots__ = ()

    @property
    def M(self):
        return self.components.M

    @property
    def n_components(self):
        return self.components.M + 1

    def flowrate(self, u_int):
        """ Volumetric flow through the column for an interstitial velocity. """
        return self.geometry.eps_c * u_int * self.geometry.area

    def velocity(self, Q):
        """ Interstitial velocity for a volumetric flowrate. """
        return Q / (self.geometry.eps_c * self.geometry.area)

    @property
    def key(self):
        """ Hashable identity, used to share discretization data. """
        g, t, b = self.geometry, self.transport, self.binding
        D_p, k_f = t.per_component()
        return (tuple(self.components.names), tuple(g), t.D_ax,
                tuple(D_p), tuple(k_f), b.Lambda,
                tuple(b.k_a), tuple(b.k_d), tuple(b.nu), tuple(b.sigma))


class ColumnState(object):
    """ Discretized state of one column.

    `c` is Nz x (M+1), `c_p` and `q` are Nz x Nr x (M+1). `q[..., 0]` holds
    the bound salt, which follows from the bound proteins and is
    refreshed whenever the protein entries change.
    """
    __slots__ = ('c', 'c_p', 'q', 't')

    def __init__(self, c, c_p, q, t=0.0):
        self.c = c
        self.c_p = c_p
        self.q = q
        self.t = t

    @property
    def Nz(self):
        return self.c.shape[0]

    @property
    def Nr(self):
        return self.c_p.shape[1]

    def copy(self):
        return ColumnState(self.c.copy(), self.c_p.copy(), self.q.copy(), self.t)

    def free_ligand(self, binding):
        return binding.free_ligand(self.q[..., 1:])

    def holdup(self, config):
        """ Moles of each component inside the column (all three phases). """
        g = config.geometry
        cell_volume = g.volume / self.Nz
        # Equal-volume shells: the particle average is the plain shell mean
        per_cell = (g.eps_c * self.c
                    + (1 - g.eps_c) * (g.eps_p * self.c_p.mean(axis=1)
                                       + (1 - g.eps_p) * self.q.mean(axis=1)))
        return cell_volume * per_cell.sum(axis=0)

    def check(self, binding, where=''):
        """ Clamp integrator undershoots; complain about real violations.

        Returns the most negative value found (0 if none).
        """
        worst = min(self.c.min(), self.c_p.min(), self.q[..., 1:].min(), 0.0)
        if not np.isfinite(worst):
            raise IntegrationError("Non-finite concentration {}".format(where),
                                   time_reached=self.t)
        if worst < -NEGATIVE_LIMIT:
            raise IntegrationError("Concentration {:.3g} below limit {}".format(worst, where),
                                   time_reached=self.t)
        if worst < -NEGATIVE_TOLERANCE:
            logger.warning("Clamped negative concentration %.3g %s at t=%g",
                           worst, where, self.t)
        np.maximum(self.c, 0, out=self.c)
        np.maximum(self.c_p, 0, out=self.c_p)
        np.maximum(self.q[..., 1:], 0, out=self.q[..., 1:])
        self.q[..., 0] = binding.bound_salt(self.q[..., 1:])

        qbar0 = self.free_ligand(binding)
        if qbar0.min() < -NEGATIVE_TOLERANCE * binding.Lambda:
            raise CapacityError("Free ligand {:.3g} below zero {}".format(qbar0.min(), where))
        return worst


def _check_range(errors, field, values, low=None, high=None, low_inclusive=False):
    values = np.atleast_1d(values)
    if not np.all(np.isfinite(values)):
        errors.setdefault(field, []).append("Must be finite")
        return
    if low is not None:
        bad = values < low if low_inclusive else values <= low
        if bad.any():
            op = '>=' if low_inclusive else '>'
            errors.setdefault(field, []).append("Must be {} {}".format(op, low))
    if high is not None and (values >= high).any():
        errors.setdefault(field, []).append("Must be < {}".format(high))


def _per_protein(errors, field, values, M):
    """ Coerce a scalar or list to M entries, noting length mismatches. """
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.size == 1 and M > 1:
        arr = np.repeat(arr, M)
    if arr.size != M:
        errors.setdefault(field, []).append(
            "Expected {} entries (one per protein), got {}".format(M, arr.size))
    return arr


def validate_system(geometry, transport, binding, components):
    """ Check every invariant and return an immutable SystemConfig.

    All problems are collected and raised together, keyed by field.
    """
    errors = {}

    names = list(components.names)
    if len(names) < 2:
        errors.setdefault('components', []).append(
            "Need the salt plus at least one protein")
    if len(set(names)) != len(names):
        errors.setdefault('components', []).append("Labels must be unique")
    M = len(names) - 1

    for field in ColumnGeometry._fields:
        value = getattr(geometry, field)
        if field.startswith('eps'):
            _check_range(errors, 'geometry.' + field, value, low=0, high=1)
        else:
            _check_range(errors, 'geometry.' + field, value, low=0)

    _check_range(errors, 'transport.D_ax', transport.D_ax, low=0)
    D_p = _per_protein(errors, 'transport.D_p', transport.D_p, M)
    k_f = _per_protein(errors, 'transport.k_f', transport.k_f, M)
    _check_range(errors, 'transport.D_p', D_p, low=0)
    _check_range(errors, 'transport.k_f', k_f, low=0)
    for field in ('D_p_salt', 'k_f_salt'):
        if getattr(transport, field) is not None:
            _check_range(errors, 'transport.' + field, getattr(transport, field), low=0)

    _check_range(errors, 'binding.Lambda', binding.Lambda, low=0)
    arrays = {}
    for field in ('k_a', 'k_d', 'nu', 'sigma'):
        arr = np.atleast_1d(np.asarray(getattr(binding, field), dtype=float))
        if arr.size != M:
            errors.setdefault('binding.' + field, []).append(
                "Expected {} entries (one per protein), got {}".format(M, arr.size))
        arrays[field] = arr
    # k_a = 0 describes a non-binding component (tracer)
    _check_range(errors, 'binding.k_a', arrays['k_a'], low=0, low_inclusive=True)
    _check_range(errors, 'binding.k_d', arrays['k_d'], low=0)
    _check_range(errors, 'binding.nu', arrays['nu'], low=0)
    _check_range(errors, 'binding.sigma', arrays['sigma'], low=0, low_inclusive=True)

    if errors:
        raise ValidationError(errors)

    return SystemConfig(
        components=ComponentSet(tuple(names)),
        geometry=ColumnGeometry(*(float(v) for v in geometry)),
        transport=TransportParams(
            D_ax=float(transport.D_ax), D_p=_frozen(D_p), k_f=_frozen(k_f),
            D_p_salt=None if transport.D_p_salt is None else float(transport.D_p_salt),
            k_f_salt=None if transport.k_f_salt is None else float(transport.k_f_salt)),
        binding=SMABinding(Lambda=float(binding.Lambda),
                           **{k: _frozen(v) for k, v in arrays.items()}),
    )


def fresh_state(config, Nz, Nr, c0_init, t=0.0):
    """ Protein-free column equilibrated at salt level `c0_init`. """
    errors = {}
    if Nz < 2:
        errors['Nz'] = ["Need at least 2 axial cells"]
    if Nr < 1:
        errors['Nr'] = ["Need at least 1 radial shell"]
    if c0_init < 0:
        errors['c0_init'] = ["Salt concentration must be >= 0"]
    if errors:
        raise ValidationError(errors)

    n = config.n_components
    c = np.zeros((Nz, n))
    c_p = np.zeros((Nz, Nr, n))
    q = np.zeros((Nz, Nr, n))
    c[:, 0] = c0_init
    c_p[..., 0] = c0_init
    q[..., 0] = config.binding.Lambda
    return ColumnState(c, c_p, q, t)
