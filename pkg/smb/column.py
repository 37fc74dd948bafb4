"""
General rate model of a single column with steric mass-action binding.

Method of lines:
  - bulk: cell-centred finite volumes, first-order upwind convection and
    central dispersion, Danckwerts flux at the inlet, zero gradient at the
    outlet
  - particles: equal-volume spherical shells with diffusion between shells,
    film transfer into the outer shell and no flux at the centre
  - binding: SMA kinetics, fully coupled

Each shell integrates its total concentration (pore plus bound) rather than
the pore concentration. The resulting stiff system is integrated with
scipy's BDF and an analytic sparse Jacobian.
"""
from collections import namedtuple
import logging

from django.conf import settings as django_settings
from django.core.exceptions import ValidationError
import numpy as np
from scipy import sparse
from scipy.integrate import solve_ivp

from smb.exceptions import CapacityError, IntegrationError
from smb.system import NEGATIVE_LIMIT, NEGATIVE_TOLERANCE, ColumnState


logger = logging.getLogger(__name__)


class SolverSettings(namedtuple('SolverSettings',
                                ['Nz', 'Nr', 'abstol', 'reltol', 'h0', 'hmax',
                                 'dt_sample', 'samples_per_switch'])):
    __slots__ = ()

    @classmethod
    def from_defaults(cls, **overrides):
        """ Project defaults (Django settings) with selective overrides. """
        values = dict(django_settings.SMB_SOLVER_DEFAULTS)
        unknown = set(overrides) - set(cls._fields)
        if unknown:
            raise ValidationError({'solver': ["Unknown setting(s): {}".format(
                ', '.join(sorted(unknown)))]})
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values).validated()

    def validated(self):
        errors = {}
        if int(self.Nz) < 2:
            errors['solver.Nz'] = ["Need at least 2 axial cells"]
        if int(self.Nr) < 1:
            errors['solver.Nr'] = ["Need at least 1 radial shell"]
        for field in ('abstol', 'reltol', 'h0', 'dt_sample'):
            if not getattr(self, field) > 0:
                errors['solver.' + field] = ["Must be > 0"]
        if not self.hmax >= self.h0:
            errors['solver.hmax'] = ["Must be >= h0"]
        if int(self.samples_per_switch) < 2:
            errors['solver.samples_per_switch'] = ["Need at least 2 samples"]
        if errors:
            raise ValidationError(errors)
        return self._replace(Nz=int(self.Nz), Nr=int(self.Nr),
                             samples_per_switch=int(self.samples_per_switch))


def sample_times(t_start, t_end, dt):
    """ Uniform grid with floor((t_end - t_start)/dt) + 1 points. """
    span = t_end - t_start
    n = int(np.floor(span / dt + 1e-9)) + 1
    times = t_start + dt * np.arange(n)
    # Land exactly on the end point when the grid divides the span
    if n > 1 and abs(times[-1] - t_end) <= 1e-9 * max(dt, abs(t_end)):
        times[-1] = t_end
    return times


class OutletRecord(namedtuple('OutletRecord', ['times', 'values', 'dt', 'node'])):
    """ Outlet concentrations sampled on a uniform grid (one row per time). """
    __slots__ = ()

    @property
    def t_start(self):
        return self.times[0]

    @property
    def t_end(self):
        return self.times[-1]

    def relabel(self, node):
        return self._replace(node=node)

    def component(self, index):
        return self.values[:, index]


class InletProfile(object):
    """ Piecewise-linear inlet concentrations over a time interval.

    Knots are given as `times` (non-decreasing) and `values` (one row of
    M+1 concentrations per knot). A repeated time is a jump: the profile is
    right-continuous there, and the integrator restarts at the jump.
    """
    def __init__(self, times, values):
        times = np.asarray(times, dtype=float)
        values = np.atleast_2d(np.asarray(values, dtype=float))
        if times.ndim != 1 or times.size < 1 or values.shape[0] != times.size:
            raise ValidationError({'inlet': ["Need one row of values per knot"]})
        if np.any(np.diff(times) < 0):
            raise ValidationError({'inlet': ["Knot times must be non-decreasing"]})
        if not np.all(np.isfinite(values)):
            raise ValidationError({'inlet': ["Inlet values must be finite"]})
        if values.min() < -NEGATIVE_LIMIT:
            raise ValidationError({'inlet': ["Inlet concentrations must be >= 0"]})
        self.times = times
        self.values = np.maximum(values, 0)

        cuts = list(np.flatnonzero(np.diff(times) == 0) + 1)
        bounds = zip([0] + cuts, cuts + [times.size])
        self._pieces = [(times[a], times[b - 1],
                         self._piece_function(times[a:b], self.values[a:b]))
                        for a, b in bounds]

    @classmethod
    def constant(cls, values, t_start, t_end):
        return cls([t_start, t_end], [values, values])

    @classmethod
    def from_record(cls, record, values=None):
        """ Interpolant through a sampled record (optionally transformed). """
        values = record.values if values is None else values
        return cls(record.times, values)

    @property
    def t_start(self):
        return self.times[0]

    @property
    def t_end(self):
        return self.times[-1]

    @property
    def n_components(self):
        return self.values.shape[1]

    def covers(self, t_start, t_end):
        tol = 1e-9 * max(1.0, abs(t_end))
        return self.t_start <= t_start + tol and self.t_end >= t_end - tol

    @staticmethod
    def _piece_function(knot_times, knot_values):
        if knot_times.size == 1:
            const = knot_values[0]
            return lambda t: const
        slopes = np.diff(knot_values, axis=0) / np.diff(knot_times)[:, None]
        first, end, last = knot_times[0], knot_times[-1], knot_times.size - 2

        def evaluate(t):
            i = min(max(int(np.searchsorted(knot_times, t, side='right')) - 1, 0), last)
            return knot_values[i] + slopes[i] * (min(max(t, first), end) - knot_times[i])
        return evaluate

    def pieces(self, t_start, t_end):
        """ Yield (a, b, f) continuous sub-intervals clipped to [t_start, t_end]. """
        for first, end, function in self._pieces:
            a = max(first, t_start)
            b = min(end, t_end)
            if b > a:
                yield a, b, function

    def __call__(self, t):
        """ Inlet concentrations at time t (right-continuous at jumps). """
        for first, _, function in reversed(self._pieces):
            if t >= first:
                return function(t)
        return self.values[0]


def sma_rates(c_p, q_proteins, binding):
    """ SMA adsorption minus desorption rates for all proteins; trailing axis is the component. """
    qbar0 = np.maximum(binding.free_ligand(q_proteins), 0)
    salt = np.maximum(c_p[..., 0], 0)
    adsorption = binding.k_a * c_p[..., 1:] * qbar0[..., None] ** binding.nu
    desorption = binding.k_d * q_proteins * salt[..., None] ** binding.nu
    return adsorption - desorption


def sma_flux(c_p, q, binding):
    """ Bound-phase rates for one or many cells.

    `c_p` and `q` carry M+1 entries on their trailing axis (salt first).
    Returns the protein rates and the bound salt q_0 = Λ - Σ ν_i q_i.
    """
    c_p = np.asarray(c_p, dtype=float)
    q_proteins = np.asarray(q, dtype=float)[..., 1:]
    qbar0 = binding.free_ligand(q_proteins)
    if np.min(qbar0) < -NEGATIVE_TOLERANCE * binding.Lambda:
        raise CapacityError("Free ligand {:.3g} is negative".format(np.min(qbar0)))
    return sma_rates(c_p, q_proteins, binding), binding.bound_salt(q_proteins)


def _power_slope(x, nu):
    """ d(x^ν)/dx for a base clipped at zero. """
    positive = x > 0
    safe = np.where(positive, x, 1.0)
    return np.where(positive, nu * safe ** (nu - 1), 0.0)


class ColumnModel(object):
    """ Discretization of one column type on an Nz x Nr grid.

    The state vector is [c (Nz x n), w (Nz x Nr x n), q (Nz x Nr x M)]
    with n = M + 1. `w` is the total shell concentration
    ε_p c_p + (1 - ε_p) q (bound salt included), so binding terms only
    appear in the q rows. The pore concentration is recovered with `pore`.
    """
    _cache = {}

    def __init__(self, config, Nz, Nr):
        self.config = config
        self.Nz, self.Nr = Nz, Nr
        self.n = n = config.n_components
        self.M = M = config.M
        self.sizes = (Nz * n, Nz * Nr * n, Nz * Nr * M)
        self.offsets = np.cumsum((0,) + self.sizes)
        self.size = int(self.offsets[-1])

        g = config.geometry
        self.h = g.L / Nz
        self.D_ax = config.transport.D_ax
        D_p, k_f = config.transport.per_component()

        # Equal-volume shells: r_k = r_p (k / Nr)^(1/3)
        edges = g.r_p * (np.arange(Nr + 1) / Nr) ** (1.0 / 3)
        centres = (edges[:-1] + edges[1:]) / 2
        area = 3 * edges ** 2 / g.r_p ** 3  # Shell surface per particle volume
        self.pore_coupling = (g.eps_p * D_p[None, :] * area[1:-1, None]
                              / np.diff(centres)[:, None])

        # Film and the outer half shell in series (flux continuity at r_p)
        self.k_eff = 1.0 / (1.0 / k_f + (g.r_p - centres[-1]) / (g.eps_p * D_p))
        self.surface = 3.0 / g.r_p
        self.film_to_bulk = (1 - g.eps_c) / g.eps_c * self.surface
        self.eps_p = g.eps_p

        # Linear part of c_p as a function of [w, q] in one shell
        a, b = 1.0 / g.eps_p, (1 - g.eps_p) / g.eps_p
        nu = np.asarray(config.binding.nu, dtype=float)
        P = np.zeros((n, n + M))
        P[np.arange(n), np.arange(n)] = a
        P[0, n:] = b * nu
        P[np.arange(1, n), n + np.arange(M)] = -b
        self.shell_map = P

        ic = np.arange(Nz * n).reshape(Nz, n)
        iw = self.offsets[1] + np.arange(Nz * Nr * n).reshape(Nz, Nr, n)
        iq = self.offsets[2] + np.arange(Nz * Nr * M).reshape(Nz, Nr, M)
        self.indices = ic, iw, iq
        self.local = np.concatenate([iw, iq], axis=2)

        self.outlet = slice((Nz - 1) * n, Nz * n)
        self._transport_parts = self._linear_parts()
        self._transport = (None, None)

    @classmethod
    def for_config(cls, config, Nz, Nr):
        key = (config.key, Nz, Nr)
        model = cls._cache.get(key)
        if model is None:
            model = cls._cache[key] = cls(config, Nz, Nr)
        return model

    def _matrix(self, blocks):
        rows, cols, vals = [], [], []
        for r, c, v in blocks:
            r, c, v = np.broadcast_arrays(r, c, v)
            rows.append(r.ravel())
            cols.append(c.ravel())
            vals.append(v.ravel())
        entries = (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols)))
        matrix = sparse.coo_matrix(entries, shape=(self.size, self.size)).tocsc()
        matrix.eliminate_zeros()
        return matrix

    def _linear_parts(self):
        """ Transport Jacobian as T0 + u T1 (convection is the only u term). """
        Nz, Nr = self.Nz, self.Nr
        ic, iw, _ = self.indices
        local, P = self.local, self.shell_map
        h, D = self.h, self.D_ax
        z = np.arange(Nz)[:, None]

        dispersion = D / h ** 2
        bulk_diag = (-dispersion * ((z >= 1).astype(float) + (z <= Nz - 2))
                     - self.film_to_bulk * self.k_eff[None, :])

        own = np.zeros((Nr, self.n))
        if Nr > 1:
            own[:-1] -= self.pore_coupling
            own[1:] -= self.pore_coupling
        own[-1] -= self.surface * self.k_eff
        own *= Nr

        blocks = [
            (ic, ic, bulk_diag),
            (ic[1:], ic[:-1], dispersion),
            (ic[:-1], ic[1:], dispersion),
            # Film: bulk against the outer shell and back
            (ic[:, :, None], local[:, -1, None, :],
             self.film_to_bulk * self.k_eff[:, None] * P),
            (iw[:, -1, :], ic, Nr * self.surface * self.k_eff),
            (iw[..., None], local[:, :, None, :], own[:, :, None] * P),
        ]
        if Nr > 1:
            coupling = Nr * self.pore_coupling[:, :, None] * P
            blocks.append((iw[:, :-1, :, None], local[:, 1:, None, :], coupling))
            blocks.append((iw[:, 1:, :, None], local[:, :-1, None, :], coupling))
        T0 = self._matrix(blocks)
        T1 = self._matrix([(ic, ic, -1.0 / h), (ic[1:], ic[:-1], 1.0 / h)])
        return T0, T1

    def _binding_block(self, w, q_proteins):
        binding, P, n = self.config.binding, self.shell_map, self.n
        c_p = self.pore(w, q_proteins)
        ligand = np.maximum(binding.free_ligand(q_proteins), 0)[..., None]
        salt = np.maximum(c_p[..., 0], 0)[..., None]

        adsorb = binding.k_a * ligand ** binding.nu
        desorb = -binding.k_d * q_proteins * _power_slope(salt, binding.nu)
        values = (adsorb[..., None] * P[None, None, 1:, :]
                  + desorb[..., None] * P[0][None, None, None, :])
        steric = binding.k_a * c_p[..., 1:] * _power_slope(ligand, binding.nu)
        values[..., n:] -= steric[..., None] * (binding.nu + binding.sigma)
        diag = np.arange(self.M)
        values[..., diag, n + diag] -= binding.k_d * salt ** binding.nu

        _, _, iq = self.indices
        return self._matrix([(iq[..., None], self.local[:, :, None, :], values)])

    def jacobian(self, u):
        """ Analytic sparse Jacobian callable for velocity `u`. """
        cached_u, transport = self._transport
        if cached_u != u:
            T0, T1 = self._transport_parts
            transport = (T0 + u * T1).tocsc()
            self._transport = (u, transport)

        def jac(t, y):
            _, w, q_proteins = self.unpack(y)
            return transport + self._binding_block(w, q_proteins)
        return jac

    def pore(self, w, q_proteins):
        """ Pore concentrations from the total shell concentrations. """
        return (w - (1 - self.eps_p) * self.bound_phase(q_proteins)) / self.eps_p

    def bound_phase(self, q_proteins):
        """ Bound concentrations with the bound salt in front. """
        return np.concatenate([self.config.binding.bound_salt(q_proteins)[..., None],
                               q_proteins], axis=-1)

    def pack(self, state):
        q_proteins = state.q[..., 1:]
        w = self.eps_p * state.c_p + (1 - self.eps_p) * self.bound_phase(q_proteins)
        return np.concatenate([state.c.ravel(), w.ravel(), q_proteins.ravel()])

    def unpack(self, y):
        a, b, c = self.offsets[1:]
        return (y[:a].reshape(self.Nz, self.n),
                y[a:b].reshape(self.Nz, self.Nr, self.n),
                y[b:c].reshape(self.Nz, self.Nr, self.M))

    def derivatives(self, c, c_p, q_proteins, c_in, u):
        """ Time derivatives of the bulk, total shell and bound protein phases. """
        faces = np.empty((self.Nz + 1, self.n))
        faces[0] = u * c_in  # Danckwerts: total inlet flux is convective
        faces[1:-1] = u * c[:-1] - self.D_ax * (c[1:] - c[:-1]) / self.h
        faces[-1] = u * c[-1]
        film = self.k_eff * (c - c_p[:, -1, :])
        dc = (faces[:-1] - faces[1:]) / self.h - self.film_to_bulk * film

        net = np.zeros_like(c_p)
        if self.Nr > 1:
            inward = self.pore_coupling * (c_p[:, 1:, :] - c_p[:, :-1, :])
            net[:, :-1, :] += inward
            net[:, 1:, :] -= inward
        net[:, -1, :] += self.surface * film
        dw = self.Nr * net
        dq = sma_rates(c_p, q_proteins, self.config.binding)
        return dc, dw, dq

    def rhs(self, inlet_fn, u):
        def fun(t, y):
            c, w, q_proteins = self.unpack(y)
            dc, dw, dq = self.derivatives(c, self.pore(w, q_proteins), q_proteins, inlet_fn(t), u)
            return np.concatenate([dc.ravel(), dw.ravel(), dq.ravel()])
        return fun


def assemble_rhs(state, c_in, u_int, config):
    """ Derivatives of every state entry, returned as a ColumnState.

    The bound-salt slot of `q` carries dq_0/dt = -Σ ν_i dq_i/dt.
    """
    if not u_int > 0:
        raise ValidationError({'u_int': ["Interstitial velocity must be > 0"]})
    for phase in (state.c, state.c_p, state.q):
        if not np.all(np.isfinite(phase)):
            raise IntegrationError("Non-finite state", time_reached=state.t)

    model = ColumnModel.for_config(config, state.Nz, state.Nr)
    dc, dw, dq = model.derivatives(state.c, state.c_p, state.q[..., 1:],
                                   np.asarray(c_in, dtype=float), u_int)
    dq_all = np.empty_like(state.q)
    dq_all[..., 1:] = dq
    dq_all[..., 0] = -np.tensordot(dq, config.binding.nu, axes=([-1], [0]))
    dc_p = (dw - (1 - model.eps_p) * dq_all) / model.eps_p
    return ColumnState(dc, dc_p, dq_all, 0.0)


def _clean_outlet(values, t):
    low = values.min() if values.size else 0.0
    if low < -NEGATIVE_LIMIT:
        raise IntegrationError("Outlet concentration {:.3g} below limit".format(low),
                               time_reached=t)
    if low < -NEGATIVE_TOLERANCE:
        logger.warning("Clamped negative outlet concentration %.3g", low)
    return np.maximum(values, 0)


def integrate_column(state, inlet, u_int, settings, config, t_end=None,
                     dt_sample=None, node=None):
    """ Advance `state` (in place) to `t_end` and sample the outlet.

    `t_end` defaults to the end of the inlet profile; `dt_sample` defaults
    to the solver settings' batch spacing.
    """
    t_start = state.t
    t_end = inlet.t_end if t_end is None else t_end
    dt_sample = settings.dt_sample if dt_sample is None else dt_sample
    if not u_int > 0:
        raise ValidationError({'u_int': ["Interstitial velocity must be > 0"]})
    if not t_end > t_start:
        raise ValidationError({'t_end': ["Integration interval must be positive"]})
    if not inlet.covers(t_start, t_end):
        raise ValidationError({'inlet': ["Inlet defined on [{:g}, {:g}], need [{:g}, {:g}]".format(
            inlet.t_start, inlet.t_end, t_start, t_end)]})
    if inlet.n_components != config.n_components:
        raise ValidationError({'inlet': ["Expected {} components".format(config.n_components)]})

    model = ColumnModel.for_config(config, state.Nz, state.Nr)
    times = sample_times(t_start, t_end, dt_sample)
    outlet = np.empty((times.size, config.n_components))
    y = model.pack(state)
    jac = model.jacobian(u_int)

    pieces = list(inlet.pieces(t_start, t_end))
    for number, (a, b, inlet_fn) in enumerate(pieces):
        last = number == len(pieces) - 1
        in_piece = (times >= a) & ((times <= b) if last else (times < b))
        t_eval = times[in_piece]
        if not t_eval.size or t_eval[-1] < b:
            t_eval = np.append(t_eval, b)
        try:
            sol = solve_ivp(model.rhs(inlet_fn, u_int), (a, b), y, method='BDF',
                            t_eval=t_eval, jac=jac,
                            atol=settings.abstol, rtol=settings.reltol,
                            first_step=min(settings.h0, b - a),
                            max_step=settings.hmax)
        except (ValueError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
            raise IntegrationError("Integrator aborted: {}".format(exc), time_reached=a)
        if sol.status != 0 or not np.all(np.isfinite(sol.y[:, -1])):
            reached = sol.t[-1] if len(sol.t) else a
            raise IntegrationError(sol.message, time_reached=reached)

        n_samples = int(in_piece.sum())
        outlet[in_piece] = sol.y[model.outlet, :n_samples].T
        y = sol.y[:, -1]

    c, w, q_proteins = model.unpack(y)
    state.c = c.copy()
    state.c_p = model.pore(w, q_proteins)
    state.q = np.empty_like(state.c_p)
    state.q[..., 1:] = q_proteins
    state.t = t_end
    state.check(config.binding, where='after integration')

    record = OutletRecord(times, _clean_outlet(outlet, t_end), dt_sample, node)
    return state, record
