"""
SMB process topologies and the switch-by-switch simulation of a column ring.

Three layouts are supported: a four-zone loop, a cascade of two four-zone
loops (the first unit's raffinate is diluted into the second unit's feed),
and an integrated eight-zone loop (raffinate I is diluted into feed II).

Columns are numbered along the direction of flow; node j sits after column
j. Port roles advance one column downstream with every switch. Within a
switch the columns of a loop are solved one after another, starting just
downstream of the desorbent inlet. The stream closing the loop is taken
from the previous switch (weak coupling).

Which outlet carries which protein is stated by the configuration. The usual
rule of thumb for choosing a layout compares the equilibrium constants
k_a/k_d of the proteins (the intermediate one is the center cut) but the code
never picks a layout by itself.
"""
from collections import defaultdict, namedtuple
import logging
from math import gcd

from django.core.exceptions import ValidationError
import numpy as np
from scipy.integrate import trapezoid

from smb.column import InletProfile, OutletRecord, integrate_column, sample_times
from smb.exceptions import FlowBalanceError, IntegrationError
from smb.system import fresh_state


logger = logging.getLogger(__name__)

FOUR_ZONE = 'four-zone'
CASCADE = 'cascade'
EIGHT_ZONE = 'eight-zone'
SCHEME_KINDS = (FOUR_ZONE, CASCADE, EIGHT_ZONE)

# (zone, port right after the zone) in flow order
LAYOUTS = {
    FOUR_ZONE: (('I', 'E'), ('II', 'F'), ('III', 'R'), ('IV', 'D')),
    EIGHT_ZONE: (('I', 'E1'), ('II', 'F1'), ('III', 'R1'), ('IV', 'D2'),
                 ('V', 'E2'), ('VI', 'F2'), ('VII', 'R2'), ('VIII', 'D1')),
}

FEED = 'feed'
DESORBENT = 'desorbent'
RAFFINATE = 'raffinate'
EXTRACT = 'extract'
BYPASS = 'bypass'
PORT_KINDS = {'F': FEED, 'D': DESORBENT, 'R': RAFFINATE, 'E': EXTRACT}
INLETS = (FEED, DESORBENT, BYPASS)
WITHDRAWALS = (RAFFINATE, EXTRACT)

# Relative tolerance on every flow balance
FLOW_TOLERANCE = 1e-12


class NodeRole(namedtuple('NodeRole', ['kind', 'name', 'flowrate', 'composition',
                                       'source', 'buffer_salt', 'salt_setpoint'])):
    """ What happens at a node: an inlet, a withdrawal, or nothing.

    `composition` holds M+1 inlet concentrations (feed/desorbent), possibly
    time-resolved (one row per sample). A bypass feed draws from the
    withdrawal node named by `source` and dilutes it to `flowrate`.
    """
    __slots__ = ()

    @property
    def is_inlet(self):
        return self.kind in INLETS

    @property
    def is_withdrawal(self):
        return self.kind in WITHDRAWALS


NONE = NodeRole(None, None, 0.0, None, None, None, None)


class Loop(namedtuple('Loop', ['name', 'zones', 'zone_flows', 'column_zone',
                               'roles', 'zone_salt'])):
    """ One closed ring of columns, described at switch 0.

    `column_zone[j]` is the zone index of column j and `roles[j]` the role of
    node j (after column j), both before any switching.
    """
    __slots__ = ()

    @property
    def N(self):
        return len(self.roles)

    def role_at(self, node, offset):
        return self.roles[(node - offset) % self.N]

    def zone_at(self, column, offset):
        return self.column_zone[(column - offset) % self.N]

    def flow_at(self, column, offset):
        return self.zone_flows[self.zone_at(column, offset)]

    def port_node(self, name, offset):
        initial = next(j for j, role in enumerate(self.roles) if role.name == name)
        return (initial + offset) % self.N

    def port(self, name):
        return next(role for role in self.roles if role.name == name)

    @property
    def ports(self):
        return [role for role in self.roles if role.kind is not None]

    def flow_order(self, offset):
        """ Column indices in solution order, starting after the (first) desorbent. """
        desorbent = next(role for role in self.roles if role.kind == DESORBENT
                         and role.name in ('D', 'D1'))
        first = (self.port_node(desorbent.name, offset) + 1) % self.N
        return [(first + k) % self.N for k in range(self.N)]


class ProcessScheme(namedtuple('ProcessScheme', ['kind', 'loops', 't_s', 'feed'])):
    """ Validated topology; `feed` is the fresh protein composition. """
    __slots__ = ()

    @property
    def N(self):
        return sum(loop.N for loop in self.loops)

    @property
    def period(self):
        """ Number of switches after which every port is back in place. """
        period = 1
        for loop in self.loops:
            period = period * loop.N // gcd(period, loop.N)
        return period

    def node_id(self, loop, port_name):
        if len(self.loops) == 1:
            return port_name
        return '{}.{}'.format(loop.name, port_name)

    def iter_ports(self):
        for loop in self.loops:
            for role in loop.ports:
                yield self.node_id(loop, role.name), loop, role

    def port(self, node_id):
        for candidate, _, role in self.iter_ports():
            if candidate == node_id:
                return role
        raise ValidationError({'scheme': ["Unknown node '{}'".format(node_id)]})

    @property
    def bypass_sources(self):
        return {role.source for _, _, role in self.iter_ports() if role.kind == BYPASS}

    def external_withdrawals(self):
        """ Withdrawal nodes whose stream leaves the process. """
        sources = self.bypass_sources
        return [node for node, _, role in self.iter_ports()
                if role.is_withdrawal and node not in sources]

    def fresh_feeds(self):
        return [(node, role) for node, _, role in self.iter_ports() if role.kind == FEED]


def node_balance(c_out, Q_up, role, Q_down):
    """ Concentrations entering the downstream column of a node.

    `c_out` may be a single vector or one row per time sample. Withdrawals
    only split the flow, so the concentrations pass through unchanged.
    """
    if not Q_down > 0:
        raise FlowBalanceError("Downstream flowrate must be positive, got {!r}".format(Q_down))
    c_out = np.asarray(c_out, dtype=float)

    if role.kind in (FEED, DESORBENT):
        expected = Q_up + role.flowrate
    elif role.kind in WITHDRAWALS:
        expected = Q_up - role.flowrate
    elif role.kind is None:
        expected = Q_up
    else:
        raise ValidationError({'role': ["Resolve bypass roles with dilute_bypass first"]})

    if abs(Q_down - expected) > FLOW_TOLERANCE * max(abs(Q_down), abs(Q_up)):
        raise FlowBalanceError("Node '{}' is unbalanced: {!r} in, {!r} out".format(
            role.name, expected, Q_down))

    if role.kind in WITHDRAWALS or role.kind is None:
        return c_out.copy()
    return (c_out * Q_up + role.flowrate * np.asarray(role.composition)) / Q_down


def dilute_bypass(c_out, Q_source, Q_target, buffer_salt=0.0, salt_setpoint=None):
    """ Make up a withdrawn stream to a larger flowrate with buffer.

    Proteins are diluted by Q_source/Q_target. The buffer carries
    `buffer_salt`, unless `salt_setpoint` is given: then the buffer salt is
    chosen so the mixture reaches the setpoint (never below zero).
    """
    if not Q_source > 0:
        raise FlowBalanceError("Bypass source flowrate must be positive")
    if Q_target < Q_source:
        raise FlowBalanceError("Bypass cannot concentrate: target {!r} < source {!r}".format(
            Q_target, Q_source))
    c_out = np.asarray(c_out, dtype=float)
    Q_dilute = Q_target - Q_source

    diluted = c_out * (Q_source / Q_target)
    if salt_setpoint is not None and Q_dilute > 0:
        buffer_salt = np.maximum(
            (salt_setpoint * Q_target - c_out[..., 0] * Q_source) / Q_dilute, 0)
    diluted[..., 0] = (c_out[..., 0] * Q_source + buffer_salt * Q_dilute) / Q_target
    return diluted


def _port_flows(flows, layout, where):
    """ Port flowrates in layout order, deriving at most one missing entry. """
    errors = {}
    ports = [port for _, port in layout]
    known = set(['Q_' + p for p in ports] + ['Q_I'])
    unknown = set(flows) - known
    if unknown:
        errors[where] = ["Unknown flow(s): {}".format(', '.join(sorted(unknown)))]
    if flows.get('Q_I') is None:
        errors[where + '.Q_I'] = ["Recycle flowrate Q_I is required"]
    missing = [p for p in ports if flows.get('Q_' + p) is None]
    if len(missing) > 1:
        errors[where] = ["At most one port flow may be derived, missing {}".format(
            ', '.join(missing))]
    for port in ports:
        value = flows.get('Q_' + port)
        if value is not None and value < 0:
            errors[where + '.Q_' + port] = ["Flowrate must be >= 0"]
    if errors:
        raise ValidationError(errors)

    sign = {p: (1 if PORT_KINDS[p[0]] in (FEED, DESORBENT) else -1) for p in ports}
    values = {p: float(flows['Q_' + p]) for p in ports if p not in missing}
    if missing:
        port = missing[0]
        derived = -sign[port] * sum(sign[p] * v for p, v in values.items())
        if derived < 0:
            raise ValidationError({where + '.Q_' + port: [
                "Derived flowrate {:.4g} is negative".format(derived)]})
        values[port] = derived
    else:
        imbalance = sum(sign[p] * v for p, v in values.items())
        scale = max(values.values()) if values else 0.0
        if abs(imbalance) > FLOW_TOLERANCE * max(scale, float(flows['Q_I'])):
            raise ValidationError({where: [
                "Inconsistent closed-loop balance: inflow exceeds outflow by {:.4g}".format(
                    imbalance)]})
    return values, sign


def _build_loop(name, layout, counts, flows, salts, feed, where,
                source=None, buffer_salt=0.0, salt_setpoint=False):
    values, sign = _port_flows(flows, layout, where)

    errors = {}
    zone_flows = [float(flows['Q_I'])]
    for zone, port in layout[:-1]:
        zone_flows.append(zone_flows[-1] + sign[port] * values[port])
    for (zone, _), Q in zip(layout, zone_flows):
        if not Q > 0:
            errors['{}.zone {}'.format(where, zone)] = [
                "Zone {} flowrate {:.4g} is not positive".format(zone, Q)]

    inlet_ports = [port for _, port in layout if sign[port] > 0]
    for port in inlet_ports:
        level = salts.get('c_' + port)
        if level is None or level < 0:
            errors['{}.salt.c_{}'.format(where, port)] = ["Salt level must be given and >= 0"]
    unknown = set(salts) - {'c_' + port for port in inlet_ports}
    if unknown:
        errors[where + '.salt'] = ["Unknown salt level(s): {}".format(', '.join(sorted(unknown)))]
    if errors:
        raise ValidationError(errors)

    n_zones = len(layout)
    roles, column_zone, zone_salt = [], [], [None] * n_zones
    # Zone salt follows the nearest inlet upstream of the zone
    salt = salts['c_' + layout[-1][1]]
    for z, (zone, port) in enumerate(layout):
        zone_salt[z] = salt
        for k in range(counts[z]):
            column_zone.append(z)
            roles.append(NONE)
        kind = PORT_KINDS[port[0]]
        Q = values[port]
        if kind == FEED and source is not None and port == source[1]:
            role = NodeRole(BYPASS, port, Q, None, source[0], buffer_salt,
                            salts['c_' + port] if salt_setpoint else None)
        elif kind == FEED:
            composition = np.concatenate([[salts['c_' + port]], feed])
            role = NodeRole(FEED, port, Q, composition, None, None, None)
        elif kind == DESORBENT:
            composition = np.zeros(len(feed) + 1)
            composition[0] = salts['c_' + port]
            role = NodeRole(DESORBENT, port, Q, composition, None, None, None)
        else:
            role = NodeRole(kind, port, Q, None, None, None, None)
        roles[-1] = role
        if sign[port] > 0:
            salt = salts['c_' + port]

    return Loop(name, tuple(zone for zone, _ in layout), tuple(zone_flows),
                tuple(column_zone), tuple(roles), tuple(zone_salt))


def build_scheme(kind, columns_per_zone, flows, t_s, salts, feed,
                 buffer_salt=0.0, salt_setpoint=False):
    """ Validated ProcessScheme.

    `flows` and `salts` are dicts for a single loop, or lists of two dicts
    (U1, U2) for the cascade. Flow keys are 'Q_I' plus 'Q_<port>' (one
    withdrawal may be None and is derived from the loop balance); salt keys
    are 'c_<inlet port>'. `feed` is the fresh protein composition.
    """
    if kind not in SCHEME_KINDS:
        raise ValidationError({'scheme.kind': ["Expected one of {}".format(', '.join(SCHEME_KINDS))]})
    if not t_s > 0:
        raise ValidationError({'scheme.switch_time': ["Switching time must be > 0"]})
    feed = np.asarray(feed, dtype=float)
    if feed.ndim != 1 or (feed < 0).any():
        raise ValidationError({'scheme.feed': ["Feed must list one non-negative value per protein"]})

    layout = LAYOUTS[EIGHT_ZONE if kind == EIGHT_ZONE else FOUR_ZONE]
    counts = ([int(columns_per_zone)] * len(layout) if np.isscalar(columns_per_zone)
              else [int(n) for n in columns_per_zone])
    if len(counts) != len(layout) or min(counts) < 1:
        raise ValidationError({'scheme.columns_per_zone': [
            "Need {} zone sizes, each >= 1".format(len(layout))]})

    if kind == CASCADE:
        if not (isinstance(flows, (list, tuple)) and len(flows) == 2
                and isinstance(salts, (list, tuple)) and len(salts) == 2):
            raise ValidationError({'scheme.units': ["A cascade needs exactly two units"]})
        loops = (
            _build_loop('U1', layout, counts, flows[0], salts[0], feed, 'scheme.units.U1'),
            _build_loop('U2', layout, counts, flows[1], salts[1], feed, 'scheme.units.U2',
                        source=('U1.R', 'F'), buffer_salt=buffer_salt,
                        salt_setpoint=salt_setpoint),
        )
    else:
        if isinstance(flows, (list, tuple)):
            if len(flows) != 1:
                raise ValidationError({'scheme.units': ["A {} scheme has one unit".format(kind)]})
            flows, salts = flows[0], salts[0]
        source = ('R1', 'F2') if kind == EIGHT_ZONE else None
        loops = (_build_loop('U1', layout, counts, flows, salts, feed, 'scheme.units.U1',
                             source=source, buffer_salt=buffer_salt,
                             salt_setpoint=salt_setpoint),)

    scheme = ProcessScheme(kind, loops, float(t_s), feed)
    for node, _, role in scheme.iter_ports():
        if role.kind == BYPASS:
            Q_source = scheme.port(role.source).flowrate
            if role.flowrate < Q_source:
                raise ValidationError({'scheme': [
                    "Bypass into {} ({:.4g}) is smaller than its source {} ({:.4g})".format(
                        node, role.flowrate, role.source, Q_source)]})
            if not Q_source > 0:
                raise ValidationError({'scheme': ["Bypass source {} has no flow".format(role.source)]})
    return scheme


LEDGER_KEYS = ('fed', 'withdrawn', 'recycle_in', 'recycle_out')


class SMBState(object):
    """ Column states of every loop plus what has left the process so far. """
    def __init__(self, columns, n_components):
        self.columns = columns  # Loop name -> list of ColumnState
        self.offset = 0
        self.switch = 0
        self.t = 0.0
        self.records = defaultdict(list)  # Withdrawal node -> one record per switch
        self.recycle = {}  # Loop name -> outlet closing the loop, previous switch
        self.outlets = {}  # (loop, column) -> outlet during the last switch
        self.ledger = {key: np.zeros(n_components) for key in LEDGER_KEYS}

    def holdup(self, config):
        return sum(state.holdup(config)
                   for states in self.columns.values() for state in states)

    def last_records(self):
        return {node: records[-1] for node, records in self.records.items()}


def initialize_smb(scheme, config, settings):
    """ Protein-free columns, salt set by the nearest upstream inlet. """
    columns = {}
    for loop in scheme.loops:
        columns[loop.name] = [
            fresh_state(config, settings.Nz, settings.Nr, loop.zone_salt[loop.zone_at(j, 0)])
            for j in range(loop.N)
        ]
    return SMBState(columns, config.n_components)


def _integral(record, Q):
    return Q * trapezoid(record.values, record.times, axis=0)


def advance_switch(state, scheme, settings, config):
    """ Integrate every column over one switching interval, then move the ports. """
    t_start, t_end = state.t, state.t + scheme.t_s
    dt = scheme.t_s / settings.samples_per_switch
    times = sample_times(t_start, t_end, dt)
    offset = state.offset
    withdrawn = {}

    for loop in scheme.loops:
        columns = state.columns[loop.name]
        order = loop.flow_order(offset)

        upstream = state.recycle.get(loop.name)
        if upstream is None:
            # Nothing computed yet: hold the closing column's initial outlet
            closing = columns[order[-1]].c[-1]
            upstream = OutletRecord(times, np.tile(closing, (times.size, 1)), dt, None)
        else:
            upstream = upstream._replace(times=times)
        state.ledger['recycle_in'] += _integral(upstream, loop.flow_at(order[-1], offset))

        for column in order:
            node = (column - 1) % loop.N
            role = loop.role_at(node, offset)
            Q_up = loop.flow_at(node, offset)
            Q_down = loop.flow_at(column, offset)
            node_id = scheme.node_id(loop, role.name) if role.kind else None

            if role.kind == BYPASS:
                source = withdrawn[role.source]
                composition = dilute_bypass(source.values, scheme.port(role.source).flowrate,
                                            role.flowrate, role.buffer_salt, role.salt_setpoint)
                role = role._replace(kind=FEED, composition=composition)
            c_in = node_balance(upstream.values, Q_up, role, Q_down)

            if role.is_withdrawal:
                withdrawn[node_id] = upstream.relabel(node_id)
                state.ledger['withdrawn'] += _integral(upstream, role.flowrate)
            elif role.is_inlet:
                composition = np.broadcast_to(role.composition, upstream.values.shape)
                fed = OutletRecord(times, composition, dt, node_id)
                state.ledger['fed'] += _integral(fed, role.flowrate)

            inlet = InletProfile.from_record(upstream, c_in)
            try:
                _, record = integrate_column(columns[column], inlet, config.velocity(Q_down),
                                             settings, config, t_end=t_end, dt_sample=dt,
                                             node='{}:{}'.format(loop.name, column))
            except IntegrationError as exc:
                raise exc.tagged('{}:{}'.format(loop.name, column), state.switch)
            state.outlets[(loop.name, column)] = record
            upstream = record

        state.recycle[loop.name] = upstream
        state.ledger['recycle_out'] += _integral(upstream, loop.flow_at(order[-1], offset))

    for node_id, record in withdrawn.items():
        state.records[node_id].append(record)
    state.switch += 1
    state.offset = (offset + 1) % scheme.period
    state.t = t_end
    logger.debug("Switch %d done at t=%g s", state.switch, t_end)
    return state


def axial_profiles(state, scheme, config):
    """ Bulk concentrations along every column: (loop, column, zone, z, values). """
    offset = state.offset
    for loop in scheme.loops:
        for column, col_state in enumerate(state.columns[loop.name]):
            zone = loop.zones[loop.zone_at(column, offset)]
            z = (np.arange(col_state.Nz) + 0.5) * config.geometry.L / col_state.Nz
            yield loop.name, column, zone, z, col_state.c
