"""
Run configuration files.

A run file is JSON with `"schema": 1`. Any block may instead name another
JSON file holding that block; names are resolved next to the including file
first, then among the bundled parameter sets in `smb/configs/`.

Parsing inlines every include and fills every default, so the resolved
data written next to the outputs reproduces the run on its own.
"""
from collections import namedtuple
import copy
import json
import os

from django.conf import settings
from django.core.exceptions import ValidationError
import numpy as np

from smb import network
from smb.batch import BatchProtocol
from smb.column import SolverSettings
from smb.sampler import OptimizationProblem
from smb.system import (ColumnGeometry, ComponentSet, SMABinding, TransportParams,
                        validate_system)


SCHEMA_VERSION = 1

SIMULATE_BATCH = 'simulate-batch'
SIMULATE_SMB = 'simulate-smb'
OPTIMIZE = 'optimize'
PREDICTIVE_CHECK = 'predictive-check'
MODES = (SIMULATE_BATCH, SIMULATE_SMB, OPTIMIZE, PREDICTIVE_CHECK)

PROCESS = 'process'
TOY_GAUSSIAN = 'toy-gaussian'
TOY_CONSTRAINED = 'toy-constrained'
PROBLEMS = (PROCESS, TOY_GAUSSIAN, TOY_CONSTRAINED)

TOP_LEVEL_KEYS = ('schema', 'mode', 'system', 'protocol', 'scheme', 'solver',
                  'indicators', 'optimization', 'predictive', 'output', 'seed')
SYSTEM_KEYS = ('components', 'geometry', 'transport', 'binding')
PROTOCOL_KEYS = BatchProtocol._fields
SCHEME_KEYS = ('kind', 'columns_per_zone', 'switch_time', 'feed', 'buffer_salt',
               'salt_setpoint', 'units')
UNIT_KEYS = ('flows', 'salt')
INDICATOR_KEYS = ('target', 'node', 'pool_threshold', 'pool_thresholds',
                  'css_tolerance', 'max_switches', 'norm')
OPTIMIZATION_KEYS = ('problem', 'parameters', 'epsilon', 'initial', 'chains') + tuple(
    f for f in OptimizationProblem._fields if f not in ('parameters', 'lower', 'upper',
                                                        'epsilon', 'initial'))
PREDICTIVE_KEYS = ('chain', 'members', 'parameters')
OUTPUT_KEYS = ('directory',)

# Default withdrawal node carrying the target, per scheme kind
DEFAULT_NODES = {network.FOUR_ZONE: 'E', network.CASCADE: 'U2.E', network.EIGHT_ZONE: 'E2'}


class Indicators(namedtuple('Indicators', ['target', 'node', 'pool_threshold', 'pool_thresholds',
                                           'css_tolerance', 'max_switches', 'norm'])):
    """ Which stream is scored and how. `target` is a component index. """
    __slots__ = ()


class Optimization(namedtuple('Optimization', ['kind', 'problem', 'chains'])):
    __slots__ = ()


class Predictive(namedtuple('Predictive', ['chain', 'members', 'parameters'])):
    __slots__ = ()


class RunConfig(namedtuple('RunConfig', [
        'mode', 'system', 'protocol', 'scheme', 'solver', 'indicators', 'optimization',
        'predictive', 'output_dir', 'seed', 'data', 'path'])):
    """ A fully validated run; `data` is the resolved JSON it was built from. """
    __slots__ = ()

    @property
    def is_batch(self):
        return self.protocol is not None

    def resolved_json(self):
        return json.dumps(self.data, indent=2, sort_keys=True)


def _check_keys(block, allowed, path):
    if not isinstance(block, dict):
        raise ValidationError({path: ["Expected an object"]})
    unknown = sorted(set(block) - set(allowed))
    if unknown:
        raise ValidationError({'{}.{}'.format(path, key) if path else key: ["Unknown key"]
                               for key in unknown})


def load_json(path):
    """ Parse a JSON file, reporting syntax errors with line and column. """
    try:
        with open(path, encoding='utf-8') as handle:
            return json.load(handle)
    except OSError as exc:
        raise ValidationError({path: ["Cannot read file: {}".format(exc.strerror)]})
    except UnicodeDecodeError:
        raise ValidationError({path: ["File is not UTF-8"]})
    except json.JSONDecodeError as exc:
        raise ValidationError({path: ["Invalid JSON at line {}, column {}: {}".format(
            exc.lineno, exc.colno, exc.msg)]})


def find_include(name, base_dir):
    """ Path of an included file: next to the including file, else bundled. """
    for directory in (base_dir, settings.BUNDLED_CONFIG_DIR):
        candidate = os.path.join(directory, name)
        if os.path.isfile(candidate):
            return candidate
    raise ValidationError({name: ["Included file not found (looked in {} and {})".format(
        base_dir, settings.BUNDLED_CONFIG_DIR)]})


def _inline(block, base_dir, path):
    if isinstance(block, str):
        block = load_json(find_include(block, base_dir))
    if not isinstance(block, dict):
        raise ValidationError({path: ["Expected an object or a file name"]})
    return block


def get_path(data, dotted):
    """ Value at a dotted key path ('scheme.units.U2.flows.Q_F'). """
    node = data
    for key in dotted.split('.'):
        try:
            node = node[int(key)] if isinstance(node, list) else node[key]
        except (KeyError, IndexError, ValueError, TypeError):
            raise ValidationError({dotted: ["No such configuration entry"]})
    return node


def set_path(data, dotted, value):
    """ Replace the value at an existing dotted key path. """
    parent, _, last = dotted.rpartition('.')
    container = get_path(data, parent) if parent else data
    if isinstance(container, list):
        try:
            container[int(last)] = value
        except (IndexError, ValueError):
            raise ValidationError({dotted: ["No such configuration entry"]})
    elif isinstance(container, dict) and last in container:
        container[last] = value
    else:
        raise ValidationError({dotted: ["No such configuration entry"]})


def build_system(block):
    _check_keys(block, SYSTEM_KEYS, 'system')
    missing = [key for key in SYSTEM_KEYS if key not in block]
    if missing:
        raise ValidationError({'system.' + key: ["Required"] for key in missing})
    for key, fields in (('geometry', ColumnGeometry._fields),
                        ('transport', TransportParams._fields),
                        ('binding', SMABinding._fields)):
        _check_keys(block[key], fields, 'system.' + key)
    try:
        geometry = ColumnGeometry(**block['geometry'])
        binding = SMABinding(**block['binding'])
    except TypeError as exc:
        raise ValidationError({'system': [str(exc)]})
    transport = TransportParams(**dict({'D_p_salt': None, 'k_f_salt': None},
                                       **block['transport']))
    return validate_system(geometry, transport, binding, ComponentSet(tuple(block['components'])))


def build_protocol(block, system):
    _check_keys(block, PROTOCOL_KEYS, 'protocol')
    try:
        protocol = BatchProtocol(**block)
    except TypeError as exc:
        raise ValidationError({'protocol': [str(exc)]})
    return protocol.validated(system)


def build_process_scheme(block):
    _check_keys(block, SCHEME_KEYS, 'scheme')
    missing = [key for key in ('kind', 'switch_time', 'feed', 'units') if key not in block]
    if missing:
        raise ValidationError({'scheme.' + key: ["Required"] for key in missing})
    units = block['units']
    if not isinstance(units, dict) or not units:
        raise ValidationError({'scheme.units': ["Expected an object of units"]})
    expected = ['U1', 'U2'] if block['kind'] == network.CASCADE else ['U1']
    if sorted(units) != expected:
        raise ValidationError({'scheme.units': ["Expected unit(s) {}".format(', '.join(expected))]})
    for name, unit in units.items():
        _check_keys(unit, UNIT_KEYS, 'scheme.units.' + name)
    flows = [dict(units[name].get('flows', {})) for name in expected]
    salts = [dict(units[name].get('salt', {})) for name in expected]
    return network.build_scheme(
        block['kind'], block.get('columns_per_zone', 3), flows, block['switch_time'],
        salts, block['feed'], buffer_salt=block.get('buffer_salt', 0.0),
        salt_setpoint=block.get('salt_setpoint', False))


def _indicators(block, system, scheme, mode):
    _check_keys(block, INDICATOR_KEYS, 'indicators')
    values = {
        'target': block.get('target'),
        'node': block.get('node'),
        'pool_threshold': block.get('pool_threshold', settings.SMB_POOL_THRESHOLD),
        'pool_thresholds': block.get('pool_thresholds', []),
        'css_tolerance': block.get('css_tolerance', settings.SMB_CSS_TOLERANCE),
        'max_switches': block.get('max_switches', settings.SMB_MAX_SWITCHES),
        'norm': block.get('norm', settings.SMB_CSS_NORM),
    }
    if scheme is not None and values['node'] is None:
        values['node'] = DEFAULT_NODES[scheme.kind]
    errors = {}
    if system is not None:
        if values['target'] is None:
            errors['indicators.target'] = ["Name the target protein"]
        else:
            try:
                index = system.components.index(values['target'])
            except ValidationError:
                index = None
                errors['indicators.target'] = ["Unknown component {!r}".format(values['target'])]
            if index == 0:
                errors['indicators.target'] = ["The salt cannot be the target"]
    if scheme is not None and values['node'] not in scheme.external_withdrawals():
        errors['indicators.node'] = ["{!r} is not an external withdrawal ({})".format(
            values['node'], ', '.join(scheme.external_withdrawals()))]
    if not values['pool_threshold'] > 0 or any(not mu > 0 for mu in values['pool_thresholds']):
        errors['indicators.pool_threshold'] = ["Thresholds must be > 0"]
    if not values['css_tolerance'] > 0:
        errors['indicators.css_tolerance'] = ["Must be > 0"]
    if int(values['max_switches']) < 2:
        errors['indicators.max_switches'] = ["Need at least 2 switches"]
    if not values['norm'] >= 1:
        errors['indicators.norm'] = ["Norm order must be >= 1"]
    if errors:
        raise ValidationError(errors)
    resolved = dict(values, max_switches=int(values['max_switches']),
                    pool_thresholds=list(values['pool_thresholds']))
    target = None if values['target'] is None else system.components.index(values['target'])
    return Indicators(target=target, node=resolved['node'],
                      pool_threshold=float(resolved['pool_threshold']),
                      pool_thresholds=tuple(float(mu) for mu in resolved['pool_thresholds']),
                      css_tolerance=float(resolved['css_tolerance']),
                      max_switches=resolved['max_switches'],
                      norm=resolved['norm']), resolved


def _optimization(block, data):
    _check_keys(block, OPTIMIZATION_KEYS, 'optimization')
    kind = block.get('problem', PROCESS)
    if kind not in PROBLEMS:
        raise ValidationError({'optimization.problem': ["Expected one of {}".format(', '.join(PROBLEMS))]})
    parameters = block.get('parameters')
    if not isinstance(parameters, dict) or not parameters:
        raise ValidationError({'optimization.parameters': ["Map each parameter to [low, high]"]})
    errors = {}
    for name, bounds in parameters.items():
        if not (isinstance(bounds, list) and len(bounds) == 2):
            errors['optimization.parameters.' + name] = ["Expected [low, high]"]
        elif kind == PROCESS:
            try:
                get_path(data, name)
            except ValidationError:
                errors['optimization.parameters.' + name] = ["No such configuration entry"]
    if errors:
        raise ValidationError(errors)

    options = {key: block[key] for key in OptimizationProblem._fields if key in block
               and key not in ('parameters', 'lower', 'upper', 'epsilon', 'initial')}
    problem = OptimizationProblem.create(
        list(parameters), [b[0] for b in parameters.values()], [b[1] for b in parameters.values()],
        epsilon=block.get('epsilon', []), initial=block.get('initial'), **options)
    chains = int(block.get('chains', settings.SMB_OPTIMIZER_DEFAULTS['chains']))
    if chains < 1:
        raise ValidationError({'optimization.chains': ["Need at least one chain"]})

    resolved = {
        'problem': kind,
        'parameters': {name: [float(lo), float(hi)] for name, (lo, hi) in parameters.items()},
        'epsilon': [float(e) for e in problem.epsilon],
        'initial': None if problem.initial is None else [float(v) for v in problem.initial],
        'chains': chains,
    }
    for field in OptimizationProblem._fields:
        if field not in resolved and field not in ('lower', 'upper'):
            value = getattr(problem, field)
            resolved[field] = list(value) if isinstance(value, tuple) else value
    return Optimization(kind, problem, chains), resolved


def _predictive(block, base_dir):
    _check_keys(block, PREDICTIVE_KEYS, 'predictive')
    members = block.get('members', 0)
    if not isinstance(members, int) or members < 0:
        raise ValidationError({'predictive.members': ["Expected a count >= 0"]})
    chain = block.get('chain')
    parameters = list(block.get('parameters', []))
    if members:
        if not chain:
            raise ValidationError({'predictive.chain': ["Name the chain file to draw from"]})
        if not parameters:
            raise ValidationError({'predictive.parameters': ["List the sampled parameters"]})
    if chain:
        chain = os.path.normpath(os.path.join(base_dir, chain))
    resolved = {'chain': chain, 'members': members, 'parameters': parameters}
    return Predictive(chain, members, tuple(parameters)), resolved


def _required(data, mode):
    required = {
        SIMULATE_BATCH: ('system', 'protocol'),
        SIMULATE_SMB: ('system', 'scheme'),
        OPTIMIZE: ('optimization',),
        PREDICTIVE_CHECK: ('system', 'predictive'),
    }[mode]
    missing = [block for block in required if block not in data]
    if mode in (PREDICTIVE_CHECK,) or (mode == OPTIMIZE and data.get('optimization', {})
                                       .get('problem', PROCESS) == PROCESS):
        if 'protocol' not in data and 'scheme' not in data:
            missing.append('protocol or scheme')
        if mode == OPTIMIZE and 'system' not in data:
            missing.append('system')
    if 'protocol' in data and 'scheme' in data:
        raise ValidationError({'protocol': ["Give either a batch protocol or an SMB scheme"]})
    if missing:
        raise ValidationError({block: ["Required in {} mode".format(mode)] for block in missing})


def parse_data(data, base_dir, path=None):
    """ Validate configuration data (a dict) into a RunConfig. """
    _check_keys(data, TOP_LEVEL_KEYS, '')
    if data.get('schema') != SCHEMA_VERSION:
        raise ValidationError({'schema': ["Expected schema version {}".format(SCHEMA_VERSION)]})
    mode = data.get('mode')
    if mode not in MODES:
        raise ValidationError({'mode': ["Expected one of {}".format(', '.join(MODES))]})

    data = copy.deepcopy(data)
    for key in ('system', 'protocol', 'scheme', 'solver', 'indicators', 'optimization',
                'predictive', 'output'):
        if key in data:
            data[key] = _inline(data[key], base_dir, key)
    _required(data, mode)

    system = build_system(data['system']) if 'system' in data else None
    protocol = build_protocol(data['protocol'], system) if 'protocol' in data else None
    scheme = build_process_scheme(data['scheme']) if 'scheme' in data else None
    if scheme is not None and system is not None and scheme.feed.size != system.M:
        raise ValidationError({'scheme.feed': ["Expected {} protein concentrations".format(system.M)]})
    if protocol is not None:
        data['protocol'] = dict(data['protocol'], **{
            field: (list(map(float, value)) if field == 'feed' else value)
            for field, value in protocol._asdict().items()})

    solver_block = data.get('solver', {})
    _check_keys(solver_block, SolverSettings._fields, 'solver')
    solver = SolverSettings.from_defaults(**solver_block)
    data['solver'] = solver._asdict()

    indicators, data['indicators'] = _indicators(data.get('indicators', {}), system, scheme, mode)

    optimization = None
    if 'optimization' in data and mode in (OPTIMIZE, PREDICTIVE_CHECK):
        optimization, data['optimization'] = _optimization(data['optimization'], data)
    predictive = None
    if mode == PREDICTIVE_CHECK:
        predictive, data['predictive'] = _predictive(data['predictive'], base_dir)

    output = data.get('output', {})
    _check_keys(output, OUTPUT_KEYS, 'output')
    output_dir = os.path.abspath(os.path.join(base_dir, output.get('directory',
                                                                   settings.SMB_OUTPUT_DIR)))
    data['output'] = {'directory': output_dir}

    seed = data.get('seed', 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ValidationError({'seed': ["Expected a non-negative integer"]})
    data['seed'] = seed

    return RunConfig(mode, system, protocol, scheme, solver, indicators, optimization,
                     predictive, output_dir, seed, data, path)


def parse_config(path, overrides=None):
    """ Read, resolve and validate a run file.

    `overrides` maps dotted paths to values applied before validation
    (command-line flags such as the seed or the output directory).
    """
    path = os.path.abspath(path)
    data = load_json(path)
    if not isinstance(data, dict):
        raise ValidationError({path: ["Expected a JSON object"]})
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        head, _, rest = dotted.partition('.')
        if rest:
            block = data.setdefault(head, {})
            if isinstance(block, str):
                block = data[head] = load_json(find_include(block, os.path.dirname(path)))
            block[rest] = value
        else:
            data[head] = value
    return parse_data(data, os.path.dirname(path), path)


def with_parameters(config, names, theta):
    """ A copy of the run with θ written into the named entries, re-validated. """
    data = copy.deepcopy(config.data)
    for name, value in zip(names, np.asarray(theta, dtype=float)):
        set_path(data, name, float(value))
    return parse_data(data, os.path.dirname(config.path or '.'), config.path)
