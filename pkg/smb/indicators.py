"""
Purity, yield and productivity of withdrawn streams, and the cyclic
steady state (CSS) loop for SMB schemes.

All indicators are per protein; the salt is never scored.
"""
from collections import namedtuple
import logging

from django.core.exceptions import ValidationError
import numpy as np
from scipy.integrate import trapezoid

from smb.batch import compute_pool_window
from smb.exceptions import GridMismatch, NoFeed, NoWithdrawal
from smb.network import advance_switch


logger = logging.getLogger(__name__)


class PerformanceRecord(namedtuple('PerformanceRecord',
                                   ['node', 'purity', 'yields', 'productivity', 't_c'])):
    """ Indicators at one node; arrays hold one entry per protein. """
    __slots__ = ()

    def of(self, component):
        """ (purity, yield, productivity) of a component index (1..M). """
        i = component - 1
        return self.purity[i], self.yields[i], self.productivity[i]


def concentration_integral(record, window):
    """ Trapezoid integral of each protein's outlet concentration over `window`. """
    t_start, t_end = window
    tol = 1e-9 * max(1.0, abs(record.t_end))
    if t_start < record.t_start - tol or t_end > record.t_end + tol or t_end < t_start:
        raise ValidationError({'window': ["[{:g}, {:g}] is outside the record [{:g}, {:g}]".format(
            t_start, t_end, record.t_start, record.t_end)]})
    t_start, t_end = max(t_start, record.t_start), min(t_end, record.t_end)

    inside = (record.times > t_start) & (record.times < t_end)
    times = np.concatenate([[t_start], record.times[inside], [t_end]])
    proteins = record.values[:, 1:]
    values = np.column_stack([np.interp(times, record.times, proteins[:, i])
                              for i in range(proteins.shape[1])])
    return trapezoid(values, times, axis=0)


def performance(A_out, Q_node, Q_F, c_F, t_load, t_c, V_c, eps_c, N, node=None):
    """ PerformanceRecord from per-protein concentration integrals.

    Yield is the withdrawn mass over the fed mass; productivity is per
    collection time and per packed-bed volume of all N columns.
    """
    A_out = np.asarray(A_out, dtype=float)
    c_F = np.asarray(c_F, dtype=float)
    total = A_out.sum()
    if not total > 0:
        raise NoWithdrawal("No protein withdrawn at node {}".format(node))
    fed = Q_F * c_F * t_load
    if not fed.sum() > 0:
        raise NoFeed("No protein fed to the process")

    withdrawn = Q_node * A_out
    purity = A_out / total
    yields = np.divide(withdrawn, fed, out=np.full_like(withdrawn, np.nan), where=fed > 0)
    productivity = withdrawn / (t_c * (1 - eps_c) * V_c * N)
    return PerformanceRecord(node, purity, yields, productivity, t_c)


def batch_performance(record, protocol, config, target, mu):
    """ Pool the target peak and score the pooled fraction.

    Returns (PoolWindow, PerformanceRecord). The collection time is the
    pool length.
    """
    window = compute_pool_window(record, target, mu)
    A_out = concentration_integral(record, (window.t_start, window.t_end))
    Q = config.flowrate(protocol.u_int)
    g = config.geometry
    indicators = performance(A_out, Q, Q, protocol.feed, protocol.t_load, window.length,
                             g.volume, g.eps_c, 1, node=record.node)
    return window, indicators


def _node_distance(prev, curr, n):
    if prev.values.shape != curr.values.shape or not np.allclose(
            prev.times - prev.t_start, curr.times - curr.t_start, rtol=0,
            atol=1e-9 * max(1.0, curr.t_end - curr.t_start)):
        raise GridMismatch("Records of node {} are sampled differently".format(curr.node))
    times = curr.times - curr.t_start
    diff = np.abs(curr.values[:, 1:] - prev.values[:, 1:]) ** n
    return float(np.sum(trapezoid(diff, times, axis=0) ** (1.0 / n)))


def css_distance(prev, curr, n=1):
    """ Largest summed protein difference over all withdrawal nodes.

    `prev` and `curr` map node ids to the records of two consecutive switches.
    """
    if set(prev) != set(curr):
        raise GridMismatch("Switches withdrew at different nodes")
    if not prev:
        return 0.0
    return max(_node_distance(prev[node], curr[node], n) for node in curr)


class CSSResult(namedtuple('CSSResult', ['state', 'performance', 'switches', 'distance',
                                         'converged', 'history'])):
    __slots__ = ()


def node_performance(state, scheme, config):
    """ Indicators of the last switch at every external withdrawal node.

    A node without withdrawn protein gets NaN purity and zero yield.
    """
    feeds = scheme.fresh_feeds()
    if not feeds:
        raise NoFeed("Scheme has no fresh feed")
    _, feed = feeds[0]
    g = config.geometry
    records = state.last_records()
    result = {}
    for node in scheme.external_withdrawals():
        record = records[node]
        A_out = concentration_integral(record, (record.t_start, record.t_end))
        role = scheme.port(node)
        try:
            result[node] = performance(A_out, role.flowrate, feed.flowrate,
                                       feed.composition[1:], scheme.t_s, scheme.t_s,
                                       g.volume, g.eps_c, scheme.N, node=node)
        except NoWithdrawal:
            logger.warning("No protein withdrawn at %s", node)
            zeros = np.zeros_like(A_out)
            result[node] = PerformanceRecord(node, np.full_like(A_out, np.nan),
                                             zeros, zeros, scheme.t_s)
    return result


def run_to_css(state, scheme, config, settings, e_t, k_max, n=1):
    """ Switch until two consecutive switches differ by at most `e_t`.

    Stops after `k_max` switches in any case; `converged` tells which.
    Indicators are those of the final switch.
    """
    if not e_t > 0:
        raise ValidationError({'indicators.css_tolerance': ["Must be > 0"]})
    if k_max < 2:
        raise ValidationError({'indicators.max_switches': ["Need at least 2 switches"]})

    history = []
    previous = state.last_records() if state.records else None
    distance = np.inf
    while state.switch < k_max:
        advance_switch(state, scheme, settings, config)
        current = state.last_records()
        if previous is not None:
            distance = css_distance(previous, current, n)
            history.append(distance)
            logger.debug("Switch %d: CSS distance %.3g", state.switch, distance)
            if distance <= e_t:
                break
        previous = current

    converged = distance <= e_t
    if not converged:
        logger.warning("No cyclic steady state after %d switches (distance %.3g)",
                       state.switch, distance)
    return CSSResult(state, node_performance(state, scheme, config), state.switch,
                     distance, converged, history)
