"""
Non-dominated (purity, yield) pairs, both maximized.
"""
from collections import namedtuple

import numpy as np


def dominates(a, b):
    """ True if a = (Pu, Y) is at least as good as b in both and better in one. """
    return a[0] >= b[0] and a[1] >= b[1] and (a[0] > b[0] or a[1] > b[1])


class ParetoFront(namedtuple('ParetoFront', ['indices', 'purity', 'yields', 'payloads'])):
    """ Front members in ascending purity; `indices` point into the input. """
    __slots__ = ()

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(zip(self.purity, self.yields, self.payloads))


def pareto_front(points, payloads=None):
    """ Maximal non-dominated subset of `points`.

    Equal pairs keep their first occurrence. Pairs with a non-finite entry
    are ignored.
    """
    points = [tuple(p) for p in points]
    payloads = list(payloads) if payloads is not None else [None] * len(points)
    candidates = [i for i, (pu, y) in enumerate(points) if np.isfinite(pu) and np.isfinite(y)]
    # Stable: among equal purities, input order is kept
    order = sorted(candidates, key=lambda i: -points[i][0])

    kept = []
    best_higher = -np.inf
    k = 0
    while k < len(order):
        purity = points[order[k]][0]
        group = []
        while k < len(order) and points[order[k]][0] == purity:
            group.append(order[k])
            k += 1
        group_best = max(points[i][1] for i in group)
        if group_best > best_higher:
            kept.append(next(i for i in group if points[i][1] == group_best))
        best_higher = max(best_higher, group_best)

    kept.reverse()
    return ParetoFront(tuple(kept),
                       np.array([points[i][0] for i in kept], dtype=float),
                       np.array([points[i][1] for i in kept], dtype=float),
                       tuple(payloads[i] for i in kept))
