"""Cached corpus networks and their power-flow / linearized states."""
import functools

import numpy as np

from ibrsc.corpus import CORPUS
from ibrsc.linearize import linearize
from ibrsc.mana import flat_start, residual_function, solve_pf

NAMES = tuple(sorted(CORPUS))


@functools.lru_cache(maxsize=None)
def network(name):
    return CORPUS[name]()


@functools.lru_cache(maxsize=None)
def pf_of(name):
    return solve_pf(network(name))


@functools.lru_cache(maxsize=None)
def lin_of(name):
    return linearize(network(name), pf_of(name))


def fd_jacobian(net, x, h=1e-6):
    """Central-difference Jacobian of the power-flow residual."""
    f = residual_function(net)
    cols = []
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        cols.append((f(x + e) - f(x - e)) / (2 * h))
    return np.column_stack(cols)


def iterates(name):
    """Flat start, the solution, and a deterministic perturbation of it.

    Regulator taps are fixed after rounding, so the solved network is used.
    """
    net = pf_of(name).network
    x = pf_of(name).x
    rng = np.random.default_rng(sum(map(ord, name)))
    return [flat_start(net), x, x + 0.05 * rng.normal(size=x.size)]
