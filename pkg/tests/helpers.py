"""Shared oracles for the test-suite."""

import numpy as np

from aiol.nn import ParameterSet


def random_params(rng, dims, scale=1.0, slope=0.01):
    Ws = [scale * rng.normal(size=(a, b)) / np.sqrt(a) for a, b in zip(dims[:-1], dims[1:])]
    bs = [0.1 * rng.normal(size=b) for b in dims[1:]]
    return ParameterSet(Ws, bs, slope)


def finite_diff(params, loss_fn, h=1e-5):
    """Central differences of ``loss_fn(params)`` w.r.t. every parameter entry."""
    arrays = [a.copy() for a in params.arrays()]
    grads = []
    for k, a in enumerate(arrays):
        g = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            old = a[idx]
            a[idx] = old + h
            up = loss_fn(ParameterSet.from_arrays(arrays, params.slope))
            a[idx] = old - h
            dn = loss_fn(ParameterSet.from_arrays(arrays, params.slope))
            a[idx] = old
            g[idx] = (up - dn) / (2 * h)
        grads.append(g)
    return grads


def rel_err(a, b, floor=1e-6):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
