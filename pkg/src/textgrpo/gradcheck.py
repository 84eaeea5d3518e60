"""Central finite-difference checks for analytic gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np


def finite_difference(f: Callable[[], float], params: np.ndarray, index: int, h: float = 1e-5) -> float:
    """Central difference of ``f`` along one coordinate of ``params`` (restored afterwards)."""
    orig = params[index]
    params[index] = orig + h
    up = f()
    params[index] = orig - h
    down = f()
    params[index] = orig
    return (up - down) / (2 * h)


def check_gradient(f: Callable[[], float], grad: np.ndarray, params: np.ndarray, n_coords: int = 200,
                   h: float = 1e-5, rng=None, floor: float = 1e-8) -> float:
    """Max relative error between ``grad`` and finite differences on random coordinates.

    The relative error of a coordinate is ``|a - n| / max(|a|, |n|, floor)``.
    """
    rng = np.random.default_rng(rng)
    idx = rng.choice(params.size, size=min(n_coords, params.size), replace=False)
    worst = 0.0
    for i in idx:
        num = finite_difference(f, params, int(i), h)
        ana = grad[i]
        worst = max(worst, abs(ana - num) / max(abs(ana), abs(num), floor))
    return worst
