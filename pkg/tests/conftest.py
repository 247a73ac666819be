"""Shared builders for the test suite."""

from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from radoncurv import curvature as cv


def make_family(components, n, k, order, base=()):
    """Polynomial family from {exponent tuple: coefficient} component dicts."""
    return cv.polynomial_family(n, k, components, order, base)


@pytest.fixture
def parabola_family():
    """gamma_t(x) = (x1 + t, x2 + t^2): the basic curved model."""
    return make_family(
        [
            {(1, 0, 0): 1, (0, 0, 1): 1},
            {(0, 1, 0): 1, (0, 0, 2): 1},
        ],
        2, 1, 6,
    )


@pytest.fixture
def shear_family():
    """gamma_t(x) = (x1 + t, x2 + x1 t): curved although each curve is a line."""
    return make_family(
        [
            {(1, 0, 0): 1, (0, 0, 1): 1},
            {(0, 1, 0): 1, (1, 0, 1): 1},
        ],
        2, 1, 6,
    )


@pytest.fixture
def flat_shear_family():
    """gamma_t(x) = (x1 + t, x2 + 2 x1 t + t^2): flat; preserves x2 = x1^2."""
    return make_family(
        [
            {(1, 0, 0): 1, (0, 0, 1): 1},
            {(0, 1, 0): 1, (1, 0, 1): 2, (0, 0, 2): 1},
        ],
        2, 1, 6,
    )


def numeric_parabola(x, t):
    """Vectorized gamma_t(x) = (x1 + t, x2 + t^2)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    t = np.asarray(t, dtype=float)
    if t.ndim == 1:
        t = t[:, None]
    return np.stack([x[:, 0] + t[:, 0], x[:, 1] + t[:, 0] ** 2], axis=1)


def numeric_flat_split(x, t):
    """Vectorized gamma_t(x) = (x1 + t, x2 (1 + t)): fixes the plane x2 = 0."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    t = np.asarray(t, dtype=float)
    if t.ndim == 1:
        t = t[:, None]
    return np.stack([x[:, 0] + t[:, 0], x[:, 1] * (1.0 + t[:, 0])], axis=1)


def numeric_translation(x, t):
    """Vectorized gamma_t(x) = x + t in any dimension (t broadcast on axis 0)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    t = np.asarray(t, dtype=float)
    if t.ndim == 1:
        t = t[:, None]
    out = np.array(x, copy=True)
    out[:, 0] += t[:, 0]
    return out


def rational_grid(*fracs):
    return tuple(Fraction(f) for f in fracs)
