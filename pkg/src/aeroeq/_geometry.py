"""Planar rotation helpers and the single angle-wrapping convention."""

import math

import numpy as np

# counterclockwise quarter turn, R(pi/2)
S = np.array([[0.0, -1.0], [1.0, 0.0]])
E1 = np.array([1.0, 0.0])
E2 = np.array([0.0, 1.0])


def wrap_angle(a):
    """Map angles to (-pi, pi]. Works on scalars and arrays."""
    if isinstance(a, (float, int)):
        return math.pi - (math.pi - a) % (2.0 * math.pi)
    w = np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2.0 * np.pi)
    if np.ndim(w) == 0:
        return float(w)
    return w


def rot(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def angle_dist(a, b):
    """Unsigned distance between two angles on the circle."""
    return abs(wrap_angle(a - b))
