"""2x2 real matrix helpers acting on complex I/Q samples.

Everywhere in this package an I/Q sample pair ``(i, q)`` is stored as the
complex number ``i + 1j*q``; a 2x2 real matrix is a ``(2, 2)`` float ndarray.
These helpers keep the real-matrix algebra (imbalance, compensator,
de-rotation) readable without reshaping streams into stacked 2-vectors.
"""

from __future__ import annotations

import numpy as np

__all__ = ["rotation", "apply", "det", "inverse", "IDENTITY"]

IDENTITY = np.eye(2)


def rotation(theta: float) -> np.ndarray:
    """Rotation matrix ``[[cos, -sin], [sin, cos]]`` by `theta` radians."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def apply(m: np.ndarray, z: np.ndarray | complex) -> np.ndarray | complex:
    """Apply a 2x2 real matrix to complex samples (elementwise over arrays).

    ``apply(rotation(t), z)`` equals ``exp(1j*t) * z``.
    """
    zr = np.real(z)
    zi = np.imag(z)
    return (m[0, 0] * zr + m[0, 1] * zi) + 1j * (m[1, 0] * zr + m[1, 1] * zi)


def det(m: np.ndarray) -> float:
    return float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])


def inverse(m: np.ndarray) -> np.ndarray:
    """Closed-form 2x2 inverse.

    Raises
    ------
    ValueError
        If the matrix is singular to working precision.
    """
    d = det(m)
    if abs(d) < 1e-12:
        raise ValueError(f"matrix is singular (det={d:.3e})")
    return np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]]) / d
