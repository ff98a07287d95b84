"""Named example systems used by the tests, the bundled model files and the CLI."""

import numpy as np

from .channels import KrausMap, amplitude_damping
from .tom import Tom

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
I2 = np.eye(2, dtype=complex)
HAD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def two_site_walk(p: float, q: float) -> Tom:
    """Two qubit sites; site 1 leaks with a depolarizing-like pattern, site 2
    mixes two Hadamard-type moves.  Unital iff p = 2q."""
    a11 = 0.5 * np.sqrt(4 - 3 * p) * I2
    b11 = 0.5 * np.sqrt(p) * SX
    a21 = 0.5 * np.sqrt(p) * SY
    b21 = 0.5 * np.sqrt(p) * SZ
    a12 = np.sqrt(q / 2) * np.array([[1, 1], [0, 0]])
    b12 = np.sqrt(q / 2) * np.array([[0, 0], [1, -1]])
    a22 = np.sqrt((1 - q) / 3) * np.array([[1, 1], [0, 1]])
    b22 = np.sqrt((1 - q) / 3) * np.array([[1, 0], [-1, 1]])
    blocks = {
        (1, 1): KrausMap([a11, b11]),
        (2, 1): KrausMap([a21, b21]),
        (1, 2): KrausMap([a12, b12]),
        (2, 2): KrausMap([a22, b22]),
    }
    return Tom([1, 2], 2, blocks)


def two_site_matrix(p: float, q: float) -> np.ndarray:
    """Closed-form 8x8 block superoperator of :func:`two_site_walk`."""
    a, b = 1 - 3 * p / 4, p / 4
    h = q / 2
    c, e = (1 - q) / 3, 2 * (1 - q) / 3
    return np.array([
        [a, 0, 0, b, h, h, h, h],
        [0, a, b, 0, 0, 0, 0, 0],
        [0, b, a, 0, 0, 0, 0, 0],
        [b, 0, 0, a, h, -h, -h, h],
        [b, 0, 0, b, e, c, c, c],
        [0, -b, -b, 0, -c, e, 0, c],
        [0, -b, -b, 0, -c, 0, e, c],
        [b, 0, 0, b, c, -c, -c, e],
    ], dtype=complex)


def kac_channel() -> KrausMap:
    """Irreducible non-unital qubit channel with a non-diagonal fixed point."""
    b1 = np.array([[1 / np.sqrt(3), 1 / np.sqrt(2)], [1 / np.sqrt(3), 0]])
    b2 = np.array([[1 / np.sqrt(3), -1 / np.sqrt(2)], [0, 0]])
    return KrausMap([b1, b2])


def kac_fixed_point() -> np.ndarray:
    c = (6 + np.sqrt(6)) / 5
    return 0.25 * np.array([[3, c], [c, 1]], dtype=complex)


def three_site_walk() -> Tom:
    """Three qubit sites with a rank-one factorizable overlap at site 2."""
    s = np.sqrt
    blocks = {
        (1, 1): KrausMap([s(5 / 8) * I2, s(1 / 8) * SX]),
        (2, 1): KrausMap([s(1 / 8) * SY, s(1 / 8) * SZ]),
        (1, 2): KrausMap([np.array([[0, 0], [1, 0]]) / s(6)]),
        (2, 2): KrausMap([np.array([[s(1 / 6), s(2 / 3)], [0, 0]])]),
        (3, 2): KrausMap([np.array([[1, 0], [-1, 1]]) / s(3)]),
        (1, 3): KrausMap([np.array([[0, 0], [s(2 / 3), -s(1 / 6)]])]),
        (2, 3): KrausMap([np.array([[0, 1], [0, 0]]) / s(6)]),
        (3, 3): KrausMap([np.array([[1, 1], [0, 1]]) / s(3)]),
    }
    return Tom([1, 2, 3], 2, blocks)


def chain_channels():
    """Invertible qubit channels for nearest-neighbour chain examples:
    ``(phi, phi_plus, phi_zero, phi_minus)`` with phi, phi_plus CPTP and
    phi_zero + phi_minus CPTP."""
    phi = KrausMap([np.sqrt(0.9) * HAD, np.sqrt(0.1) * SZ])
    phi_plus = amplitude_damping(0.3)
    phi_zero = KrausMap([np.diag([np.sqrt(0.7), np.sqrt(0.2)])])
    phi_minus = KrausMap([HAD @ np.diag([np.sqrt(0.3), np.sqrt(0.8)])])
    return phi, phi_plus, phi_zero, phi_minus
