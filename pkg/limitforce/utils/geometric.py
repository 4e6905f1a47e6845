"""Helpers for geometric block sequences a_i = (1-alpha) alpha^(i-1), i >= 1.

Block i occupies [1 - alpha^(i-1), 1 - alpha^i).
"""
import numpy as np


def full_blocks_below(alpha: float, t) -> np.ndarray:
    """Number K of blocks lying entirely in [0, t], i.e. 1 - alpha^K <= t < 1 - alpha^(K+1).

    t must be < 1.
    """
    t = np.asarray(t, dtype=float)
    k = np.floor(np.log1p(-t) / np.log(alpha))
    k = np.maximum(k, 0.0)
    # log rounding can be off by one in either direction
    for _ in range(2):
        k = np.where((1.0 - alpha ** k > t) & (k > 0), k - 1, k)
        k = np.where(1.0 - alpha ** (k + 1) <= t, k + 1, k)
    return k.astype(np.int64)


def block_bounds(alpha: float, index) -> tuple:
    """(z, z') for 1-based block index (array or scalar)"""
    index = np.asarray(index, dtype=float)
    return 1.0 - alpha ** (index - 1), 1.0 - alpha ** index


def block_index(alpha: float, t) -> np.ndarray:
    """1-based block containing t (t < 1)"""
    return full_blocks_below(alpha, t) + 1


def geometric_power_sum(alpha: float, ell: int, start: int = 1) -> float:
    """sum_{i >= start} ((1-alpha) alpha^(i-1))^ell in closed form"""
    return (1 - alpha) ** ell * alpha ** (ell * (start - 1)) / (1 - alpha ** ell)


def truncation_blocks(alpha: float, epsilon: float, points: int = 1) -> int:
    """Smallest J with points * alpha^J < epsilon"""
    j = int(np.ceil(np.log(epsilon / max(points, 1)) / np.log(alpha)))
    j = max(j, 1)
    while points * alpha ** j >= epsilon:
        j += 1
    return j
