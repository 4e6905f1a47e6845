"""Midpoint quadrature on tensor grids with refinement by grid doubling"""
from typing import Callable, Optional, Tuple
import logging

import numpy as np

from limitforce.config import get_settings

logger = logging.getLogger(__name__)


def midpoints(grid: int) -> np.ndarray:
    return (np.arange(grid) + 0.5) / grid


def unit_square_grid(grid: int) -> Tuple[np.ndarray, np.ndarray]:
    """Midpoint mesh of [0,1]^2, indexed [ix, iy]"""
    nodes = midpoints(grid)
    return np.meshgrid(nodes, nodes, indexing="ij")


def integrate_unit_square(f: Callable[[np.ndarray, np.ndarray], np.ndarray], grid: int) -> float:
    x, y = unit_square_grid(grid)
    return float(np.mean(f(x, y)))


def refine(rule: Callable[[int], float], grid: Optional[int] = None, tol: Optional[float] = None,
           max_grid: Optional[int] = None) -> Tuple[float, int, bool]:
    """Evaluate rule(g) and rule(2g), doubling g until they agree within tol.

    Returns (value at the finest grid, finest grid, converged).
    """
    settings = get_settings()
    grid = grid or settings.QUADRATURE_GRID
    tol = settings.QUADRATURE_TOL if tol is None else tol
    max_grid = max_grid or settings.QUADRATURE_MAX_GRID
    coarse = rule(grid)
    while True:
        fine = rule(2 * grid)
        if abs(fine - coarse) <= tol:
            return fine, 2 * grid, True
        if 4 * grid > max_grid:
            logger.warning("⚠️ Quadrature not settled at grid %d (change %.3g)", 2 * grid,
                           abs(fine - coarse))
            return fine, 2 * grid, False
        grid *= 2
        coarse = fine
