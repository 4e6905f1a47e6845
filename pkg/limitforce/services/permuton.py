"""Permutons: closed-form representations, cdf and quadrant flags, mu-random sampling,
pattern densities (Monte Carlo and an exact oracle for the diagonal block families)"""
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from math import factorial
from typing import ClassVar, Dict, List, NamedTuple, Optional, Sequence, Tuple
import logging

import numpy as np

from limitforce.config import get_settings
from limitforce.exceptions import InvalidArgumentError, UnsupportedFormError, UnsupportedSizeError
from limitforce.models import Estimate
from limitforce.services.permutations import (
    Permutation,
    RootedPermutation,
    lehmer_rank_many,
    points_to_patterns,
)
from limitforce.utils.geometric import block_bounds, full_blocks_below, truncation_blocks
from limitforce.utils.montecarlo import proportion_estimate, run_chunks

logger = logging.getLogger(__name__)

MAX_TIE_ROUNDS = 64
GEOMETRY_TOL = 1e-12


class SamplePoint(NamedTuple):
    x: float
    y: float


class Permuton(ABC):
    """A probability measure on [0,1]^2 with uniform marginals"""
    form: ClassVar[str]

    @abstractmethod
    def cdf_many(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """mu([0,x] x [0,y]) elementwise"""

    @abstractmethod
    def _draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """n independent points, shape (n, 2)"""

    @abstractmethod
    def to_dict(self) -> Dict:
        """Structured descriptor (see docs/schema.md)"""

    def sample_points(self, rng: np.random.Generator, n: int) -> np.ndarray:
        points = self._draw(rng, n)
        for _ in range(MAX_TIE_ROUNDS):
            clash = _tied(points)
            if not clash.any():
                return points
            logger.debug("Resampling %d tied points", int(clash.sum()))
            points[clash] = self._draw(rng, int(clash.sum()))
        raise UnsupportedFormError(f"{self.form} permuton keeps producing tied coordinates")


def _tied(points: np.ndarray) -> np.ndarray:
    mask = np.zeros(len(points), dtype=bool)
    for col in (0, 1):
        _, inverse, counts = np.unique(points[:, col], return_inverse=True, return_counts=True)
        mask |= counts[inverse] > 1
    return mask


# ---------------------------------------------------------------------------
# Uniform


@dataclass(frozen=True)
class Uniform(Permuton):
    form: ClassVar[str] = "uniform"

    def cdf_many(self, x, y):
        return np.asarray(x, dtype=float) * np.asarray(y, dtype=float)

    def _draw(self, rng, n):
        return rng.random((n, 2))

    def to_dict(self):
        return {"form": self.form}


# ---------------------------------------------------------------------------
# Mixtures of uniform measures on convex polygons


def _shoelace(vertices: Sequence[Tuple[float, float]]) -> float:
    if len(vertices) < 3:
        return 0.0
    xs = np.array([v[0] for v in vertices])
    ys = np.array([v[1] for v in vertices])
    return 0.5 * abs(float(np.dot(xs, np.roll(ys, -1)) - np.dot(ys, np.roll(xs, -1))))


def _clip_half_plane(vertices, axis: int, bound: float):
    out = []
    count = len(vertices)
    for i in range(count):
        cur, nxt = vertices[i], vertices[(i + 1) % count]
        cur_in, nxt_in = cur[axis] <= bound, nxt[axis] <= bound
        if cur_in:
            out.append(cur)
        if cur_in != nxt_in:
            t = (bound - cur[axis]) / (nxt[axis] - cur[axis])
            out.append((cur[0] + t * (nxt[0] - cur[0]), cur[1] + t * (nxt[1] - cur[1])))
    return out


@dataclass(frozen=True)
class PolygonPiece:
    """Uniform measure on a convex polygon (or a segment) with a mixture weight"""
    vertices: Tuple[Tuple[float, float], ...]
    weight: float
    area: float = field(init=False, repr=False, compare=False)
    ends: Tuple[Tuple[float, float], Tuple[float, float]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        vertices = tuple((float(x), float(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "weight", float(self.weight))
        if len(vertices) < 2:
            raise InvalidArgumentError("a polygon piece needs at least two vertices")
        if self.weight < 0:
            raise InvalidArgumentError(f"negative piece weight {self.weight}")
        for x, y in vertices:
            if not (-GEOMETRY_TOL <= x <= 1 + GEOMETRY_TOL and -GEOMETRY_TOL <= y <= 1 + GEOMETRY_TOL):
                raise InvalidArgumentError(f"vertex ({x}, {y}) outside the unit square")
        if len(set(vertices)) == 1:
            raise InvalidArgumentError("a polygon piece must not be a single point")
        area = _shoelace(vertices)
        object.__setattr__(self, "area", area)
        if area <= GEOMETRY_TOL:
            pts = np.array(vertices)
            gaps = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
            i, j = np.unravel_index(np.argmax(gaps), gaps.shape)
            direction = pts[j] - pts[i]
            offsets = pts - pts[i]
            if np.abs(offsets[:, 0] * direction[1] - offsets[:, 1] * direction[0]).max() > GEOMETRY_TOL:
                raise InvalidArgumentError(f"vertices {vertices} are not in convex position")
            object.__setattr__(self, "ends", (vertices[i], vertices[j]))
            return
        object.__setattr__(self, "ends", (vertices[0], vertices[0]))
        signs = set()
        for i in range(len(vertices)):
            (ax, ay), (bx, by), (cx, cy) = (vertices[i], vertices[(i + 1) % len(vertices)],
                                            vertices[(i + 2) % len(vertices)])
            cross = (bx - ax) * (cy - by) - (by - ay) * (cx - bx)
            if abs(cross) > GEOMETRY_TOL:
                signs.add(cross > 0)
        if len(signs) > 1:
            raise InvalidArgumentError(f"vertices {vertices} are not in convex position")

    @property
    def is_segment(self) -> bool:
        return self.area <= GEOMETRY_TOL

    def mass_below(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Fraction of this piece inside [0,x] x [0,y]"""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.is_segment:
            return self._segment_mass_below(x, y)
        pts = np.array(self.vertices)
        out = np.zeros(np.broadcast(x, y).shape)
        xb, yb = np.broadcast_arrays(x, y)
        full = (xb >= pts[:, 0].max()) & (yb >= pts[:, 1].max())
        empty = (xb <= pts[:, 0].min()) | (yb <= pts[:, 1].min())
        out[full] = 1.0
        for idx in zip(*np.nonzero(~full & ~empty)):
            clipped = _clip_half_plane(list(self.vertices), 0, xb[idx])
            if clipped:
                clipped = _clip_half_plane(clipped, 1, yb[idx])
            out[idx] = _shoelace(clipped) / self.area if len(clipped) >= 3 else 0.0
        return out

    def _segment_mass_below(self, x, y):
        (px, py), (qx, qy) = self.ends
        lo = np.zeros(np.broadcast(x, y).shape)
        hi = np.ones_like(lo)
        for p, d, bound in ((px, qx - px, x), (py, qy - py, y)):
            if d > 0:
                hi = np.minimum(hi, (bound - p) / d)
            elif d < 0:
                lo = np.maximum(lo, (bound - p) / d)
            else:
                hi = np.where(bound >= p, hi, 0.0)
        return np.clip(hi - lo, 0.0, 1.0)

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.is_segment:
            (px, py), (qx, qy) = self.ends
            t = rng.random(n)
            return np.column_stack([px + t * (qx - px), py + t * (qy - py)])
        v = np.array(self.vertices)
        tris = [(v[0], v[i], v[i + 1]) for i in range(1, len(v) - 1)]
        areas = np.array([_shoelace([tuple(a), tuple(b), tuple(c)]) for a, b, c in tris])
        which = rng.choice(len(tris), size=n, p=areas / areas.sum())
        u = rng.random(n)
        w = rng.random(n)
        flip = u + w > 1
        u[flip], w[flip] = 1 - u[flip], 1 - w[flip]
        a = np.array([t[0] for t in tris])[which]
        b = np.array([t[1] for t in tris])[which]
        c = np.array([t[2] for t in tris])[which]
        return a + u[:, None] * (b - a) + w[:, None] * (c - a)


@dataclass(frozen=True)
class Mixture(Permuton):
    pieces: Tuple[PolygonPiece, ...]
    form: ClassVar[str] = "mixture"

    def __post_init__(self):
        pieces = tuple(self.pieces)
        object.__setattr__(self, "pieces", pieces)
        if not pieces:
            raise InvalidArgumentError("a mixture needs at least one piece")
        total = sum(p.weight for p in pieces)
        tol = get_settings().MARGINAL_TOL
        if abs(total - 1.0) > tol:
            raise InvalidArgumentError(f"mixture weights sum to {total}, not 1")
        deviation = marginal_deviation(self)
        if deviation > tol:
            raise InvalidArgumentError(f"mixture marginals deviate from uniform by {deviation:.3g}")

    def cdf_many(self, x, y):
        total = np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)
        for piece in self.pieces:
            if piece.weight > 0:
                total = total + piece.weight * piece.mass_below(x, y)
        return total

    def _draw(self, rng, n):
        weights = np.array([p.weight for p in self.pieces])
        which = rng.choice(len(self.pieces), size=n, p=weights / weights.sum())
        out = np.empty((n, 2))
        for i, piece in enumerate(self.pieces):
            mask = which == i
            if mask.any():
                out[mask] = piece.draw(rng, int(mask.sum()))
        return out

    def to_dict(self):
        return {
            "form": self.form,
            "pieces": [
                {"vertices": [list(v) for v in p.vertices], "weight": p.weight}
                for p in self.pieces
            ],
        }


# ---------------------------------------------------------------------------
# Geometric diagonal block families


@dataclass(frozen=True)
class _GeometricBlocks(Permuton):
    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "alpha", float(self.alpha))
        if not 0.0 < self.alpha < 1.0:
            raise InvalidArgumentError(f"alpha must lie in (0, 1), got {self.alpha}")

    def _containing_block(self, x, y):
        """For m = min(x, y) < 1: mass of whole blocks below m, and bounds of the block holding m"""
        m = np.minimum(x, y)
        below = full_blocks_below(self.alpha, m)
        z, z_next = block_bounds(self.alpha, below + 1)
        return 1.0 - self.alpha ** below, z, z_next

    def cdf_many(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        top = np.minimum(x, y) >= 1.0
        xs = np.where(top, 0.0, x)
        ys = np.where(top, 0.0, y)
        whole, z, z_next = self._containing_block(xs, ys)
        width = z_next - z
        part = np.where(width > 0, self._partial(xs, ys, z, z_next) / np.where(width > 0, width, 1.0), 0.0)
        return np.where(top, 1.0, whole + width * np.clip(part, 0.0, 1.0))

    @abstractmethod
    def _partial(self, x, y, z, z_next) -> np.ndarray:
        """Block-local mass below (x, y) times the block width"""

    def block_of(self, t) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        index = full_blocks_below(self.alpha, t) + 1
        z, z_next = block_bounds(self.alpha, index)
        return index, z, z_next

    def _draw_blocks(self, rng, n):
        index = rng.geometric(1.0 - self.alpha, size=n)
        z, z_next = block_bounds(self.alpha, index)
        return z, z_next

    def to_dict(self):
        return {"form": self.form, "alpha": self.alpha}


@dataclass(frozen=True)
class MonotoneGeometric(_GeometricBlocks):
    """Anti-diagonal segments I(z, z') of mass z' - z in every block"""
    form: ClassVar[str] = "monotone"

    def _partial(self, x, y, z, z_next):
        return np.minimum(x, z_next) - np.maximum(z, z + z_next - y)

    def _draw(self, rng, n):
        z, z_next = self._draw_blocks(rng, n)
        step = rng.random(n) * (z_next - z)
        return np.column_stack([np.clip(z + step, z, z_next), np.clip(z_next - step, z, z_next)])


@dataclass(frozen=True)
class SquareGeometric(_GeometricBlocks):
    """Uniform measure on every diagonal block [z, z']^2, mass z' - z"""
    form: ClassVar[str] = "square"

    def _partial(self, x, y, z, z_next):
        width = z_next - z
        safe = np.where(width > 0, width, 1.0)
        return (np.clip(np.minimum(x, z_next) - z, 0.0, None)
                * np.clip(np.minimum(y, z_next) - z, 0.0, None) / safe)

    def _draw(self, rng, n):
        z, z_next = self._draw_blocks(rng, n)
        width = z_next - z
        return np.column_stack([
            np.clip(z + rng.random(n) * width, z, z_next),
            np.clip(z + rng.random(n) * width, z, z_next),
        ])


# ---------------------------------------------------------------------------
# Step permutons mu_M


@dataclass(frozen=True)
class StepMatrix(Permuton):
    """M[i][j] uniform mass on [s_(i-1), s_i] x [s_(j-1), s_j], s the partial sums of z"""
    matrix: Tuple[Tuple[float, ...], ...]
    z: Tuple[float, ...]
    form: ClassVar[str] = "step"

    def __post_init__(self):
        z = tuple(float(v) for v in self.z)
        matrix = tuple(tuple(float(v) for v in row) for row in self.matrix)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "matrix", matrix)
        k = len(z)
        if k == 0 or any(len(row) != k for row in matrix) or len(matrix) != k:
            raise InvalidArgumentError("step matrix must be k x k with k block widths")
        if any(v <= 0 for v in z):
            raise InvalidArgumentError("block widths must be positive")
        m = np.array(matrix)
        if (m < 0).any():
            raise InvalidArgumentError("step matrix entries must be nonnegative")
        tol = get_settings().MARGINAL_TOL
        if abs(sum(z) - 1.0) > tol:
            raise InvalidArgumentError(f"block widths sum to {sum(z)}, not 1")
        if np.abs(m.sum(axis=1) - z).max() > tol or np.abs(m.sum(axis=0) - z).max() > tol:
            raise InvalidArgumentError("row and column sums of M must equal the block widths")

    @property
    def edges(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.z)])

    def _fractions(self, t):
        s = self.edges
        width = np.array(self.z)
        return np.clip((np.asarray(t, dtype=float)[..., None] - s[:-1]) / width, 0.0, 1.0)

    def cdf_many(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return np.einsum("...i,ij,...j->...", self._fractions(x), np.array(self.matrix),
                         self._fractions(y))

    def _draw(self, rng, n):
        m = np.array(self.matrix)
        k = len(self.z)
        cell = rng.choice(k * k, size=n, p=(m / m.sum()).ravel())
        i, j = np.divmod(cell, k)
        s = self.edges
        width = np.array(self.z)
        return np.column_stack([
            s[i] + rng.random(n) * width[i],
            s[j] + rng.random(n) * width[j],
        ])

    def to_dict(self):
        return {"form": self.form, "matrix": [list(r) for r in self.matrix], "z": list(self.z)}


STEP3_Z = (Fraction(1, 3),) * 3
STEP3_M = (
    (Fraction(0), Fraction(0), Fraction(1, 3)),
    (Fraction(2, 9), Fraction(1, 9), Fraction(0)),
    (Fraction(1, 9), Fraction(2, 9), Fraction(0)),
)


# ---------------------------------------------------------------------------
# Constructors


def uniform() -> Uniform:
    return Uniform()


def identity_segment() -> Mixture:
    return Mixture((PolygonPiece(((0.0, 0.0), (1.0, 1.0)), 1.0),))


def reversal_segment() -> Mixture:
    return Mixture((PolygonPiece(((0.0, 1.0), (1.0, 0.0)), 1.0),))


def interleaved_segments() -> Mixture:
    """Limit of 1 3 5 ... 2 4 6 ...: halves on {(x/2, x)} and {((x+1)/2, x)}"""
    return Mixture((
        PolygonPiece(((0.0, 0.0), (0.5, 1.0)), 0.5),
        PolygonPiece(((0.5, 0.0), (1.0, 1.0)), 0.5),
    ))


def step_matrix_three() -> StepMatrix:
    return StepMatrix(STEP3_M, STEP3_Z)


# ---------------------------------------------------------------------------
# Operations


def _check_point(x: float, y: float):
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise InvalidArgumentError(f"({x}, {y}) is outside the unit square")


def cdf(mu: Permuton, x: float, y: float) -> float:
    _check_point(x, y)
    return float(mu.cdf_many(np.array([x]), np.array([y]))[0])


def quadrant_flags_many(mu: Permuton, x, y) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(lower-left, upper-left, lower-right, upper-right) masses around each (x, y)"""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lower_left = mu.cdf_many(x, y)
    return lower_left, x - lower_left, y - lower_left, 1.0 - x - y + lower_left


def quadrant_flags(mu: Permuton, x: float, y: float) -> Tuple[float, float, float, float]:
    _check_point(x, y)
    return tuple(float(v[0]) for v in quadrant_flags_many(mu, np.array([x]), np.array([y])))


def marginal_deviation(mu: Permuton, steps: int = 100) -> float:
    """max |F(t,1) - t|, |F(1,t) - t| over t in {0, 1/steps, ..., 1}"""
    t = np.linspace(0.0, 1.0, steps + 1)
    ones = np.ones_like(t)
    return float(max(np.abs(mu.cdf_many(t, ones) - t).max(),
                     np.abs(mu.cdf_many(ones, t) - t).max()))


def sample(mu: Permuton, n: int, seed: int) -> List[SamplePoint]:
    if n < 0:
        raise InvalidArgumentError("sample size must be nonnegative")
    if n == 0:
        return []
    points = mu.sample_points(np.random.default_rng(seed), n)
    return [SamplePoint(float(x), float(y)) for x, y in points]


def sample_permutation(mu: Permuton, n: int, seed: int) -> Permutation:
    if n < 1:
        raise InvalidArgumentError("permutation order must be at least 1")
    points = mu.sample_points(np.random.default_rng(seed), n)
    ranks = points_to_patterns(points[None, :, :])[0]
    return Permutation(tuple(int(r) + 1 for r in ranks))


def pattern_counts_mc(mu: Permuton, k: int, samples: int, seed: int,
                      chunks: Optional[int] = None) -> np.ndarray:
    """Counts of each pattern of S_k (lexicographic index) among samples mu-random k-tuples"""
    if samples < 1:
        raise InvalidArgumentError("samples must be at least 1")

    def task(rng, size):
        points = mu.sample_points(rng, size * k).reshape(size, k, 2)
        ranks = lehmer_rank_many(points_to_patterns(points))
        return np.bincount(ranks, minlength=factorial(k))

    return np.sum(run_chunks(task, samples, seed, chunks), axis=0)


def density_mc(mu: Permuton, sigma: Permutation, samples: int, seed: int,
               chunks: Optional[int] = None) -> Estimate:
    counts = pattern_counts_mc(mu, sigma.order, samples, seed, chunks)
    return proportion_estimate(int(counts[sigma.rank()]), samples)


def _compositions(k: int):
    for cuts in product((False, True), repeat=k - 1):
        parts, size = [], 1
        for cut in cuts:
            if cut:
                parts.append(size)
                size = 1
            else:
                size += 1
        parts.append(size)
        yield parts


def _increasing_block_sum(weights: np.ndarray, parts: Sequence[int]) -> float:
    """sum over i_1 < ... < i_r of prod_j weights[i_j] ** parts[j]"""
    acc = weights ** parts[0]
    for m in parts[1:]:
        before = np.concatenate([[0.0], np.cumsum(acc)[:-1]])
        acc = before * weights ** m
    return float(acc.sum())


def density_exact_diagonal(mu: Permuton, sigma: Permutation,
                           tail_epsilon: Optional[float] = None) -> float:
    """d(sigma, mu) for the diagonal block families.

    The k points fall into increasing blocks with multiplicities m_1..m_r; sigma must
    split into consecutive runs holding consecutive value ranges, and each run must
    be realisable inside one block (decreasing for monotone blocks, any of the m!
    orders with probability 1/m! for square blocks).
    """
    if not isinstance(mu, (MonotoneGeometric, SquareGeometric)):
        raise InvalidArgumentError(f"no exact diagonal oracle for {mu.form} permutons")
    settings = get_settings()
    k = sigma.order
    if k > settings.DIAGONAL_MAX_ORDER:
        raise UnsupportedSizeError(
            f"exact diagonal density supports |sigma| <= {settings.DIAGONAL_MAX_ORDER}, got {k}"
        )
    tail_epsilon = settings.TAIL_EPSILON if tail_epsilon is None else tail_epsilon
    if not tail_epsilon > 0:
        raise InvalidArgumentError(f"tail_epsilon must be positive, got {tail_epsilon}")
    blocks = truncation_blocks(mu.alpha, tail_epsilon, k)
    weights = (1 - mu.alpha) * mu.alpha ** np.arange(blocks)
    values = sigma.mapping
    total = 0.0
    for parts in _compositions(k):
        start, inside = 0, 1.0
        for m in parts:
            run = values[start:start + m]
            if sorted(run) != list(range(start + 1, start + m + 1)):
                break
            if isinstance(mu, MonotoneGeometric):
                if list(run) != sorted(run, reverse=True):
                    break
            else:
                inside /= factorial(m)
            start += m
        else:
            arrangements = factorial(k)
            for m in parts:
                arrangements //= factorial(m)
            total += inside * arrangements * _increasing_block_sum(weights, parts)
    return total


def flag_density_mc(mu: Permuton, flag: RootedPermutation, x: float, y: float,
                    samples: int, seed: int) -> Estimate:
    """F_mu^flag(x, y): probability that (x, y) plus |flag|-1 random points realise the flag"""
    _check_point(x, y)
    k = flag.order
    target = np.array(flag.pattern.mapping) - 1

    def task(rng, size):
        others = mu.sample_points(rng, size * (k - 1)).reshape(size, k - 1, 2)
        root = np.broadcast_to(np.array([x, y]), (size, 1, 2))
        points = np.concatenate([others, root], axis=1)
        root_position = (others[:, :, 0] < x).sum(axis=1)
        match = (points_to_patterns(points) == target).all(axis=1)
        return int((match & (root_position == flag.root - 1)).sum())

    hits = sum(run_chunks(task, samples, seed))
    return proportion_estimate(hits, samples)


def cell_masses(mu: Permuton, resolution: int) -> np.ndarray:
    """Exact mu-mass of each cell of a resolution x resolution grid, indexed [ix, iy]"""
    t = np.linspace(0.0, 1.0, resolution + 1)
    gx, gy = np.meshgrid(t, t, indexing="ij")
    corner = mu.cdf_many(gx, gy)
    return np.clip(corner[1:, 1:] - corner[:-1, 1:] - corner[1:, :-1] + corner[:-1, :-1], 0.0, None)


def sampled_cell_masses(mu: Permuton, resolution: int, samples: int, seed: int) -> np.ndarray:
    def task(rng, size):
        points = mu.sample_points(rng, size)
        cells = np.minimum((points * resolution).astype(np.int64), resolution - 1)
        return np.bincount(cells[:, 0] * resolution + cells[:, 1], minlength=resolution ** 2)

    counts = np.sum(run_chunks(task, samples, seed), axis=0)
    return counts.reshape(resolution, resolution) / samples
