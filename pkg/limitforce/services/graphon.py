"""Graphs and graphons: induced densities, W-random graphs, quadrature of subgraph densities,
inversion graphs and permuton-induced graphons"""
from abc import ABC, abstractmethod
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import combinations, permutations, product
from math import comb, factorial
from string import ascii_lowercase
from typing import ClassVar, Dict, FrozenSet, List, Optional, Sequence, Tuple
import logging

import numpy as np

from limitforce.config import get_settings
from limitforce.exceptions import InvalidArgumentError, UnsupportedFormError, UnsupportedSizeError
from limitforce.models import Estimate
from limitforce.services.permutations import Permutation
from limitforce.services.permuton import Permuton
from limitforce.utils.geometric import block_index, geometric_power_sum
from limitforce.utils.montecarlo import proportion_estimate, run_chunks
from limitforce.utils.quadrature import midpoints, refine

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Finite graphs


@dataclass(frozen=True)
class Graph:
    """Graph on vertices 1..order; edges are pairs (i, j) with i < j"""
    order: int
    edges: FrozenSet[Tuple[int, int]] = frozenset()

    def __post_init__(self):
        if self.order < 0:
            raise InvalidArgumentError("graph order must be nonnegative")
        normalized = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise InvalidArgumentError(f"loop at vertex {i}")
            if not (1 <= i <= self.order and 1 <= j <= self.order):
                raise InvalidArgumentError(f"edge {i}-{j} outside [1, {self.order}]")
            normalized.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(normalized))

    @classmethod
    def parse(cls, text: str) -> "Graph":
        """"n; i-j,i-j,..." """
        head, _, tail = text.partition(";")
        try:
            order = int(head.strip())
            edges = [tuple(int(v) for v in e.split("-")) for e in tail.split(",") if e.strip()]
        except ValueError:
            raise InvalidArgumentError(f"cannot parse graph {text!r}")
        if any(len(e) != 2 for e in edges):
            raise InvalidArgumentError(f"cannot parse graph {text!r}")
        return cls(order, frozenset(edges))

    def __str__(self) -> str:
        return f"{self.order}; " + ",".join(f"{i}-{j}" for i, j in sorted(self.edges))

    def __len__(self) -> int:
        return self.order

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edges

    def degrees(self) -> List[int]:
        deg = [0] * self.order
        for i, j in self.edges:
            deg[i - 1] += 1
            deg[j - 1] += 1
        return deg

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.order, self.order), dtype=bool)
        for i, j in self.edges:
            adj[i - 1, j - 1] = adj[j - 1, i - 1] = True
        return adj

    def induced(self, vertices: Sequence[int]) -> "Graph":
        index = {v: pos for pos, v in enumerate(vertices, start=1)}
        return Graph(len(vertices), frozenset(
            (index[i], index[j]) for i, j in self.edges if i in index and j in index
        ))

    def components(self) -> List[List[int]]:
        seen, parts = set(), []
        adj = {v: set() for v in range(1, self.order + 1)}
        for i, j in self.edges:
            adj[i].add(j)
            adj[j].add(i)
        for start in range(1, self.order + 1):
            if start in seen:
                continue
            stack, part = [start], []
            seen.add(start)
            while stack:
                v = stack.pop()
                part.append(v)
                for u in adj[v] - seen:
                    seen.add(u)
                    stack.append(u)
            parts.append(sorted(part))
        return parts

    def is_complete(self) -> bool:
        return len(self.edges) == comb(self.order, 2)


def complete_graph(n: int) -> Graph:
    return Graph(n, frozenset(combinations(range(1, n + 1), 2)))


def empty_graph(n: int) -> Graph:
    return Graph(n)


def path_graph(n: int) -> Graph:
    return Graph(n, frozenset((i, i + 1) for i in range(1, n)))


def disjoint_union(*graphs: Graph) -> Graph:
    edges, offset = set(), 0
    for g in graphs:
        edges.update((i + offset, j + offset) for i, j in g.edges)
        offset += g.order
    return Graph(offset, frozenset(edges))


def clique_union(sizes: Sequence[int]) -> Graph:
    return disjoint_union(*(complete_graph(s) for s in sizes))


def _pair_bits(adj_lookup, order: Sequence[int]) -> Tuple[int, ...]:
    k = len(order)
    return tuple(int(adj_lookup(order[a], order[b])) for a in range(k) for b in range(a + 1, k))


def canonical_form(g: Graph) -> Tuple[int, Tuple[int, ...]]:
    """Minimum upper-triangle adjacency string over degree-sorted vertex orders"""
    deg = g.degrees()
    classes: Dict[int, List[int]] = {}
    for v in range(1, g.order + 1):
        classes.setdefault(deg[v - 1], []).append(v)
    groups = [classes[d] for d in sorted(classes)]
    best = None
    for arrangement in product(*(permutations(grp) for grp in groups)):
        order = [v for part in arrangement for v in part]
        bits = _pair_bits(g.has_edge, order)
        if best is None or bits < best:
            best = bits
    return g.order, best or ()


def is_isomorphic(g: Graph, h: Graph) -> bool:
    if g.order != h.order or len(g.edges) != len(h.edges):
        return False
    if sorted(g.degrees()) != sorted(h.degrees()):
        return False
    return canonical_form(g) == canonical_form(h)


def automorphism_count(h: Graph) -> int:
    return sum(
        1 for perm in permutations(range(1, h.order + 1))
        if all(h.has_edge(perm[i - 1], perm[j - 1]) for i, j in h.edges)
    )


@lru_cache(maxsize=None)
def isomorphism_classes(k: int) -> Tuple[Graph, ...]:
    """One representative per isomorphism class of graphs on k vertices (k <= 5)"""
    if not 0 <= k <= 5:
        raise UnsupportedSizeError(f"isomorphism classes are enumerated for k <= 5, got {k}")
    pairs = list(combinations(range(1, k + 1), 2))
    seen = {}
    for mask in range(1 << len(pairs)):
        g = Graph(k, frozenset(p for b, p in enumerate(pairs) if mask >> b & 1))
        seen.setdefault(canonical_form(g), g)
    return tuple(seen[key] for key in sorted(seen, key=lambda c: (sum(c[1]), c[1])))


def graph_density(h: Graph, g: Graph) -> Fraction:
    k, n = h.order, g.order
    if k > n:
        return Fraction(0)
    target = canonical_form(h)
    edge_count, degree_profile = len(h.edges), sorted(h.degrees())
    hits = 0
    for subset in combinations(range(1, n + 1), k):
        sub = g.induced(subset)
        if len(sub.edges) != edge_count or sorted(sub.degrees()) != degree_profile:
            continue
        if canonical_form(sub) == target:
            hits += 1
    return Fraction(hits, comb(n, k))


def inversion_graph(pi: Permutation) -> Graph:
    values = pi.mapping
    return Graph(pi.order, frozenset(
        (i + 1, j + 1)
        for i in range(pi.order) for j in range(i + 1, pi.order)
        if values[i] > values[j]
    ))


def constant_graph_density(h: Graph, rho):
    """d(H, W) for the constant graphon rho, exact when rho is a Fraction"""
    k, e = h.order, len(h.edges)
    return Fraction(factorial(k), automorphism_count(h)) * rho ** e * (1 - rho) ** (comb(k, 2) - e)


# ---------------------------------------------------------------------------
# Block-size sequences


@dataclass(frozen=True)
class BlockSizes:
    """a_1, ..., a_h followed, if tail_alpha is set, by a_i = (1-alpha) alpha^(i-1) for i > h"""
    head: Tuple[float, ...] = ()
    tail_alpha: Optional[float] = None

    def __post_init__(self):
        head = tuple(float(v) for v in self.head)
        object.__setattr__(self, "head", head)
        if any(v < 0 for v in head):
            raise InvalidArgumentError("block sizes must be nonnegative")
        if self.tail_alpha is not None and not 0.0 < self.tail_alpha < 1.0:
            raise InvalidArgumentError(f"tail alpha must lie in (0, 1), got {self.tail_alpha}")
        if self.tail_alpha is None and not head:
            raise InvalidArgumentError("block sequence is empty")
        if self.total_mass() > 1.0 + get_settings().MARGINAL_TOL:
            raise InvalidArgumentError(f"block sizes sum to {self.total_mass()} > 1")

    @classmethod
    def geometric(cls, alpha: float) -> "BlockSizes":
        return cls((), alpha)

    @classmethod
    def with_geometric_tail(cls, head: Sequence[float], alpha: float) -> "BlockSizes":
        return cls(tuple(head), alpha)

    def tail_mass(self) -> float:
        return 0.0 if self.tail_alpha is None else self.tail_alpha ** len(self.head)

    def total_mass(self) -> float:
        return sum(self.head) + self.tail_mass()

    def size(self, i: int) -> float:
        if i <= len(self.head):
            return self.head[i - 1]
        if self.tail_alpha is None:
            return 0.0
        return (1 - self.tail_alpha) * self.tail_alpha ** (i - 1)

    def power_sum(self, ell: int) -> float:
        """sum_i a_i^ell with the geometric tail in closed form"""
        total = sum(v ** ell for v in self.head)
        if self.tail_alpha is not None:
            total += geometric_power_sum(self.tail_alpha, ell, start=len(self.head) + 1)
        return total

    def locate(self, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(1-based block index or 0 outside every block, block start, block size) for t in [0,1)"""
        t = np.asarray(t, dtype=float)
        edges = np.concatenate([[0.0], np.cumsum(self.head)])
        index = np.searchsorted(edges, t, side="right")
        start = edges[np.minimum(index, len(self.head)) - 1] if len(self.head) else np.zeros_like(t)
        in_head = index <= len(self.head)
        index = np.where(in_head, index, 0).astype(np.int64)
        start = np.where(in_head, start, 0.0)
        width = np.where(in_head, np.array(self.head + (0.0,))[np.maximum(index - 1, 0)], 0.0)
        if self.tail_alpha is not None:
            h = len(self.head)
            scale = self.tail_mass()
            offset = edges[-1]
            rel = (t - offset) / scale
            in_tail = ~in_head & (rel < 1.0)
            j = block_index(self.tail_alpha, np.where(in_tail, rel, 0.0))
            tail_start = offset + scale * (1.0 - self.tail_alpha ** (j - 1))
            tail_width = scale * (1 - self.tail_alpha) * self.tail_alpha ** (j - 1)
            index = np.where(in_tail, h + j, index)
            start = np.where(in_tail, tail_start, start)
            width = np.where(in_tail, tail_width, width)
        return index, start, width

    def draw(self, rng: np.random.Generator, shape) -> Tuple[np.ndarray, np.ndarray]:
        """Block index (0 for the uncovered remainder) and uniform in-block position"""
        u = rng.random(shape)
        edges = np.concatenate([[0.0], np.cumsum(self.head)])
        index = np.searchsorted(edges, u, side="right")
        index = np.where(index <= len(self.head), index, 0)
        if self.tail_alpha is not None:
            tail = (index == 0) & (u < edges[-1] + self.tail_mass())
            index = np.where(tail, len(self.head) + rng.geometric(1 - self.tail_alpha, size=shape), index)
        return index.astype(np.int64), rng.random(shape)

    def to_dict(self) -> Dict:
        out: Dict = {"head": list(self.head)}
        if self.tail_alpha is not None:
            out["tail_alpha"] = self.tail_alpha
        return out


# ---------------------------------------------------------------------------
# Graphons


class Graphon(ABC):
    form: ClassVar[str]
    pointwise: ClassVar[bool] = True

    @abstractmethod
    def kernel_many(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """W(x, y) elementwise"""

    @abstractmethod
    def to_dict(self) -> Dict:
        """Structured descriptor (see docs/schema.md)"""

    def edge_probabilities(self, rng: np.random.Generator, size: int, k: int) -> np.ndarray:
        """(size, k, k) edge probabilities of size independent W-random graphs"""
        x = rng.random((size, k))
        return self.kernel_many(x[:, :, None], x[:, None, :])


@dataclass(frozen=True)
class Constant(Graphon):
    rho: float
    form: ClassVar[str] = "constant"

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise InvalidArgumentError(f"rho must lie in [0, 1], got {self.rho}")

    def kernel_many(self, x, y):
        return np.full(np.broadcast(np.asarray(x), np.asarray(y)).shape, float(self.rho))

    def edge_probabilities(self, rng, size, k):
        return np.full((size, k, k), float(self.rho))

    def to_dict(self):
        return {"form": self.form, "rho": float(self.rho)}


@dataclass(frozen=True)
class Step(Graphon):
    values: Tuple[Tuple[float, ...], ...]
    widths: Tuple[float, ...]
    form: ClassVar[str] = "step"

    def __post_init__(self):
        values = tuple(tuple(float(v) for v in row) for row in self.values)
        widths = tuple(float(w) for w in self.widths)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "widths", widths)
        k = len(widths)
        m = np.array(values)
        if k == 0 or m.shape != (k, k):
            raise InvalidArgumentError("step graphon needs a k x k matrix and k widths")
        if not np.allclose(m, m.T, atol=0.0):
            raise InvalidArgumentError("step graphon matrix must be symmetric")
        if (m < 0).any() or (m > 1).any():
            raise InvalidArgumentError("step graphon values must lie in [0, 1]")
        if any(w <= 0 for w in widths) or abs(sum(widths) - 1.0) > 1e-12:
            raise InvalidArgumentError("step widths must be positive and sum to 1")

    def _cell(self, t):
        edges = np.cumsum(self.widths)[:-1]
        return np.searchsorted(edges, np.asarray(t, dtype=float), side="right")

    def kernel_many(self, x, y):
        return np.array(self.values)[self._cell(x), self._cell(y)]

    def to_dict(self):
        return {"form": self.form, "values": [list(r) for r in self.values],
                "widths": list(self.widths)}


@dataclass(frozen=True)
class CliqueBlocks(Graphon):
    """1 on the diagonal blocks of a block-size sequence, 0 elsewhere"""
    sizes: BlockSizes
    form: ClassVar[str] = "cliqueblocks"

    def kernel_many(self, x, y):
        bx = self.sizes.locate(x)[0]
        by = self.sizes.locate(y)[0]
        return ((bx == by) & (bx > 0)).astype(float)

    def edge_probabilities(self, rng, size, k):
        blocks, _ = self.sizes.draw(rng, (size, k))
        return ((blocks[:, :, None] == blocks[:, None, :]) & (blocks[:, :, None] > 0)).astype(float)

    def to_dict(self):
        return {"form": self.form, "sizes": self.sizes.to_dict()}


@dataclass(frozen=True)
class Planted(Graphon):
    """A rescaled copy of base on every diagonal block, 0 across blocks"""
    base: Graphon
    sizes: BlockSizes
    form: ClassVar[str] = "planted"

    def __post_init__(self):
        if not self.base.pointwise:
            raise UnsupportedFormError(f"cannot plant a {self.base.form} graphon")

    def kernel_many(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        bx, start, width = self.sizes.locate(x)
        by = self.sizes.locate(y)[0]
        same = (bx == by) & (bx > 0)
        safe = np.where(width > 0, width, 1.0)
        u = np.clip((x - start) / safe, 0.0, np.nextafter(1.0, 0.0))
        v = np.clip((y - start) / safe, 0.0, np.nextafter(1.0, 0.0))
        return np.where(same, self.base.kernel_many(u, v), 0.0)

    def edge_probabilities(self, rng, size, k):
        blocks, within = self.sizes.draw(rng, (size, k))
        same = (blocks[:, :, None] == blocks[:, None, :]) & (blocks[:, :, None] > 0)
        inner = self.base.kernel_many(within[:, :, None], within[:, None, :])
        return np.where(same, inner, 0.0)

    def to_dict(self):
        return {"form": self.form, "base": self.base.to_dict(), "sizes": self.sizes.to_dict()}


@dataclass(frozen=True)
class PermutonInduced(Graphon):
    """W_mu: latent points from mu, edge iff the two points are inverted"""
    mu: Permuton
    form: ClassVar[str] = "permuton"
    pointwise: ClassVar[bool] = False

    def kernel_many(self, x, y):
        raise UnsupportedFormError(
            "permuton-induced graphons live on (unit square, mu) and have no pointwise kernel; "
            "use sampling"
        )

    def edge_probabilities(self, rng, size, k):
        points = self.mu.sample_points(rng, size * k).reshape(size, k, 2)
        dx = points[:, :, None, 0] - points[:, None, :, 0]
        dy = points[:, :, None, 1] - points[:, None, :, 1]
        return (dx * dy < 0).astype(float)

    def to_dict(self):
        return {"form": self.form, "permuton": self.mu.to_dict()}


def clique_blocks_geometric(alpha: float) -> CliqueBlocks:
    return CliqueBlocks(BlockSizes.geometric(alpha))


def planted_constant(rho: float, alpha: float) -> Planted:
    """W^r_{rho, alpha}"""
    return Planted(Constant(rho), BlockSizes.geometric(alpha))


# ---------------------------------------------------------------------------
# Sampling and densities


def kernel(w: Graphon, x: float, y: float) -> float:
    if not (0.0 <= x < 1.0 and 0.0 <= y < 1.0):
        raise InvalidArgumentError(f"({x}, {y}) is outside [0,1)^2")
    return float(w.kernel_many(np.array([x]), np.array([y]))[0])


def sample_adjacency(w: Graphon, rng: np.random.Generator, size: int, k: int) -> np.ndarray:
    """(size, k, k) symmetric boolean adjacency of independent W-random graphs"""
    prob = w.edge_probabilities(rng, size, k)
    upper = np.triu(np.ones((k, k), dtype=bool), 1)
    coins = rng.random((size, k, k))
    adj = (coins < prob) & upper
    return adj | adj.transpose(0, 2, 1)


def sample_graph(w: Graphon, n: int, seed: int) -> Graph:
    if n < 1:
        raise InvalidArgumentError("graph order must be at least 1")
    adj = sample_adjacency(w, np.random.default_rng(seed), 1, n)[0]
    return Graph(n, frozenset(
        (i + 1, j + 1) for i in range(n) for j in range(i + 1, n) if adj[i, j]
    ))


def _labelled_codes(h: Graph) -> np.ndarray:
    """Integer codes (pair bits, lexicographic pairs) of every labelling of H"""
    k = h.order
    pairs = list(combinations(range(k), 2))
    codes = set()
    for perm in permutations(range(1, k + 1)):
        code = 0
        for b, (i, j) in enumerate(pairs):
            if h.has_edge(perm[i], perm[j]):
                code |= 1 << b
        codes.add(code)
    return np.array(sorted(codes), dtype=np.int64)


def density_mc(h: Graph, w: Graphon, samples: int, seed: int,
               chunks: Optional[int] = None) -> Estimate:
    k = h.order
    cap = get_settings().GRAPH_MAX_ORDER
    if k > cap:
        raise UnsupportedSizeError(f"Monte Carlo graph densities support |H| <= {cap}, got {k}")
    if samples < 1:
        raise InvalidArgumentError("samples must be at least 1")
    targets = _labelled_codes(h)
    rows, cols = np.triu_indices(k, 1)
    weights = (1 << np.arange(len(rows))).astype(np.int64)

    def task(rng, size):
        adj = sample_adjacency(w, rng, size, k)
        codes = adj[:, rows, cols].astype(np.int64) @ weights
        return int(np.isin(codes, targets).sum())

    hits = sum(run_chunks(task, samples, seed, chunks))
    return proportion_estimate(hits, samples)


def _quadrature_rule(h: Graph, w: Graphon):
    k = h.order
    letters = ascii_lowercase[:k]

    def rule(grid: int) -> float:
        nodes = midpoints(grid)
        kern = w.kernel_many(nodes[:, None], nodes[None, :])
        operands, subscripts = [], []
        for i, j in combinations(range(1, k + 1), 2):
            operands.append(kern if h.has_edge(i, j) else 1.0 - kern)
            subscripts.append(letters[i - 1] + letters[j - 1])
        if not operands:
            return 1.0
        value = np.einsum(",".join(subscripts) + "->", *operands, optimize=True)
        return float(value) / grid ** k

    return rule


def density_quadrature(h: Graph, w: Graphon, grid: Optional[int] = None,
                       tol: Optional[float] = None, refine_grid: bool = True) -> float:
    """k!/|Aut H| times the midpoint rule for the labelled-copy integral"""
    if not w.pointwise:
        raise UnsupportedFormError(f"{w.form} graphons have no pointwise kernel to integrate")
    settings = get_settings()
    k = h.order
    if k > settings.QUADRATURE_MAX_ORDER:
        raise UnsupportedSizeError(
            f"quadrature supports |H| <= {settings.QUADRATURE_MAX_ORDER}, got {k}"
        )
    grid = grid or settings.QUADRATURE_GRID
    if grid < 2:
        raise InvalidArgumentError("quadrature grid must be at least 2")
    scale = factorial(k) / automorphism_count(h)
    rule = _quadrature_rule(h, w)
    if not refine_grid:
        return scale * rule(grid)
    max_grid = {4: 64, 5: 32}.get(k, settings.QUADRATURE_MAX_GRID)
    if grid * 2 > max_grid:
        return scale * rule(grid)
    value, used, converged = refine(rule, grid, tol, max_grid)
    logger.debug("Quadrature for %s settled at grid %d (converged=%s)", h, used, converged)
    return scale * value


def kernel_image(w: Graphon, resolution: int) -> np.ndarray:
    """Kernel at cell midpoints, indexed [ix, iy]"""
    nodes = midpoints(resolution)
    return w.kernel_many(nodes[:, None], nodes[None, :])


def sampled_kernel_image(w: PermutonInduced, resolution: int, seed: int) -> np.ndarray:
    """Adjacency of a sampled inversion graph on resolution vertices, sorted by x"""
    points = w.mu.sample_points(np.random.default_rng(seed), resolution)
    points = points[np.argsort(points[:, 0])]
    dx = points[:, None, 0] - points[None, :, 0]
    dy = points[:, None, 1] - points[None, :, 1]
    return (dx * dy < 0).astype(float)
