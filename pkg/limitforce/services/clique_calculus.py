"""Density algebra for P3-free graphons (disjoint unions of cliques) and for planted graphons"""
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import comb, factorial, prod
from typing import Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple
import logging

from limitforce.exceptions import InvalidArgumentError, UnsupportedSizeError
from limitforce.services.graphon import (
    BlockSizes,
    Graph,
    canonical_form,
    constant_graph_density,
)

logger = logging.getLogger(__name__)

Monomial = Tuple[int, ...]
Polynomial = Dict[Monomial, Fraction]

MAX_PARTITION_SIZE = 8


@dataclass(frozen=True)
class CliqueUnion:
    """Component orders of a disjoint union of complete graphs, kept sorted"""
    sizes: Tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(sorted(int(s) for s in self.sizes))
        if not sizes or sizes[0] < 1:
            raise InvalidArgumentError("a clique union needs at least one clique of order >= 1")
        object.__setattr__(self, "sizes", sizes)

    @classmethod
    def parse(cls, text: str) -> "CliqueUnion":
        try:
            return cls(tuple(int(t) for t in text.split("+")))
        except ValueError:
            raise InvalidArgumentError(f"cannot parse clique union {text!r}")

    @property
    def order(self) -> int:
        return sum(self.sizes)

    def __str__(self) -> str:
        return "+".join(str(s) for s in self.sizes)


@dataclass(frozen=True)
class CliqueDensityVector:
    """d(K_ell, W) for ell = 1, 2, ...; d(K_1) is always 1"""
    values: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        values = {int(k): v for k, v in self.values.items()}
        values.setdefault(1, 1)
        if values[1] != 1:
            raise InvalidArgumentError("d(K_1) must equal 1")
        ordered = [values[k] for k in sorted(values)]
        if any(not 0 <= v <= 1 for v in ordered):
            raise InvalidArgumentError("clique densities must lie in [0, 1]")
        if any(b > a + 1e-15 for a, b in zip(ordered, ordered[1:])):
            raise InvalidArgumentError("clique densities must be nonincreasing in the order")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_blocks(cls, a: BlockSizes, up_to: int) -> "CliqueDensityVector":
        return cls({ell: clique_density_blocks(a, ell) for ell in range(1, up_to + 1)})

    def __getitem__(self, ell: int):
        if ell not in self.values:
            raise InvalidArgumentError(f"clique density vector has no entry for K_{ell}")
        return self.values[ell]

    def to_csv(self) -> str:
        return "ell,value\n" + "".join(f"{k},{self.values[k]}\n" for k in sorted(self.values))


def _multiply(p: Polynomial, q: Polynomial) -> Polynomial:
    out: Polynomial = {}
    for m1, c1 in p.items():
        for m2, c2 in q.items():
            key = tuple(sorted(m1 + m2))
            out[key] = out.get(key, Fraction(0)) + c1 * c2
    return {m: c for m, c in out.items() if c != 0}


def _split_probability(target: Tuple[int, ...], first: int, rest: Tuple[int, ...]) -> Fraction:
    """P(a random first-subset of the union of cliques `target` spans a clique and
    the remaining vertices induce the clique union `rest`)"""
    n = sum(target)
    remaining = Counter(rest)
    hits = 0
    for pos, c in enumerate(target):
        if c < first:
            continue
        leftover = Counter(target[:pos] + target[pos + 1:])
        if c > first:
            leftover[c - first] += 1
        if leftover == remaining:
            hits += comb(c, first)
    return Fraction(hits, comb(n, first))


@lru_cache(maxsize=None)
def clique_union_polynomial(sizes: Tuple[int, ...]) -> Tuple[Tuple[Monomial, Fraction], ...]:
    """d(K_s1 u ... u K_sk, W) as a polynomial in d(K_ell, W), ell >= 2, for P3-free W.

    Monomials are sorted tuples of clique orders. Uses
    d(K_s1) d(rest) = p_1 d(G) + sum_i p_i d(H_i), H_i merging K_s1 into the i-th clique of rest.
    """
    sizes = tuple(sorted(sizes))
    if len(sizes) == 1:
        return ((() if sizes[0] == 1 else (sizes[0],), Fraction(1)),)
    first, rest = sizes[0], sizes[1:]
    product_terms = _multiply(
        dict(clique_union_polynomial((first,))), dict(clique_union_polynomial(rest))
    )
    p_self = _split_probability(sizes, first, rest)
    merged_seen = set()
    for i, size in enumerate(rest):
        merged = tuple(sorted(rest[:i] + (size + first,) + rest[i + 1:]))
        if merged in merged_seen:
            continue
        merged_seen.add(merged)
        p_merge = _split_probability(merged, first, rest)
        for mono, coef in clique_union_polynomial(merged):
            product_terms[mono] = product_terms.get(mono, Fraction(0)) - p_merge * coef
    result = {m: c / p_self for m, c in product_terms.items() if c != 0}
    return tuple(sorted(result.items()))


def clique_union_density(g, v) -> float:
    """Density of a disjoint clique union under any P3-free graphon with clique densities v"""
    sizes = g.sizes if isinstance(g, CliqueUnion) else CliqueUnion(tuple(g)).sizes
    lookup = v.__getitem__ if isinstance(v, CliqueDensityVector) else CliqueDensityVector(v).__getitem__
    total = 0
    for mono, coef in clique_union_polynomial(sizes):
        term = coef
        for ell in mono:
            term = term * lookup(ell)
        total += term
    return total


def clique_density_blocks(a: BlockSizes, ell: int) -> float:
    """d(K_ell, W^c_a) = sum_j a_j^ell"""
    if ell < 1:
        raise InvalidArgumentError(f"clique order must be >= 1, got {ell}")
    if ell == 1:
        return 1.0
    return a.power_sum(ell)


def partitions_with_empties(k: int, max_parts: Optional[int] = None) -> Iterator[Tuple[Tuple[int, ...], ...]]:
    """Set partitions of [k] with at most max_parts nonempty blocks, each exactly once.

    Walks restricted-growth strings; empty blocks are never materialised.
    """
    if k > MAX_PARTITION_SIZE:
        raise UnsupportedSizeError(f"partitions are enumerated for k <= {MAX_PARTITION_SIZE}")
    if k <= 0:
        yield ()
        return
    max_parts = k if max_parts is None else max_parts
    growth = [0] * k

    def walk(pos: int, used: int):
        if pos == k:
            blocks: List[List[int]] = [[] for _ in range(used)]
            for element, label in enumerate(growth, start=1):
                blocks[label].append(element)
            yield tuple(tuple(b) for b in blocks)
            return
        for label in range(min(used + 1, max_parts)):
            growth[pos] = label
            yield from walk(pos + 1, max(used, label + 1))

    yield from walk(1, 1) if max_parts >= 1 else iter(())


def component_unions(g: Graph) -> List[Graph]:
    """Every graph induced by a nonempty set of connected components of g"""
    comps = g.components()
    out = []
    for mask in range(1, 1 << len(comps)):
        vertices = sorted(v for b, c in enumerate(comps) if mask >> b & 1 for v in c)
        out.append(g.induced(vertices))
    return out


def _group_weight(g: Graph, comps: List[List[int]], groups: Sequence[Sequence[int]]) -> Fraction:
    """c(Q) * prod_s mult_s(Q)! for a partition Q of the components into groups"""
    kinds = [canonical_form(g.induced(c)) for c in comps]
    totals = Counter(kinds)
    weight = Fraction(1, prod(factorial(v) for v in totals.values()))
    for group in groups:
        for count in Counter(kinds[i - 1] for i in group).values():
            weight *= factorial(count)
    group_sizes = Counter(sum(len(comps[i - 1]) for i in group) for group in groups)
    for mult in group_sizes.values():
        weight *= factorial(mult)
    return weight


def planted_density(g: Graph, base_densities, a: BlockSizes) -> float:
    """d(G, W_{->a}) from base-graphon densities of component unions and clique-union densities
    of W^c_a, summing over partitions of the components of G"""
    if g.order > MAX_PARTITION_SIZE:
        raise UnsupportedSizeError(f"planted densities support |G| <= {MAX_PARTITION_SIZE}")
    if g.order == 0:
        return 1.0
    lookup = _density_lookup(base_densities)
    comps = g.components()
    clique_vector = CliqueDensityVector.from_blocks(a, g.order)
    total = 0.0
    for groups in partitions_with_empties(len(comps)):
        term = float(_group_weight(g, comps, groups))
        for group in groups:
            vertices = sorted(v for i in group for v in comps[i - 1])
            term *= lookup(g.induced(vertices))
        sizes = tuple(sum(len(comps[i - 1]) for i in group) for group in groups)
        term *= clique_union_density(sizes, clique_vector)
        total += term
    return total


def _density_lookup(base_densities) -> Callable[[Graph], float]:
    if callable(base_densities):
        return base_densities
    table = {canonical_form(h): v for h, v in base_densities.items()}

    def lookup(h: Graph) -> float:
        key = canonical_form(h)
        if key not in table:
            raise InvalidArgumentError(f"base densities do not cover the graph {h}")
        return float(table[key])

    return lookup


def constant_base_densities(g: Graph, rho) -> Dict[Graph, float]:
    """Base densities of every component union of g under the constant graphon rho"""
    return {h: float(constant_graph_density(h, rho)) for h in component_unions(g)}
