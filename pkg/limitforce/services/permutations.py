"""Finite permutations: induced patterns, exact pattern densities, rooted patterns"""
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations, permutations
from math import comb, factorial
from typing import Iterable, List, Sequence, Tuple
import logging

import numpy as np

from limitforce.config import get_settings
from limitforce.exceptions import InvalidArgumentError, UnsupportedSizeError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Permutation:
    """One-line notation, 1-based: mapping[i-1] is pi(i)"""
    mapping: Tuple[int, ...]

    def __post_init__(self):
        mapping = tuple(int(v) for v in self.mapping)
        object.__setattr__(self, "mapping", mapping)
        if not mapping:
            raise InvalidArgumentError("permutation must have order >= 1")
        if sorted(mapping) != list(range(1, len(mapping) + 1)):
            raise InvalidArgumentError(f"{mapping} is not a bijection of [{len(mapping)}]")

    @classmethod
    def parse(cls, text: str) -> "Permutation":
        text = text.strip()
        if "," in text:
            return cls(tuple(int(t) for t in text.split(",")))
        if not text.isdigit():
            raise InvalidArgumentError(f"cannot parse permutation {text!r}")
        return cls(tuple(int(c) for c in text))

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(1, n + 1)))

    @classmethod
    def reversal(cls, n: int) -> "Permutation":
        return cls(tuple(range(n, 0, -1)))

    @property
    def order(self) -> int:
        return len(self.mapping)

    def __len__(self) -> int:
        return len(self.mapping)

    def __call__(self, i: int) -> int:
        return self.mapping[i - 1]

    def __str__(self) -> str:
        if self.order <= 9:
            return "".join(str(v) for v in self.mapping)
        return ",".join(str(v) for v in self.mapping)

    def rank(self) -> int:
        """Position in the lexicographic listing of S_k"""
        return lehmer_rank(self.mapping)


@dataclass(frozen=True)
class RootedPermutation:
    """A pattern with one distinguished entry; root is a 1-based position"""
    pattern: Permutation
    root: int

    def __post_init__(self):
        if not 1 <= self.root <= self.pattern.order:
            raise InvalidArgumentError(
                f"root {self.root} outside [1, {self.pattern.order}]"
            )

    @classmethod
    def parse(cls, text: str) -> "RootedPermutation":
        """Accepts "2,3',4,1" and the compact "23'41" """
        text = text.strip()
        if "," in text:
            tokens = [t.strip() for t in text.split(",")]
        else:
            tokens = []
            for ch in text:
                if ch == "'":
                    if not tokens:
                        raise InvalidArgumentError(f"dangling root mark in {text!r}")
                    tokens[-1] += "'"
                else:
                    tokens.append(ch)
        roots = [i for i, t in enumerate(tokens, start=1) if t.endswith("'")]
        if len(roots) != 1:
            raise InvalidArgumentError(f"{text!r} must mark exactly one root")
        try:
            values = tuple(int(t.rstrip("'")) for t in tokens)
        except ValueError:
            raise InvalidArgumentError(f"cannot parse rooted permutation {text!r}")
        return cls(Permutation(values), roots[0])

    @property
    def order(self) -> int:
        return self.pattern.order

    def __str__(self) -> str:
        return ",".join(
            f"{v}'" if i == self.root else str(v)
            for i, v in enumerate(self.pattern.mapping, start=1)
        )


def standardize(values: Sequence[float]) -> Tuple[int, ...]:
    """Replace distinct values by their ranks 1..k, keeping their order"""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0] * len(values)
    for r, i in enumerate(order, start=1):
        ranks[i] = r
    return tuple(ranks)


def induced_pattern(pi: Permutation, indices: Sequence[int]) -> Permutation:
    indices = list(indices)
    if not indices:
        raise InvalidArgumentError("index set must be nonempty")
    for prev, cur in zip(indices, indices[1:]):
        if cur <= prev:
            raise InvalidArgumentError(f"indices {indices} are not strictly increasing")
    if indices[0] < 1 or indices[-1] > pi.order:
        raise InvalidArgumentError(f"indices {indices} outside [1, {pi.order}]")
    return Permutation(standardize([pi(i) for i in indices]))


def count_occurrences(sigma: Permutation, pi: Permutation) -> int:
    """Number of k-subsets of positions of pi inducing sigma (pruned enumeration)"""
    k, n = sigma.order, pi.order
    if k > n:
        return 0
    pattern = sigma.mapping
    values = pi.mapping
    chosen: List[int] = []

    def extend(start: int) -> int:
        depth = len(chosen)
        if depth == k:
            return 1
        total = 0
        target = pattern[depth]
        for pos in range(start, n - (k - depth) + 1):
            v = values[pos]
            if all((v > chosen[j]) == (target > pattern[j]) for j in range(depth)):
                chosen.append(v)
                total += extend(pos + 1)
                chosen.pop()
        return total

    return extend(0)


def pattern_density(sigma: Permutation, pi: Permutation) -> Fraction:
    k, n = sigma.order, pi.order
    if k > n:
        return Fraction(0)
    settings = get_settings()
    if k > settings.EXACT_MAX_ORDER or n > settings.EXACT_MAX_N:
        raise UnsupportedSizeError(
            f"exact density needs |sigma| <= {settings.EXACT_MAX_ORDER} and "
            f"|pi| <= {settings.EXACT_MAX_N}, got {k} and {n}"
        )
    return Fraction(count_occurrences(sigma, pi), comb(n, k))


def rooted_pattern_indicator(sigma: RootedPermutation, pi: Permutation,
                             root_index: int, other_indices: Iterable[int]) -> bool:
    others = set(other_indices)
    if root_index in others:
        raise InvalidArgumentError("root index must not be among the other indices")
    positions = sorted(others | {root_index})
    if positions[0] < 1 or positions[-1] > pi.order:
        raise InvalidArgumentError(f"indices {positions} outside [1, {pi.order}]")
    if len(positions) != sigma.order:
        return False
    if positions.index(root_index) + 1 != sigma.root:
        return False
    return induced_pattern(pi, positions) == sigma.pattern


def pattern_density_by_roots(sigma: Permutation, pi: Permutation) -> Fraction:
    """Second route to d(sigma, pi): rooted indicators summed over root placements"""
    k, n = sigma.order, pi.order
    if k > n:
        return Fraction(0)
    hits = 0
    rooted = [RootedPermutation(sigma, r) for r in range(1, k + 1)]
    for subset in combinations(range(1, n + 1), k):
        for flag in rooted:
            root_index = subset[flag.root - 1]
            others = [i for i in subset if i != root_index]
            if rooted_pattern_indicator(flag, pi, root_index, others):
                hits += 1
    return Fraction(hits, k * comb(n, k))


def all_patterns(k: int) -> List[Permutation]:
    cap = get_settings().EXACT_MAX_ORDER
    if not 1 <= k <= cap:
        raise UnsupportedSizeError(f"pattern order must be in [1, {cap}], got {k}")
    return [Permutation(p) for p in permutations(range(1, k + 1))]


def lehmer_rank(mapping: Sequence[int]) -> int:
    k = len(mapping)
    rank = 0
    for i in range(k):
        smaller = sum(1 for j in range(i + 1, k) if mapping[j] < mapping[i])
        rank += smaller * factorial(k - 1 - i)
    return rank


def lehmer_rank_many(ranks: np.ndarray) -> np.ndarray:
    """Vectorised lehmer_rank over the rows of an integer array (rows are patterns)"""
    k = ranks.shape[1]
    out = np.zeros(ranks.shape[0], dtype=np.int64)
    for i in range(k):
        smaller = (ranks[:, i + 1:] < ranks[:, i:i + 1]).sum(axis=1)
        out += smaller * factorial(k - 1 - i)
    return out


def points_to_patterns(points: np.ndarray) -> np.ndarray:
    """(batch, k, 2) point clouds -> (batch, k) 0-based y-ranks in x order"""
    by_x = np.argsort(points[..., 0], axis=1)
    ys = np.take_along_axis(points[..., 1], by_x, axis=1)
    return np.argsort(np.argsort(ys, axis=1), axis=1)


def inversion_count(pi: Permutation) -> int:
    return sum(
        1 for i in range(pi.order) for j in range(i + 1, pi.order)
        if pi.mapping[i] > pi.mapping[j]
    )
