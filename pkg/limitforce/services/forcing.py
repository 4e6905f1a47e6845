"""Density expressions for integrals of cdf powers and flag products, and numerical
certification of the forcing constraint systems of the diagonal block families"""
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from math import factorial
from typing import Dict, List, Mapping, Optional, Sequence, Tuple
import logging
import re

import numpy as np
from numpy.polynomial import polynomial as npoly

from limitforce.config import get_settings
from limitforce.exceptions import InvalidArgumentError, UnsupportedSizeError
from limitforce.models import Estimate, ForcingReport
from limitforce.services.permutations import Permutation, RootedPermutation, all_patterns
from limitforce.services.permuton import (
    MonotoneGeometric,
    Permuton,
    SquareGeometric,
    Uniform,
    density_exact_diagonal,
    density_mc,
    pattern_counts_mc,
    quadrant_flags_many,
)
from limitforce.utils.geometric import block_bounds
from limitforce.utils.montecarlo import mean_estimate, run_chunks
from limitforce.utils.quadrature import refine, unit_square_grid

logger = logging.getLogger(__name__)

MAX_POLY_DEGREE = 8
BLOCK_GRID = 20
BLOCKS_CHECKED = 10


# ---------------------------------------------------------------------------
# Density expressions


@dataclass(frozen=True)
class DensityExpression:
    """sum over sigma of gamma_sigma d(sigma, mu); zero coefficients are dropped"""
    terms: Mapping[Permutation, Fraction] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "terms", {
            p: Fraction(c) for p, c in sorted(self.terms.items(), key=lambda t: (t[0].order, t[0].mapping))
            if c != 0
        })

    def __add__(self, other: "DensityExpression") -> "DensityExpression":
        merged = dict(self.terms)
        for p, c in other.terms.items():
            merged[p] = merged.get(p, Fraction(0)) + c
        return DensityExpression(merged)

    def scaled(self, factor) -> "DensityExpression":
        return DensityExpression({p: c * Fraction(factor) for p, c in self.terms.items()})

    def orders(self) -> List[int]:
        return sorted({p.order for p in self.terms})

    def coefficient(self, pattern: Permutation) -> Fraction:
        return self.terms.get(pattern, Fraction(0))

    def to_lines(self) -> str:
        return "".join(f"{p}:{c}\n" for p, c in self.terms.items())

    @classmethod
    def from_lines(cls, text: str) -> "DensityExpression":
        terms = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            pattern, _, coef = line.partition(":")
            terms[Permutation.parse(pattern)] = Fraction(coef.strip())
        return cls(terms)


def _check_order(m: int):
    cap = get_settings().EXACT_MAX_ORDER
    if m > cap:
        raise UnsupportedSizeError(f"expression order {m} exceeds the enumeration cap {cap}")


def _admissible_labellings(left: Sequence[bool], down: Sequence[bool], a: int, b: int) -> int:
    """Ways to fill the given positions with a labels needing left, b labels needing down
    and the remaining labels needing both, one label per position"""
    left_only = sum(1 for l, d in zip(left, down) if l and not d)
    down_only = sum(1 for l, d in zip(left, down) if d and not l)
    both = sum(1 for l, d in zip(left, down) if l and d)
    if left_only + down_only + both != len(left) or left_only > a or down_only > b:
        return 0
    return (factorial(a) // factorial(a - left_only)) * (factorial(b) // factorial(b - down_only)) \
        * factorial(both)


def _integral_expression(alpha: int, beta: int, k: int, separate_roots: bool) -> DensityExpression:
    if min(alpha, beta, k) < 0:
        raise InvalidArgumentError("exponents must be nonnegative")
    m = alpha + beta + k + (2 if separate_roots else 1)
    _check_order(m)
    terms = {}
    for sigma in all_patterns(m):
        values = sigma.mapping
        count = 0
        for p in range(m):
            roots = [(p, q) for q in range(m) if q != p] if separate_roots else [(p, p)]
            for xp, yq in roots:
                rest = [r for r in range(m) if r not in (xp, yq)]
                count += _admissible_labellings(
                    [r < xp for r in rest], [values[r] < values[yq] for r in rest], alpha, beta
                )
        terms[sigma] = Fraction(count, factorial(m))
    return DensityExpression(terms)


def express_lambda_integral(alpha: int, beta: int, k: int) -> DensityExpression:
    """Coefficients with sum gamma_sigma d(sigma, mu) = integral of x^alpha y^beta F_mu^k d(lambda)"""
    return _integral_expression(alpha, beta, k, separate_roots=True)


def express_mu_integral(alpha: int, beta: int, k: int) -> DensityExpression:
    """Same as express_lambda_integral but integrating against mu itself"""
    return _integral_expression(alpha, beta, k, separate_roots=False)


def _ordered_set_partitions(items: Tuple[int, ...], sizes: Sequence[int]):
    if not sizes:
        yield ()
        return
    for first in combinations(items, sizes[0]):
        remaining = tuple(i for i in items if i not in first)
        for tail in _ordered_set_partitions(remaining, sizes[1:]):
            yield (first,) + tail


def _realises(values: Sequence[int], root: int, group: Sequence[int], flag: RootedPermutation) -> bool:
    positions = sorted(group + (root,))
    if positions.index(root) + 1 != flag.root:
        return False
    sub = [values[p] for p in positions]
    ranks = sorted(range(len(sub)), key=lambda i: sub[i])
    standard = [0] * len(sub)
    for r, i in enumerate(ranks, start=1):
        standard[i] = r
    return tuple(standard) == flag.pattern.mapping


def express_flag_product(flags: Sequence[RootedPermutation]) -> DensityExpression:
    """Coefficients for the integral over mu of prod F_mu^flag"""
    flags = list(flags)
    if not flags:
        raise InvalidArgumentError("at least one flag is required")
    sizes = [f.order - 1 for f in flags]
    m = 1 + sum(sizes)
    _check_order(m)
    weight = 1
    for s in sizes:
        weight *= factorial(s)
    terms = {}
    for tau in all_patterns(m):
        values = tau.mapping
        hits = 0
        for root in range(m):
            others = tuple(r for r in range(m) if r != root)
            for groups in _ordered_set_partitions(others, sizes):
                if all(_realises(values, root, g, f) for g, f in zip(groups, flags)):
                    hits += 1
        terms[tau] = Fraction(hits * weight, factorial(m))
    return DensityExpression(terms)


def exact_density(sigma: Permutation, mu: Permuton) -> Optional[float]:
    if isinstance(mu, Uniform):
        return 1.0 / factorial(sigma.order)
    if isinstance(mu, (MonotoneGeometric, SquareGeometric)) \
            and sigma.order <= get_settings().DIAGONAL_MAX_ORDER:
        return density_exact_diagonal(mu, sigma)
    return None


def evaluate_expression(e: DensityExpression, mu: Permuton, mode: str = "exact",
                        samples: Optional[int] = None, seed: Optional[int] = None) -> Estimate:
    """sum gamma_sigma d(sigma, mu); exact where an oracle exists, otherwise Monte Carlo"""
    if mode not in ("exact", "mc"):
        raise InvalidArgumentError(f"unknown evaluation mode {mode!r}")
    if not e.terms:
        return Estimate.exact(0.0)
    settings = get_settings()
    if mode == "exact":
        values = [exact_density(sigma, mu) for sigma in e.terms]
        if all(v is not None for v in values):
            return Estimate.exact(sum(float(c) * v for c, v in zip(e.terms.values(), values)))
        logger.warning("⚠️ No exact oracle for a %s permuton at orders %s; using Monte Carlo",
                       mu.form, e.orders())
    samples = samples or settings.DEFAULT_SAMPLES
    seed = settings.DEFAULT_SEED if seed is None else seed
    value, variance = 0.0, 0.0
    for order in e.orders():
        coef = np.zeros(factorial(order))
        for sigma, c in e.terms.items():
            if sigma.order == order:
                coef[sigma.rank()] = float(c)
        counts = pattern_counts_mc(mu, order, samples, derive_seed(seed, order))
        mean = float(coef @ counts) / samples
        second = float((coef ** 2) @ counts) / samples
        value += mean
        if samples > 1:
            variance += max(second - mean ** 2, 0.0) / (samples - 1)
    return Estimate(value=value, std_error=float(np.sqrt(variance)), samples=samples,
                    method="mc" if mode == "mc" else "mc-fallback")


def derive_seed(seed: int, *path: int) -> int:
    """Independent, reproducible seed for a sub-computation"""
    return int(np.random.SeedSequence([seed, *path]).generate_state(1, dtype=np.uint32)[0])


def lambda_integral_quadrature(mu: Permuton, alpha: int, beta: int, k: int,
                               grid: Optional[int] = None, tol: Optional[float] = None) -> float:
    """Integral of x^alpha y^beta F_mu^k over the unit square by refined midpoint quadrature"""
    def rule(g: int) -> float:
        x, y = unit_square_grid(g)
        return float(np.mean(x ** alpha * y ** beta * mu.cdf_many(x, y) ** k))

    value, _, _ = refine(rule, grid, tol)
    return value


def uniform_lambda_integral(alpha: int, beta: int, k: int) -> Fraction:
    """Closed form of the integral of x^alpha y^beta (xy)^k"""
    return Fraction(1, (alpha + k + 1) * (beta + k + 1))


# ---------------------------------------------------------------------------
# Forcing reports


def _report(constraint_id: str, target: float, estimate: Estimate, tolerance: float,
            detail: str = "") -> ForcingReport:
    passed = abs(estimate.value - target) <= tolerance
    return ForcingReport(
        constraint_id=constraint_id,
        target=target,
        value=estimate.value,
        std_error=estimate.std_error,
        tolerance=tolerance,
        passed=passed,
        method=estimate.method,
        detail=detail,
    )


def _tolerance(estimate: Estimate, z: float, abs_tol: float, exact_tol: float) -> float:
    if estimate.method == "exact":
        return exact_tol
    return max(abs_tol, z * estimate.std_error)


def monotone_d21(alpha: float) -> float:
    return (1 - alpha) / (1 + alpha)


def square_d21(alpha: float) -> float:
    return (1 - alpha) / (2 * (1 + alpha))


def verify_monotone_forcing(alpha: float, samples: Optional[int] = None, seed: Optional[int] = None,
                            mu: Optional[Permuton] = None, z_score: Optional[float] = None,
                            abs_tol: Optional[float] = None,
                            support_samples: Optional[int] = None) -> List[ForcingReport]:
    """Check the three constraints forcing the anti-diagonal staircase permuton on mu
    (default: the staircase itself)"""
    settings = get_settings()
    mu = mu if mu is not None else MonotoneGeometric(alpha)
    samples = samples or settings.DEFAULT_SAMPLES
    seed = settings.DEFAULT_SEED if seed is None else seed
    z = settings.Z_SCORE if z_score is None else z_score
    abs_tol = settings.MC_ABS_TOL if abs_tol is None else abs_tol
    support_samples = support_samples or settings.SUPPORT_SAMPLES
    reports = []

    counts = pattern_counts_mc(mu, 3, samples, derive_seed(seed, 1))
    hits = int(counts[Permutation((2, 3, 1)).rank()] + counts[Permutation((3, 1, 2)).rank()])
    share = hits / samples
    reports.append(_report(
        "mono-231-312", 0.0,
        Estimate(value=share, std_error=float(np.sqrt(share * (1 - share) / samples)),
                 samples=samples, method="mc"),
        0.0, detail=f"{hits} of {samples} sampled triples induce 231 or 312",
    ))

    d21 = evaluate_expression(DensityExpression({Permutation((2, 1)): 1}), mu, "exact",
                              samples, derive_seed(seed, 2))
    reports.append(_report("mono-d21", monotone_d21(alpha), d21,
                           _tolerance(d21, z, abs_tol, settings.EXACT_TOL)))

    rng = np.random.default_rng(derive_seed(seed, 3))
    points = mu.sample_points(rng, support_samples)
    x, y = points[:, 0], points[:, 1]
    f = mu.cdf_many(x, y)
    residual = 1 - x - y + f - alpha / (1 - alpha) * (x + y - 2 * f)
    worst = float(np.abs(residual).max())
    reports.append(_report(
        "mono-support-integrand", 0.0, Estimate(value=worst, samples=support_samples, method="max"),
        settings.STRUCTURAL_TOL, detail=f"max |integrand| over {support_samples} support points",
    ))
    for r in reports:
        logger.info("%s %s: value %.6g target %.6g", "✅" if r.passed else "❌",
                    r.constraint_id, r.value, r.target)
    return reports


def square_block_residuals(mu: Permuton, alpha: float, blocks: int = BLOCKS_CHECKED,
                           grid: int = BLOCK_GRID) -> np.ndarray:
    """LHS - RHS of the per-block identity at interior grid points of the first blocks,
    flag masses from the cdf of mu and the in-block ratios f(NE)/f(SE) = y2/y1,
    f(SW)/f(NW) = y1/y2"""
    out = []
    frac = (np.arange(grid) + 0.5) / grid
    for i in range(1, blocks + 1):
        z, z_next = block_bounds(alpha, i)
        width = z_next - z
        x, y = np.meshgrid(z + frac * width, z + frac * width, indexing="ij")
        _, upper_left, lower_right, upper_right = quadrant_flags_many(mu, x, y)
        y1, y2 = y - z, z_next - y
        lhs = (1 - alpha) * (upper_right - lower_right * y2 / y1)
        rhs = alpha * (upper_left + lower_right + upper_left * y1 / y2 + lower_right * y2 / y1)
        out.append((lhs - rhs).ravel())
    return np.concatenate(out)


def _square_integrand_products(mu: Permuton, alpha: float, roots: np.ndarray,
                               rng: np.random.Generator, inner: int) -> np.ndarray:
    """Unbiased per-root estimates of h^2, h the squared-integrand of the flag identity.

    h is affine in the two flags needing a second sampled point, so two independent
    inner estimates h1, h2 give E[h1 h2] = h^2.
    """
    x, y = roots[:, 0], roots[:, 1]
    lower_left, upper_left, lower_right, upper_right = quadrant_flags_many(mu, x, y)
    f_nw = upper_left ** 2
    f_se = lower_right ** 2
    base = (1 - alpha) * upper_right * f_se * f_nw - alpha * (upper_left * f_nw * f_se + lower_right * f_nw * f_se)
    c_ne = -lower_right * f_nw
    c_sw = -alpha * upper_left * f_se

    def inner_estimate():
        pts = mu.sample_points(rng, len(roots) * inner).reshape(len(roots), inner, 2)
        bx, by = pts[..., 0], pts[..., 1]
        xr, yr = x[:, None], y[:, None]
        f_at_b = mu.cdf_many(bx, np.broadcast_to(yr, bx.shape))
        south_east = (bx > xr) & (by < yr)
        south_west = (bx < xr) & (by < yr)
        f_ne = 2 * np.mean(np.where(south_east, (bx - xr) - (f_at_b - lower_left[:, None]), 0.0), axis=1)
        f_sw = 2 * np.mean(np.where(south_west, bx - f_at_b, 0.0), axis=1)
        return base + c_ne * f_ne + c_sw * f_sw

    return inner_estimate() * inner_estimate()


def verify_square_forcing(alpha: float, samples: Optional[int] = None, seed: Optional[int] = None,
                          mu: Optional[Permuton] = None, z_score: Optional[float] = None,
                          abs_tol: Optional[float] = None, inner_samples: Optional[int] = None,
                          support_samples: Optional[int] = None) -> List[ForcingReport]:
    """Check the constraints forcing the union of uniform diagonal squares on mu
    (default: the square-block permuton itself)"""
    settings = get_settings()
    mu = mu if mu is not None else SquareGeometric(alpha)
    samples = samples or settings.DEFAULT_SAMPLES
    seed = settings.DEFAULT_SEED if seed is None else seed
    z = settings.Z_SCORE if z_score is None else z_score
    abs_tol = settings.MC_ABS_TOL if abs_tol is None else abs_tol
    inner = inner_samples or settings.INNER_SAMPLES
    support_samples = support_samples or settings.SUPPORT_SAMPLES
    target = square_d21(alpha)
    reports = []

    d21_exact = evaluate_expression(DensityExpression({Permutation((2, 1)): 1}), mu, "exact",
                                    samples, derive_seed(seed, 1))
    reports.append(_report("square-d21-exact", target, d21_exact,
                           _tolerance(d21_exact, z, abs_tol, settings.EXACT_TOL)))

    d21_mc = density_mc(mu, Permutation((2, 1)), samples, derive_seed(seed, 2))
    reports.append(_report("square-d21-mc", target, d21_mc, max(abs_tol, z * d21_mc.std_error)))

    residuals = square_block_residuals(mu, alpha)
    worst = float(np.abs(residuals).max())
    reports.append(_report(
        "square-block-identity", 0.0, Estimate(value=worst, samples=residuals.size, method="max"),
        settings.STRUCTURAL_TOL,
        detail=f"{BLOCK_GRID}x{BLOCK_GRID} interior grid in each of the first {BLOCKS_CHECKED} blocks",
    ))

    def task(rng, size):
        roots = mu.sample_points(rng, size)
        return _square_integrand_products(mu, alpha, roots, rng, inner)

    products = np.concatenate(run_chunks(task, support_samples, derive_seed(seed, 3)))
    integral = mean_estimate(products)
    reports.append(_report("square-flag-integral", 0.0, integral,
                           max(abs_tol, z * integral.std_error),
                           detail=f"{support_samples} roots, {inner} inner points per flag estimate"))
    for r in reports:
        logger.info("%s %s: value %.6g target %.6g", "✅" if r.passed else "❌",
                    r.constraint_id, r.value, r.target)
    return reports


# ---------------------------------------------------------------------------
# Uniformity on corner rectangles


def _rectangle_mass(mu: Permuton, cx, cy, x, y):
    """mu([cx, x] x [cy, y]) for x >= cx, y >= cy"""
    return mu.cdf_many(x, y) - mu.cdf_many(cx, y) - mu.cdf_many(x, cy) + mu.cdf_many(cx, cy)


def moment_uniformity_statistic(mu: Permuton, samples: Optional[int] = None,
                                inner_samples: Optional[int] = None, seed: Optional[int] = None,
                                mode: str = "pair") -> Estimate:
    """Cauchy-Schwarz defect of mu against area on rectangles spanned by support points.

    pair: points p1, p2 with x1 < x2, y2 < y1 span [x1, x2] x [y2, y1].
    triple: points with x1 < x2 < x3, y2 < y3 < y1 span [x2, x3] x [y2, y3].
    Uniform points (x, y), (x', y') outside the rectangle contribute zero.
    """
    if mode not in ("pair", "triple"):
        raise InvalidArgumentError(f"unknown mode {mode!r}")
    settings = get_settings()
    samples = samples or settings.SUPPORT_SAMPLES
    inner = inner_samples or settings.INNER_SAMPLES
    seed = settings.DEFAULT_SEED if seed is None else seed
    anchors = 2 if mode == "pair" else 3

    def task(rng, size):
        pts = mu.sample_points(rng, size * anchors).reshape(size, anchors, 2)
        if mode == "pair":
            (x1, y1), (x2, y2) = pts[:, 0].T, pts[:, 1].T
            valid = (x1 < x2) & (y2 < y1)
            cx, cy, fx, fy = x1, y2, x2, y1
        else:
            (x1, y1), (x2, y2), (x3, y3) = pts[:, 0].T, pts[:, 1].T, pts[:, 2].T
            valid = (x1 < x2) & (x2 < x3) & (y2 < y3) & (y3 < y1)
            cx, cy, fx, fy = x2, y2, x3, y3
        cx, cy, fx, fy = (v[:, None] for v in (cx, cy, fx, fy))
        u = rng.random((size, inner, 4))
        x, y, xp, yp = u[..., 0], u[..., 1], u[..., 2], u[..., 3]
        inside = ((x >= cx) & (x <= fx) & (y >= cy) & (y <= fy)
                  & (xp >= cx) & (xp <= fx) & (yp >= cy) & (yp <= fy) & valid[:, None])
        xc, yc = np.maximum(x, cx), np.maximum(y, cy)
        xpc, ypc = np.maximum(xp, cx), np.maximum(yp, cy)
        mass = _rectangle_mass(mu, cx, cy, xc, yc)
        mass_p = _rectangle_mass(mu, cx, cy, xpc, ypc)
        g = (xc - cx) * (yc - cy)
        g_p = (xpc - cx) * (ypc - cy)
        value = g_p ** 2 * mass ** 2 - g * mass * g_p * mass_p
        return np.where(inside, value, 0.0).mean(axis=1)

    values = np.concatenate(run_chunks(task, samples, seed))
    return mean_estimate(values)


# ---------------------------------------------------------------------------
# Polynomial constraint systems


_TERM = re.compile(r"[+-]?[^+-]+")


@dataclass(frozen=True)
class BivariatePolynomial:
    """coefficients[i][j] multiplies x^i y^j"""
    coefficients: Tuple[Tuple[float, ...], ...]

    def __post_init__(self):
        rows = tuple(tuple(float(v) for v in row) for row in self.coefficients)
        width = max((len(r) for r in rows), default=0)
        rows = tuple(r + (0.0,) * (width - len(r)) for r in rows) or ((0.0,),)
        object.__setattr__(self, "coefficients", rows)
        if self.degree() > MAX_POLY_DEGREE:
            raise InvalidArgumentError(f"polynomial degree {self.degree()} exceeds {MAX_POLY_DEGREE}")

    def degree(self) -> int:
        return max((i + j for i, row in enumerate(self.coefficients)
                    for j, c in enumerate(row) if c != 0), default=0)

    def __call__(self, x, y):
        return npoly.polyval2d(x, y, np.array(self.coefficients))

    @classmethod
    def from_terms(cls, terms: Mapping[Tuple[int, int], float]) -> "BivariatePolynomial":
        if not terms:
            return cls(((0.0,),))
        rows = max(i for i, _ in terms) + 1
        cols = max(j for _, j in terms) + 1
        grid = [[0.0] * cols for _ in range(rows)]
        for (i, j), c in terms.items():
            grid[i][j] += float(c)
        return cls(tuple(tuple(r) for r in grid))

    @classmethod
    def parse(cls, text: str) -> "BivariatePolynomial":
        """Sums of terms like "3*x^2*y", "-0.5*y", "x*y" """
        terms: Dict[Tuple[int, int], float] = Counter()
        cleaned = text.replace(" ", "").replace("**", "^")
        if not cleaned:
            raise InvalidArgumentError("empty polynomial")
        for raw in _TERM.findall(cleaned):
            sign = -1.0 if raw.startswith("-") else 1.0
            coef, i, j = sign, 0, 0
            for factor in raw.lstrip("+-").split("*"):
                base, _, power = factor.partition("^")
                exponent = int(power) if power else 1
                if base == "x":
                    i += exponent
                elif base == "y":
                    j += exponent
                else:
                    try:
                        coef *= float(Fraction(base)) ** exponent
                    except ValueError:
                        raise InvalidArgumentError(f"cannot parse polynomial term {raw!r}")
            terms[(i, j)] += coef
        return cls.from_terms(terms)


def polynomial_constraint_residual(mu: Permuton, polys: Sequence[BivariatePolynomial],
                                   reference: BivariatePolynomial, grid: Optional[int] = None,
                                   tol: Optional[float] = None) -> Tuple[float, float]:
    """(integral of prod_i (F - p_i)^2, integral of (F - p)^2) over the unit square"""
    def product_rule(g: int) -> float:
        x, y = unit_square_grid(g)
        f = mu.cdf_many(x, y)
        value = np.ones_like(f)
        for p in polys:
            value = value * (f - p(x, y)) ** 2
        return float(np.mean(value))

    def distance_rule(g: int) -> float:
        x, y = unit_square_grid(g)
        return float(np.mean((mu.cdf_many(x, y) - reference(x, y)) ** 2))

    first, _, _ = refine(product_rule, grid, tol)
    second, _, _ = refine(distance_rule, grid, tol)
    return first, second
