import sys
import os
import time

# Add parent directory to path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from limitforce.config import get_settings
from limitforce.services import graphon as graphons
from limitforce.services.clique_calculus import (
    CliqueDensityVector,
    clique_union_density,
    planted_density,
    constant_base_densities,
)
from limitforce.services.forcing import (
    evaluate_expression,
    express_lambda_integral,
    lambda_integral_quadrature,
    uniform_lambda_integral,
    verify_monotone_forcing,
    verify_square_forcing,
)
from limitforce.services.graphon import Graph, BlockSizes, clique_union, planted_constant
from limitforce.services.permutations import all_patterns
from limitforce.services.permuton import MonotoneGeometric, Uniform, pattern_counts_mc
from limitforce.services.witness import certify_witness, solve_witness
from limitforce.models import WitnessProblem

settings = get_settings()
SAMPLES = int(os.environ.get("ACCEPTANCE_SAMPLES", 1_000_000))


def banner(title):
    print("\n" + "="*60)
    print(title)
    print("="*60)


def mark(ok):
    return "✅" if ok else "❌"


def integer_partitions(total, largest=None):
    largest = largest or total
    if total == 0:
        yield ()
        return
    for first in range(min(total, largest), 0, -1):
        for rest in integer_partitions(total - first, first):
            yield (first,) + rest


def check_uniform():
    banner("UNIFORM PERMUTON: S4 PATTERN DENSITIES")
    counts = pattern_counts_mc(Uniform(), 4, SAMPLES, seed=1)
    failures = 0
    se = (1 / 24 * 23 / 24 / SAMPLES) ** 0.5
    for sigma, c in zip(all_patterns(4), counts):
        value = c / SAMPLES
        ok = abs(value - 1 / 24) <= 4 * se
        failures += not ok
        print(f"  {mark(ok)} {sigma}: {value:.6f}")
    return failures == 0


def check_forcing():
    banner("FORCING CONSTRAINTS")
    ok_all = True
    for alpha in (1 / 3, 1 / 2, 2 / 3):
        for r in verify_monotone_forcing(alpha, samples=SAMPLES, seed=2):
            print(f"  {mark(r.passed)} monotone {alpha:.4f} {r.constraint_id}: {r.value:.3g} (target {r.target:.6g})")
            ok_all &= r.passed
    for alpha in (1 / 3, 1 / 2):
        for r in verify_square_forcing(alpha, samples=SAMPLES, seed=3):
            print(f"  {mark(r.passed)} square {alpha:.4f} {r.constraint_id}: {r.value:.3g} (target {r.target:.6g})")
            ok_all &= r.passed
    print("\nNegative control (uniform permuton against the staircase constraints):")
    reports = verify_monotone_forcing(0.5, samples=100_000, seed=4, mu=Uniform())
    first = reports[0]
    decisive = not first.passed and first.value >= 0.3
    print(f"  {mark(decisive)} d(231)+d(312) = {first.value:.4f}")
    return ok_all and decisive


def check_expressions():
    banner("CDF-POWER INTEGRALS AS DENSITY EXPRESSIONS")
    ok_all = True
    for mu in (Uniform(), MonotoneGeometric(0.5)):
        for a in range(3):
            for b in range(3 - a):
                for k in range(3 - a - b):
                    lhs = lambda_integral_quadrature(mu, a, b, k)
                    rhs = evaluate_expression(express_lambda_integral(a, b, k), mu)
                    ok = abs(lhs - rhs.value) <= max(1e-3, 4 * rhs.std_error)
                    if isinstance(mu, Uniform):
                        ok &= abs(rhs.value - float(uniform_lambda_integral(a, b, k))) <= 1e-6
                    ok_all &= ok
                    print(f"  {mark(ok)} {mu.form} ({a},{b},{k}): quadrature {lhs:.6f} expression {rhs.value:.6f}")
    return ok_all


def check_cliques():
    banner("CLIQUE UNIONS IN CLIQUE-BLOCK GRAPHONS")
    ok_all = True
    for alpha in (1 / 3, 1 / 2):
        w = graphons.clique_blocks_geometric(alpha)
        vector = CliqueDensityVector.from_blocks(w.sizes, 6)
        for order in range(1, 7):
            for sizes in integer_partitions(order):
                exact = clique_union_density(sizes, vector)
                est = graphons.density_mc(clique_union(sizes), w, SAMPLES, seed=order)
                ok = est.within(exact, settings.Z_SCORE, 0.0) or abs(est.value - exact) < 1e-12
                ok_all &= ok
                print(f"  {mark(ok)} alpha={alpha:.4f} {'+'.join(map(str, sizes))}: {exact:.6f} vs {est.value:.6f}")
    return ok_all


def check_planted():
    banner("PLANTED GRAPHON DENSITIES")
    graphs = {
        "K2": Graph.parse("2; 1-2"),
        "K3": Graph.parse("3; 1-2,1-3,2-3"),
        "P3": Graph.parse("3; 1-2,2-3"),
        "K1+K2": Graph.parse("3; 2-3"),
        "3K1": Graph.parse("3;"),
    }
    ok_all = True
    for rho, alpha in ((0.5, 0.5), (0.75, 0.5)):
        w = planted_constant(rho, alpha)
        for name, h in graphs.items():
            exact = planted_density(h, constant_base_densities(h, rho), w.sizes)
            est = graphons.density_mc(h, w, SAMPLES, seed=7)
            ok = est.within(exact, settings.Z_SCORE, 0.0)
            ok_all &= ok
            print(f"  {mark(ok)} rho={rho} alpha={alpha} {name}: {exact:.6f} vs {est.value:.6f}")
    return ok_all


def check_witnesses():
    banner("WITNESSES")
    ok_all = True
    for n in (2, 3, 4, 5):
        for alpha in (1 / 3, 1 / 2):
            problem = WitnessProblem(n=n, alpha=alpha, epsilon=0.01)
            result = solve_witness(problem)
            try:
                report = certify_witness(result, problem)
                ok = report.passed
                gap = report.power_sum_gap
            except Exception as e:
                print(f"  ❌ n={n} alpha={alpha:.4f}: {e}")
                ok_all = False
                continue
            ok_all &= ok
            print(f"  {mark(ok)} n={n} alpha={alpha:.4f}: epsilon {result.epsilon:.3g}, "
                  f"{result.iterations} iterations, gap {gap:.3g}")
    problem = WitnessProblem(n=3, alpha=0.5, epsilon=0.01)
    result = solve_witness(problem)
    a, b = BlockSizes.geometric(0.5), BlockSizes.with_geometric_tail(result.b, 0.5)
    print("\nTransfer to planted graphons (base Constant(1/2)):")
    for order in range(1, 4):
        for sizes in integer_partitions(order):
            h = clique_union(sizes)
            base = constant_base_densities(h, 0.5)
            diff = abs(planted_density(h, base, b) - planted_density(h, base, a))
            ok = diff <= 1e-9
            ok_all &= ok
            print(f"  {mark(ok)} {'+'.join(map(str, sizes))}: |difference| = {diff:.2e}")
    return ok_all


if __name__ == "__main__":
    print(f"🚀 Acceptance diagnostics with {SAMPLES} samples per estimate")
    results = {}
    for check in (check_uniform, check_forcing, check_expressions, check_cliques,
                  check_planted, check_witnesses):
        start = time.time()
        results[check.__name__] = check()
        print(f"\n⏱️ {check.__name__}: {time.time() - start:.1f}s")

    banner("SUMMARY")
    for name, ok in results.items():
        print(f"  {mark(ok)} {name}")
    sys.exit(0 if all(results.values()) else 1)
