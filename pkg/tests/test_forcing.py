from fractions import Fraction
from itertools import permutations
from math import factorial

import pytest

from limitforce.exceptions import InvalidArgumentError, UnsupportedSizeError
from limitforce.services.forcing import (
    BivariatePolynomial,
    DensityExpression,
    derive_seed,
    evaluate_expression,
    express_flag_product,
    express_lambda_integral,
    express_mu_integral,
    lambda_integral_quadrature,
    moment_uniformity_statistic,
    monotone_d21,
    polynomial_constraint_residual,
    square_block_residuals,
    square_d21,
    uniform_lambda_integral,
    verify_monotone_forcing,
    verify_square_forcing,
)
from limitforce.services.permutations import Permutation, RootedPermutation, all_patterns
from limitforce.services.permuton import MonotoneGeometric, SquareGeometric, Uniform, identity_segment

D21 = DensityExpression({Permutation.parse("21"): 1})


def flags(*texts):
    return [RootedPermutation.parse(t) for t in texts]


def test_identity_coefficient():
    e = express_lambda_integral(0, 0, 1)
    assert e.coefficient(Permutation.parse("123")) == Fraction(1, 3)
    assert e.orders() == [3]


def test_lambda_integral_of_one():
    e = express_lambda_integral(0, 0, 0)
    assert e.terms == {Permutation.parse("12"): 1, Permutation.parse("21"): 1}
    assert evaluate_expression(e, SquareGeometric(0.3)).value == pytest.approx(1.0)


@pytest.mark.parametrize("a, b, k", [(0, 0, 1), (1, 0, 1), (0, 2, 1), (1, 1, 2), (2, 0, 0)])
def test_lambda_integrals_on_uniform(a, b, k):
    value = evaluate_expression(express_lambda_integral(a, b, k), Uniform()).value
    assert value == pytest.approx(float(uniform_lambda_integral(a, b, k)), abs=1e-12)


def test_mu_integrals():
    assert express_mu_integral(0, 0, 0).terms == {Permutation.parse("1"): 1}
    # integral of x over any permuton is 1/2
    half = express_mu_integral(1, 0, 0)
    for mu in (Uniform(), SquareGeometric(0.5)):
        assert evaluate_expression(half, mu).value == pytest.approx(0.5)
    assert express_mu_integral(0, 0, 1) == DensityExpression({Permutation.parse("12"): Fraction(1, 2)})


@pytest.mark.parametrize("a, b, k", [(0, 0, 1), (1, 0, 1)])
def test_lambda_expression_matches_quadrature(a, b, k, square_half):
    exact = evaluate_expression(express_lambda_integral(a, b, k), square_half).value
    assert lambda_integral_quadrature(square_half, a, b, k) == pytest.approx(exact, abs=2e-3)


def test_expression_argument_checks():
    with pytest.raises(InvalidArgumentError):
        express_lambda_integral(-1, 0, 0)
    with pytest.raises(UnsupportedSizeError):
        express_lambda_integral(3, 3, 3)
    with pytest.raises(InvalidArgumentError):
        express_flag_product([])


def test_single_flag_products():
    assert express_flag_product(flags("12'")) == express_mu_integral(0, 0, 1)
    value = evaluate_expression(express_flag_product(flags("2'1")), Uniform()).value
    assert value == pytest.approx(0.25)


def test_two_flag_product_on_uniform():
    # integral of x^2 y (1 - y) over the unit square
    e = express_flag_product(flags("12'", "21'"))
    assert e.orders() == [3]
    assert evaluate_expression(e, Uniform()).value == pytest.approx(1 / 18, abs=1e-12)


def test_expression_lines_round_trip():
    e = express_lambda_integral(1, 0, 1)
    text = e.to_lines()
    assert text.splitlines()[0].split(":")[0].isdigit()
    assert DensityExpression.from_lines(text) == e
    assert (e + e.scaled(-1)).terms == {}


def test_evaluate_expression_modes(monotone_half, square_half):
    assert evaluate_expression(DensityExpression(), monotone_half).value == 0.0
    assert evaluate_expression(D21, monotone_half).value == pytest.approx(1 / 3, abs=1e-10)
    assert evaluate_expression(D21, square_half).value == pytest.approx(1 / 6, abs=1e-10)
    estimate = evaluate_expression(D21, square_half, mode="mc", samples=50_000, seed=3)
    assert estimate.method == "mc"
    assert estimate.within(1 / 6, 4.0, 0.0)
    with pytest.raises(InvalidArgumentError):
        evaluate_expression(D21, square_half, mode="guess")


def test_evaluate_expression_falls_back_to_sampling():
    estimate = evaluate_expression(D21, identity_segment(), samples=1000, seed=1)
    assert estimate.method == "mc-fallback"
    assert estimate.value == 0.0


def test_derive_seed():
    assert derive_seed(5, 1) == derive_seed(5, 1)
    assert derive_seed(5, 1) != derive_seed(5, 2)


def test_closed_form_targets():
    assert monotone_d21(0.5) == pytest.approx(1 / 3)
    assert square_d21(0.5) == pytest.approx(1 / 6)


@pytest.mark.parametrize("alpha", [1 / 3, 0.5, 2 / 3])
def test_monotone_forcing_holds(alpha):
    reports = verify_monotone_forcing(alpha, samples=50_000, seed=1, support_samples=2000)
    assert [r.constraint_id for r in reports] == ["mono-231-312", "mono-d21", "mono-support-integrand"]
    assert all(r.passed for r in reports), [r.model_dump() for r in reports if not r.passed]


def test_monotone_forcing_rejects_uniform():
    reports = verify_monotone_forcing(0.5, samples=50_000, seed=1, mu=Uniform(), support_samples=2000)
    by_id = {r.constraint_id: r for r in reports}
    assert not by_id["mono-231-312"].passed
    assert by_id["mono-231-312"].value > 0.3
    assert not by_id["mono-d21"].passed


@pytest.mark.parametrize("alpha", [1 / 3, 0.5])
def test_square_forcing_holds(alpha):
    reports = verify_square_forcing(alpha, samples=50_000, seed=2, support_samples=2000,
                                    inner_samples=32)
    assert [r.constraint_id for r in reports] == [
        "square-d21-exact", "square-d21-mc", "square-block-identity", "square-flag-integral",
    ]
    assert all(r.passed for r in reports), [r.model_dump() for r in reports if not r.passed]


def test_square_forcing_rejects_uniform():
    reports = verify_square_forcing(0.5, samples=20_000, seed=2, mu=Uniform(), support_samples=500,
                                    inner_samples=16)
    by_id = {r.constraint_id: r for r in reports}
    assert not by_id["square-d21-exact"].passed
    assert not by_id["square-block-identity"].passed


@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75])
def test_square_block_identity(alpha):
    assert abs(square_block_residuals(SquareGeometric(alpha), alpha)).max() < 1e-12


def test_moment_statistic_vanishes_on_rectangle_uniform_measures(uniform, square_half):
    for mu in (uniform, square_half):
        for mode in ("pair", "triple"):
            estimate = moment_uniformity_statistic(mu, samples=2000, inner_samples=16, seed=1, mode=mode)
            assert abs(estimate.value) < 1e-12
    staircase = moment_uniformity_statistic(MonotoneGeometric(0.5), samples=2000, inner_samples=16, seed=1)
    assert staircase.value >= -4 * staircase.std_error
    with pytest.raises(InvalidArgumentError):
        moment_uniformity_statistic(uniform, mode="quad")


def test_bivariate_polynomial_parse():
    p = BivariatePolynomial.parse("3*x^2*y - 0.5*y + 1/2")
    assert p.degree() == 3
    assert p(1.0, 2.0) == pytest.approx(5.5)
    assert BivariatePolynomial.parse("x**2")(3.0, 0.0) == pytest.approx(9.0)
    for bad in ("", "z*x", "x^9"):
        with pytest.raises(InvalidArgumentError):
            BivariatePolynomial.parse(bad)


def test_polynomial_residuals():
    xy = BivariatePolynomial.parse("x*y")
    product, distance = polynomial_constraint_residual(Uniform(), [xy], xy)
    assert product == pytest.approx(0.0, abs=1e-12)
    assert distance == pytest.approx(0.0, abs=1e-12)

    x, y = BivariatePolynomial.parse("x"), BivariatePolynomial.parse("y")
    product, distance = polynomial_constraint_residual(identity_segment(), [x, y], xy)
    assert product == pytest.approx(0.0, abs=1e-12)
    # integral of (min(x, y) - xy)^2
    assert distance == pytest.approx(1 / 90, abs=1e-3)


def brute_force_coefficients(a, b, k, separate_roots):
    """Place every role (roots and labelled points) on every position directly"""
    roles = (["x", "y"] if separate_roots else ["root"]) + ["left"] * a + ["down"] * b + ["both"] * k
    m = len(roles)
    terms = {}
    for sigma in all_patterns(m):
        values = sigma.mapping
        hits = 0
        for placement in permutations(range(m)):
            where = dict(zip(placement, roles))
            xp = next(p for p, r in where.items() if r in ("x", "root"))
            yq = next(p for p, r in where.items() if r in ("y", "root"))
            ok = True
            for pos, role in where.items():
                if role in ("left", "both") and not pos < xp:
                    ok = False
                if role in ("down", "both") and not values[pos] < values[yq]:
                    ok = False
            hits += ok
        terms[sigma] = Fraction(hits, factorial(m))
    return DensityExpression(terms)


@pytest.mark.parametrize("a, b, k", [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 0), (0, 0, 2), (1, 0, 1)])
def test_coefficients_match_direct_enumeration(a, b, k):
    assert express_lambda_integral(a, b, k) == brute_force_coefficients(a, b, k, True)
    assert express_mu_integral(a, b, k) == brute_force_coefficients(a, b, k, False)
