import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from pydantic import ValidationError

from limitforce.exceptions import CertificationFailedError, InvalidArgumentError
from limitforce.models import WitnessProblem, WitnessResult
from limitforce.services.witness import (
    certify_witness,
    jacobian,
    power_sum_gap,
    power_sum_residuals,
    solve_witness,
    vandermonde_determinant,
)


def test_power_sum_residuals():
    assert power_sum_residuals([0.49, 0.26], [0.5, 0.25]) == pytest.approx([0.0], abs=1e-15)
    residuals = power_sum_residuals([0.5, 0.3, 0.1], [0.5, 0.25, 0.125])
    assert residuals == pytest.approx([0.025, 0.35 - 0.328125])
    with pytest.raises(InvalidArgumentError):
        power_sum_residuals([0.5, 0.25], [0.5])
    with pytest.raises(InvalidArgumentError):
        power_sum_residuals([0.5], [0.5])


def test_jacobian_small_cases():
    assert jacobian([0.7, 0.2], 1).tolist() == [[1.0]]
    assert jacobian([0.5, 0.25, 0.1], 2).tolist() == [[1.0, 1.0], [1.0, 0.5]]
    assert vandermonde_determinant([0.5, 0.25], 2) == pytest.approx(-0.5)
    assert vandermonde_determinant([0.3, 0.3, 0.1], 2) == 0.0


@given(st.integers(min_value=1, max_value=5).flatmap(
    lambda n: st.lists(st.floats(min_value=0.01, max_value=1.0), min_size=n, max_size=n)
))
@settings(max_examples=100, deadline=None)
def test_determinant_closed_form(values):
    xs = sorted(values, reverse=True)
    assume(all(a - b >= 0.05 for a, b in zip(xs, xs[1:])))
    n = len(xs)
    det = np.linalg.det(jacobian(xs, n))
    assert det == pytest.approx(vandermonde_determinant(xs, n), rel=1e-6, abs=1e-15)


def test_single_block_witness():
    result = solve_witness(WitnessProblem(n=1, alpha=0.5, epsilon=0.01))
    assert result.converged
    assert result.b == pytest.approx([0.49, 0.26], abs=1e-10)
    assert result.halvings == 0


def test_two_block_witness():
    result = solve_witness(WitnessProblem(n=2, alpha=0.5, epsilon=0.01))
    assert result.converged
    assert result.epsilon == 0.01
    assert result.b == pytest.approx([0.5043505, 0.2356495, 0.135], abs=1e-6)
    assert max(abs(v) for v in result.residuals) <= 1e-10
    assert result.residual_history[-1] <= 1e-10


def test_zero_perturbation_returns_reference():
    result = solve_witness(WitnessProblem(n=3, alpha=0.5, epsilon=0.0))
    assert result.converged
    assert result.b == pytest.approx(result.a)
    assert result.iterations == 0


def test_infeasible_epsilon_is_halved():
    result = solve_witness(WitnessProblem(n=2, alpha=0.5, epsilon=0.6))
    assert result.converged
    assert result.halvings >= 1
    assert result.epsilon <= 0.3
    assert result.b[-1] == pytest.approx(0.125 + result.epsilon)


def test_problem_validation():
    with pytest.raises(ValidationError):
        WitnessProblem(n=2, alpha=0.5, epsilon=-0.2)
    with pytest.raises(ValidationError):
        WitnessProblem(n=0, alpha=0.5, epsilon=0.01)
    with pytest.raises(ValidationError):
        WitnessProblem(n=2, alpha=1.5, epsilon=0.01)


@pytest.mark.parametrize("n, alpha, epsilon", [
    (2, 0.5, 0.01),
    (3, 0.5, 0.01),
    (4, 0.5, 0.005),
    (3, 1 / 3, 0.01),
])
def test_certification_passes(n, alpha, epsilon):
    problem = WitnessProblem(n=n, alpha=alpha, epsilon=epsilon)
    result = solve_witness(problem)
    report = certify_witness(result, problem)
    assert report.passed
    names = [c.name for c in report.checks]
    assert names.count("power-sum") == n
    assert names.count("distinct") == 1
    assert "planted-transfer" in names
    assert report.power_sum_gap > 1e-8


def test_gap_matches_prediction():
    problem = WitnessProblem(n=2, alpha=0.5, epsilon=0.01)
    report = certify_witness(solve_witness(problem), problem)
    assert report.predicted_gap == pytest.approx(1.259e-3, rel=1e-3)
    assert report.power_sum_gap == pytest.approx(report.predicted_gap, rel=1e-6)
    assert power_sum_gap([0.5, 0.25, 0.125], 0.135) == pytest.approx(3 * 0.365 * 0.115 * 0.01)


def test_transfer_checks_cover_small_graphs():
    problem = WitnessProblem(n=3, alpha=0.5, epsilon=0.01)
    report = certify_witness(solve_witness(problem), problem, rho=0.75)
    transfer = [c for c in report.checks if c.name == "planted-transfer"]
    # 1 + 2 + 4 isomorphism classes on up to three vertices
    assert len(transfer) == 7
    assert all(c.value <= 1e-9 for c in transfer)


def test_unperturbed_witness_is_not_distinct():
    problem = WitnessProblem(n=2, alpha=0.5, epsilon=0.0)
    with pytest.raises(CertificationFailedError) as info:
        certify_witness(solve_witness(problem), problem)
    assert info.value.check == "distinct"
    assert info.value.report["checks"]


def test_unconverged_witness_is_rejected():
    problem = WitnessProblem(n=1, alpha=0.5, epsilon=0.01)
    stalled = WitnessResult(a=[0.5, 0.25], b=[0.5, 0.25], residuals=[0.0], converged=False)
    with pytest.raises(CertificationFailedError) as info:
        certify_witness(stalled, problem)
    assert info.value.check == "converged"


def test_wrong_total_mass_is_rejected():
    problem = WitnessProblem(n=1, alpha=0.5, epsilon=0.01)
    short = WitnessResult(a=[0.5, 0.25], b=[0.48, 0.26], residuals=[-0.01], converged=True)
    with pytest.raises(CertificationFailedError) as info:
        certify_witness(short, problem)
    assert info.value.check == "power-sum"
    assert info.value.index == 1
    assert info.value.report["checks"][0]["value"] == pytest.approx(0.01)


def test_surplus_mass_fails_certification_not_construction():
    problem = WitnessProblem(n=1, alpha=0.5, epsilon=0.01)
    heavy = WitnessResult(a=[0.5, 0.25], b=[0.52, 0.26], residuals=[0.03], converged=True)
    with pytest.raises(CertificationFailedError) as info:
        certify_witness(heavy, problem)
    assert info.value.check == "power-sum"
    assert not any(c["name"] == "planted-transfer" for c in info.value.report["checks"])


def test_certification_needs_n_plus_one_sizes():
    problem = WitnessProblem(n=2, alpha=0.5, epsilon=0.01)
    result = WitnessResult(a=[0.5, 0.25], b=[0.49, 0.26], residuals=[0.0], converged=True)
    with pytest.raises(InvalidArgumentError):
        certify_witness(result, problem)


@pytest.mark.parametrize("alpha", [1 / 3, 0.5])
def test_newton_converges_quadratically(alpha):
    result = solve_witness(WitnessProblem(n=2, alpha=alpha, epsilon=0.01))
    history = result.residual_history
    assert len(history) >= 3
    assert all(later < earlier for earlier, later in zip(history, history[1:]))
    for earlier, later in zip(history, history[1:]):
        if earlier < 1e-3:
            assert later <= 100 * earlier ** 2 + 1e-14


def test_five_block_witness_moves_away_from_reference():
    epsilon = 0.01
    result = solve_witness(WitnessProblem(n=5, alpha=1 / 3, epsilon=epsilon))
    assert result.converged
    assert max(abs(v) for v in result.residuals) <= 1e-10
    assert max(abs(b - a) for a, b in zip(result.a, result.b)) >= epsilon / 2 - 1e-12
    assert all(b > 0 for b in result.b)
    assert all(x > y for x, y in zip(result.b[:5], result.b[1:5]))


def test_failed_solve_reports_last_attempted_epsilon(monkeypatch):
    from limitforce.config import get_settings
    from limitforce.exceptions import WitnessGuardError
    from limitforce.services import witness

    tried = []

    def stalled(free, a, last, max_iter, tol):
        tried.append(last - a[-1])
        raise WitnessGuardError("stalled", last - a[-1])

    monkeypatch.setattr(witness, "_newton", stalled)
    result = solve_witness(WitnessProblem(n=2, alpha=0.5, epsilon=0.01))
    halvings = get_settings().WITNESS_MAX_HALVINGS
    assert not result.converged
    assert result.halvings == halvings
    assert result.epsilon == pytest.approx(0.01 / 2 ** halvings)
    # the first continuation step of the last attempt
    steps = get_settings().WITNESS_CONTINUATION_STEPS
    assert tried[-1] == pytest.approx(result.epsilon / steps)
    assert len(tried) == halvings + 1
