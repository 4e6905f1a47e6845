"""Non-forcibility witnesses: perturb one geometric block size and re-solve the first n
block sizes so that the first n power sums (clique densities) are unchanged"""
from math import factorial, prod
from typing import List, Optional, Sequence, Tuple
import logging

import numpy as np
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from limitforce.config import get_settings
from limitforce.exceptions import (
    CertificationFailedError,
    InvalidArgumentError,
    SingularJacobianError,
    WitnessGuardError,
)
from limitforce.models import CertificationCheck, CertificationReport, WitnessProblem, WitnessResult
from limitforce.services.clique_calculus import (
    constant_base_densities,
    planted_density,
)
from limitforce.services.graphon import BlockSizes, isomorphism_classes

logger = logging.getLogger(__name__)

MAX_BACKTRACKS = 30
TRANSFER_MAX_ORDER = 5


def power_sum_residuals(x: Sequence[float], a: Sequence[float]) -> List[float]:
    """F_i = sum_j (x_j^i - a_j^i) for i = 1..n, where both sequences have n+1 entries"""
    if len(x) != len(a):
        raise InvalidArgumentError(f"length mismatch: {len(x)} vs {len(a)}")
    if len(x) < 2:
        raise InvalidArgumentError("need n+1 >= 2 entries")
    xs, As = np.asarray(x, dtype=float), np.asarray(a, dtype=float)
    return [float(np.sum(xs ** i) - np.sum(As ** i)) for i in range(1, len(x))]


def jacobian(x: Sequence[float], n: int) -> np.ndarray:
    """d F_i / d x_j = i x_j^(i-1) for i, j = 1..n"""
    xs = np.asarray(x, dtype=float)[:n]
    powers = np.arange(1, n + 1)[:, None]
    return powers * xs[None, :] ** (powers - 1)


def vandermonde_determinant(x: Sequence[float], n: int) -> float:
    """n! prod_{j < j'} (x_j' - x_j), the closed form of det(jacobian(x, n))"""
    xs = list(x)[:n]
    return factorial(n) * prod(xs[k] - xs[j] for j in range(n) for k in range(j + 1, n))


def _inside_guard(free: np.ndarray, last: float) -> bool:
    return bool((free > 0).all() and last > 0 and (np.diff(free) < 0).all())


def _newton(free: np.ndarray, a: np.ndarray, last: float, max_iter: int,
            tol: float) -> Tuple[np.ndarray, int, List[float]]:
    n = len(free)

    def residual(v):
        return np.array(power_sum_residuals(np.append(v, last), a))

    current = residual(free)
    history = [float(np.abs(current).max())]
    for iteration in range(1, max_iter + 1):
        if history[-1] <= tol:
            return free, iteration - 1, history
        jac = jacobian(free, n)
        det = float(np.linalg.det(jac))
        try:
            step = np.linalg.solve(jac, -current)
        except np.linalg.LinAlgError:
            raise SingularJacobianError("Jacobian is singular", det, free.tolist())
        if not np.isfinite(step).all():
            raise SingularJacobianError("Jacobian is numerically singular", det, free.tolist())
        t = 1.0
        for _ in range(MAX_BACKTRACKS):
            candidate = free + t * step
            if _inside_guard(candidate, last):
                trial = residual(candidate)
                if np.abs(trial).max() < history[-1]:
                    break
            t /= 2
        else:
            raise WitnessGuardError("no admissible Newton step", last - a[-1])
        free, current = candidate, trial
        history.append(float(np.abs(current).max()))
    if history[-1] <= tol:
        return free, max_iter, history
    raise WitnessGuardError(f"Newton did not converge in {max_iter} iterations", last - a[-1])


def solve_witness(p: WitnessProblem, max_iter: Optional[int] = None,
                  tol: Optional[float] = None) -> WitnessResult:
    """Newton iteration on x_1..x_n with x_(n+1) = a_(n+1) + epsilon held fixed.

    epsilon is reached by continuation from 0; an iterate leaving the positive, strictly
    decreasing region (or a stalled solve) halves epsilon and starts over.
    """
    settings = get_settings()
    max_iter = max_iter or settings.WITNESS_MAX_ITER
    tol = settings.WITNESS_TOL if tol is None else tol
    steps = settings.WITNESS_CONTINUATION_STEPS
    a = np.array(p.block_sizes())
    n = p.n
    # epsilon is the value of the latest attempt; halvings counts the halvings applied before it
    state = {"epsilon": p.epsilon, "halvings": 0, "attempts": 0}

    def attempt() -> WitnessResult:
        if state["attempts"]:
            state["epsilon"] /= 2
            state["halvings"] += 1
        state["attempts"] += 1
        epsilon = state["epsilon"]
        free = a[:n].copy()
        iterations, history = 0, []
        for s in range(1, steps + 1):
            last = a[n] + epsilon * s / steps
            try:
                free, used, history = _newton(free, a, last, max_iter, tol)
            except WitnessGuardError:
                logger.warning("⚠️ Witness n=%d: epsilon %.3g failed", n, epsilon)
                raise
            iterations += used
        b = np.append(free, a[n] + epsilon)
        return WitnessResult(
            a=a.tolist(), b=b.tolist(), residuals=power_sum_residuals(b, a),
            iterations=iterations, converged=True, epsilon=float(epsilon),
            halvings=state["halvings"], residual_history=history,
        )

    retrying = Retrying(
        stop=stop_after_attempt(settings.WITNESS_MAX_HALVINGS + 1),
        retry=retry_if_exception_type(WitnessGuardError),
        reraise=True,
    )
    try:
        result = retrying(attempt)
    except WitnessGuardError:
        logger.error("❌ Witness n=%d, alpha=%g: no convergence after %d halvings",
                     n, p.alpha, state["halvings"])
        return WitnessResult(a=a.tolist(), b=a.tolist(), residuals=[0.0] * n, converged=False,
                             epsilon=float(state["epsilon"]), halvings=state["halvings"])
    logger.info("✅ Witness n=%d, alpha=%g: epsilon %.3g after %d iterations",
                n, p.alpha, result.epsilon, result.iterations)
    return result


def power_sum_gap(a: Sequence[float], x_last: float) -> float:
    """|p_(n+1)(b) - p_(n+1)(a)| = (n+1) |prod_j (x_last - a_j)| whenever p_1..p_n agree"""
    return len(a) * abs(prod(x_last - v for v in a))


def certify_witness(r: WitnessResult, p: WitnessProblem, rho: float = 0.5) -> CertificationReport:
    """Clique densities K_1..K_n agree, the (n+1)-st power sums differ, and planted densities
    over a constant base agree for every graph with at most min(n, 5) vertices"""
    settings = get_settings()
    report = CertificationReport()
    if not r.converged:
        raise CertificationFailedError("witness did not converge", "converged", report=report.model_dump())
    n = p.n
    if len(r.a) != n + 1 or len(r.b) != n + 1:
        raise InvalidArgumentError(f"witness must carry {n + 1} block sizes, got {len(r.a)} and {len(r.b)}")

    # both sequences share the geometric tail, so power sums of the heads decide
    for i in range(1, n + 1):
        diff = abs(sum(v ** i for v in r.b) - sum(v ** i for v in r.a))
        report.checks.append(CertificationCheck(
            name="power-sum", passed=diff <= settings.WITNESS_MATCH_TOL, value=diff,
            threshold=settings.WITNESS_MATCH_TOL, index=i,
        ))

    gap = abs(sum(v ** (n + 1) for v in r.b) - sum(v ** (n + 1) for v in r.a))
    report.power_sum_gap = gap
    report.predicted_gap = power_sum_gap(r.a, r.b[-1])
    report.checks.append(CertificationCheck(
        name="distinct", passed=gap > settings.WITNESS_DISTINCT_TOL, value=gap,
        threshold=settings.WITNESS_DISTINCT_TOL, index=n + 1,
    ))

    if all(c.passed for c in report.checks if c.name == "power-sum"):
        reference = BlockSizes.geometric(p.alpha)
        perturbed = BlockSizes.with_geometric_tail(r.b, p.alpha)
        for k in range(1, min(n, TRANSFER_MAX_ORDER) + 1):
            for h in isomorphism_classes(k):
                base = constant_base_densities(h, rho)
                diff = abs(planted_density(h, base, perturbed) - planted_density(h, base, reference))
                report.checks.append(CertificationCheck(
                    name="planted-transfer", passed=diff <= settings.WITNESS_MATCH_TOL, value=diff,
                    threshold=settings.WITNESS_MATCH_TOL, index=str(h),
                ))

    failed = [c for c in report.checks if not c.passed]
    if failed:
        first = failed[0]
        raise CertificationFailedError(
            f"certification check {first.name} failed at {first.index}: {first.value:.3g}",
            first.name, first.index, report=report.model_dump(),
        )
    return report
