"""Command handler - runs one CLI command and maps library errors to exit statuses"""
from typing import Dict, List, NamedTuple, Optional, Tuple
import logging

import numpy as np
from pydantic import ValidationError

from limitforce.exceptions import (
    CertificationFailedError,
    InvalidArgumentError,
    SingularJacobianError,
    UnsupportedFormError,
    UnsupportedSizeError,
)
from limitforce.models import CertificationReport, Estimate, RunConfig, WitnessProblem
from limitforce.services.clique_calculus import (
    CliqueDensityVector,
    clique_union_density,
    constant_base_densities,
    planted_density,
)
from limitforce.services.forcing import (
    DensityExpression,
    evaluate_expression,
    exact_density,
    express_flag_product,
    express_lambda_integral,
    express_mu_integral,
    verify_monotone_forcing,
    verify_square_forcing,
)
from limitforce.services import graphon as graphons
from limitforce.services.graphon import (
    CliqueBlocks,
    Constant,
    Graph,
    Graphon,
    Planted,
    PermutonInduced,
    constant_graph_density,
    isomorphism_classes,
)
from limitforce.services.permutations import Permutation, RootedPermutation, all_patterns
from limitforce.services.permuton import (
    Permuton,
    cell_masses,
    pattern_counts_mc,
    sample_permutation,
    sampled_cell_masses,
)
from limitforce.services.witness import certify_witness, solve_witness
from limitforce.utils.graymap import render_p2
from limitforce.utils.montecarlo import proportion_estimate
from limitforce.utils.serialization import (
    certification_csv,
    forcing_reports_csv,
    load_descriptor,
    witness_csv,
    write_csv,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

MIN_RESOLUTION = 16
MAX_RESOLUTION = 4096
DENSITY_HEADER = ("object", "value", "std_error", "mode")


class CommandOutcome(NamedTuple):
    status: int
    output: str
    message: str = ""


class CommandHandler:
    def process_command(self, config: RunConfig) -> CommandOutcome:
        """Dispatch one command; library errors never escape"""
        handlers = {
            "density": self._handle_density,
            "verify": self._handle_verify,
            "witness": self._handle_witness,
            "heatmap": self._handle_heatmap,
            "expression": self._handle_expression,
            "sample": self._handle_sample,
        }
        handler = handlers.get(config.command)
        if handler is None:
            return CommandOutcome(EXIT_USAGE, "", f"unknown command {config.command!r}")
        logger.info("🚀 %s", config.header())
        try:
            return handler(config)
        except (InvalidArgumentError, UnsupportedSizeError, UnsupportedFormError, ValidationError) as e:
            logger.error(f"❌ {config.command}: {e}")
            return CommandOutcome(EXIT_USAGE, "", str(e))
        except SingularJacobianError as e:
            logger.error(f"❌ {config.command}: {e} (det={e.determinant:.3g}, iterate={e.iterate})")
            return CommandOutcome(EXIT_NUMERICAL, "", str(e))
        except (FloatingPointError, np.linalg.LinAlgError) as e:
            logger.error(f"❌ {config.command}: numerical failure: {e}")
            return CommandOutcome(EXIT_NUMERICAL, "", str(e))

    # ------------------------------------------------------------------
    # density

    def _handle_density(self, config: RunConfig) -> CommandOutcome:
        measure = self._descriptor(config)
        mode = config.options.get("mode") or "exact"
        if isinstance(measure, Permuton):
            rows = self._permuton_rows(measure, config, mode)
        else:
            rows = self._graphon_rows(measure, config, mode)
        return CommandOutcome(EXIT_OK, write_csv(DENSITY_HEADER, rows, [config.header()]))

    def _permuton_rows(self, mu: Permuton, config: RunConfig, mode: str) -> List[Tuple]:
        if mode not in ("exact", "mc"):
            raise InvalidArgumentError(f"permuton densities use mode exact or mc, got {mode!r}")
        patterns = [Permutation.parse(p) for p in config.options.get("patterns") or []]
        if not patterns:
            patterns = list(all_patterns(config.options.get("order") or 3))
        counts: Dict[int, np.ndarray] = {}

        def sampled(sigma: Permutation, method: str) -> Estimate:
            if sigma.order not in counts:
                counts[sigma.order] = pattern_counts_mc(mu, sigma.order, config.samples, config.seed)
            return proportion_estimate(int(counts[sigma.order][sigma.rank()]), config.samples, method)

        rows = []
        for sigma in patterns:
            value = exact_density(sigma, mu) if mode == "exact" else None
            if value is not None:
                estimate = Estimate.exact(value)
            elif mode == "exact":
                logger.warning("⚠️ No exact oracle for %s on a %s permuton; using Monte Carlo",
                               sigma, mu.form)
                estimate = sampled(sigma, "mc-fallback")
            else:
                estimate = sampled(sigma, "mc")
            rows.append((str(sigma), estimate.value, estimate.std_error, estimate.method))
        return rows

    def _graphon_rows(self, w: Graphon, config: RunConfig, mode: str) -> List[Tuple]:
        if mode not in ("exact", "mc", "quadrature"):
            raise InvalidArgumentError(f"graphon densities use mode exact, mc or quadrature, got {mode!r}")
        graphs = [Graph.parse(g) for g in config.options.get("graphs") or []]
        if not graphs:
            graphs = list(isomorphism_classes(config.options.get("order") or 3))
        rows = []
        for h in graphs:
            estimate = None
            if mode == "exact":
                value = exact_graph_density(h, w)
                if value is None:
                    logger.warning("⚠️ No exact oracle for %s on a %s graphon; using Monte Carlo",
                                   h, w.form)
                else:
                    estimate = Estimate.exact(value)
            elif mode == "quadrature":
                value = graphons.density_quadrature(h, w, config.grid, config.tolerance)
                estimate = Estimate(value=value, method="quadrature")
            if estimate is None:
                estimate = graphons.density_mc(h, w, config.samples, config.seed)
                if mode == "exact":
                    estimate = estimate.model_copy(update={"method": "mc-fallback"})
            rows.append((str(h), estimate.value, estimate.std_error, estimate.method))
        return rows

    # ------------------------------------------------------------------
    # verify

    def _handle_verify(self, config: RunConfig) -> CommandOutcome:
        family = config.options.get("family")
        alpha = config.options.get("alpha")
        if alpha is None:
            raise InvalidArgumentError("verify needs --alpha")
        mu = self._descriptor(config) if config.descriptor else None
        if mu is not None and not isinstance(mu, Permuton):
            raise InvalidArgumentError("verify runs against a permuton descriptor")
        kwargs = dict(samples=config.samples, seed=config.seed, mu=mu)
        if config.tolerance is not None:
            kwargs["abs_tol"] = config.tolerance
        if family == "monotone":
            reports = verify_monotone_forcing(alpha, **kwargs)
        elif family == "square":
            reports = verify_square_forcing(alpha, **kwargs)
        else:
            raise InvalidArgumentError(f"family must be monotone or square, got {family!r}")
        failed = [r.constraint_id for r in reports if not r.passed]
        output = forcing_reports_csv(reports, [config.header()])
        if failed:
            logger.error(f"❌ {family} forcing failed: {', '.join(failed)}")
            return CommandOutcome(EXIT_FAILED, output, f"failed constraints: {', '.join(failed)}")
        logger.info(f"✅ {family} forcing verified ({len(reports)} constraints)")
        return CommandOutcome(EXIT_OK, output)

    # ------------------------------------------------------------------
    # witness

    def _handle_witness(self, config: RunConfig) -> CommandOutcome:
        opts = config.options
        if opts.get("epsilon") == 0:
            raise InvalidArgumentError("epsilon = 0 gives the degenerate witness b = a")
        problem = WitnessProblem(n=opts.get("n"), alpha=opts.get("alpha"), epsilon=opts.get("epsilon"))
        result = solve_witness(problem, tol=config.tolerance)
        table = witness_csv(result, [config.header(), f"epsilon_used={result.epsilon}",
                                     f"iterations={result.iterations}", f"halvings={result.halvings}"])
        if not result.converged:
            return CommandOutcome(EXIT_NUMERICAL, table,
                                  f"Newton did not converge after {result.halvings} halvings of epsilon")
        try:
            rho = 0.5 if opts.get("rho") is None else opts["rho"]
            report = certify_witness(result, problem, rho=rho)
        except CertificationFailedError as e:
            logger.error(f"❌ Witness certification failed: {e}")
            failed = CertificationReport(**e.report) if e.report else CertificationReport()
            return CommandOutcome(EXIT_FAILED, table + "\n" + certification_csv(failed), str(e))
        logger.info(f"✅ Witness certified: power sum {problem.n + 1} differs by {report.power_sum_gap:.3g}")
        return CommandOutcome(EXIT_OK, table + "\n" + certification_csv(report))

    # ------------------------------------------------------------------
    # heatmap

    def _handle_heatmap(self, config: RunConfig) -> CommandOutcome:
        resolution = config.resolution
        if not MIN_RESOLUTION <= resolution <= MAX_RESOLUTION:
            raise InvalidArgumentError(
                f"resolution must lie in [{MIN_RESOLUTION}, {MAX_RESOLUTION}], got {resolution}"
            )
        measure = self._descriptor(config)
        comments = [config.header()]
        if isinstance(measure, Permuton):
            if config.options.get("exact"):
                image = cell_masses(measure, resolution)
                comments.append("render=exact cell masses")
            else:
                image = sampled_cell_masses(measure, resolution, config.samples, config.seed)
                comments.append("render=sampled cell masses")
            return CommandOutcome(EXIT_OK, render_p2(image, comments))
        try:
            image = graphons.kernel_image(measure, resolution)
            comments.append("render=kernel values")
        except UnsupportedFormError:
            if not isinstance(measure, PermutonInduced):
                raise
            logger.warning("⚠️ %s graphon has no pointwise kernel; rendering a sampled graph",
                           measure.form)
            image = graphons.sampled_kernel_image(measure, resolution, config.seed)
            comments.append("render=sampled fallback (no pointwise kernel)")
        return CommandOutcome(EXIT_OK, render_p2(image, comments, scale=1.0))

    # ------------------------------------------------------------------
    # expression

    def _handle_expression(self, config: RunConfig) -> CommandOutcome:
        opts = config.options
        kind = opts.get("kind")
        if kind == "lambda":
            expression = express_lambda_integral(opts.get("alpha", 0), opts.get("beta", 0), opts.get("k", 0))
        elif kind == "mu":
            expression = express_mu_integral(opts.get("alpha", 0), opts.get("beta", 0), opts.get("k", 0))
        elif kind == "flags":
            flags = [RootedPermutation.parse(f) for f in opts.get("flags") or []]
            expression = express_flag_product(flags)
        else:
            raise InvalidArgumentError(f"expression kind must be lambda, mu or flags, got {kind!r}")
        output = f"# {config.header()}\n" + expression.to_lines()
        if config.descriptor:
            output += self._evaluation_line(expression, config)
        return CommandOutcome(EXIT_OK, output)

    def _evaluation_line(self, expression: DensityExpression, config: RunConfig) -> str:
        mu = self._descriptor(config)
        if not isinstance(mu, Permuton):
            raise InvalidArgumentError("expressions are evaluated on permutons")
        estimate = evaluate_expression(expression, mu, config.options.get("mode") or "exact",
                                       config.samples, config.seed)
        return f"# value={estimate.value!r} std_error={estimate.std_error!r} mode={estimate.method}\n"

    # ------------------------------------------------------------------
    # sample

    def _handle_sample(self, config: RunConfig) -> CommandOutcome:
        n = config.options.get("n")
        if not n:
            raise InvalidArgumentError("sample needs --n")
        measure = self._descriptor(config)
        if isinstance(measure, Permuton):
            drawn = str(sample_permutation(measure, n, config.seed))
        else:
            drawn = str(graphons.sample_graph(measure, n, config.seed))
        return CommandOutcome(EXIT_OK, f"# {config.header()}\n{drawn}\n")

    # ------------------------------------------------------------------

    def _descriptor(self, config: RunConfig):
        if not config.descriptor:
            raise InvalidArgumentError(f"{config.command} needs a descriptor")
        return load_descriptor(config.descriptor)


def exact_graph_density(h: Graph, w: Graphon) -> Optional[float]:
    """Closed forms for constant, clique-block and constant-planted graphons; None otherwise"""
    if isinstance(w, Constant):
        return float(constant_graph_density(h, w.rho))
    if isinstance(w, CliqueBlocks):
        comps = h.components()
        if not all(h.induced(c).is_complete() for c in comps):
            # contains an induced path on three vertices
            return 0.0
        vector = CliqueDensityVector.from_blocks(w.sizes, max(h.order, 1))
        return float(clique_union_density([len(c) for c in comps], vector))
    if isinstance(w, Planted) and isinstance(w.base, Constant):
        return planted_density(h, constant_base_densities(h, w.base.rho), w.sizes)
    return None


# Singleton instance
command_handler = CommandHandler()
