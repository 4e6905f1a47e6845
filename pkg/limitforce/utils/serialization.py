"""Descriptor parsing (inline shorthand and JSON files) and CSV writers"""
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Union
import csv
import io
import json
import logging

from limitforce.exceptions import InvalidArgumentError
from limitforce.models import CertificationReport, ForcingReport, WitnessResult
from limitforce.services.graphon import (
    BlockSizes,
    CliqueBlocks,
    Constant,
    Graphon,
    Planted,
    PermutonInduced,
    Step,
)
from limitforce.services.permuton import (
    Mixture,
    MonotoneGeometric,
    Permuton,
    PolygonPiece,
    SquareGeometric,
    StepMatrix,
    Uniform,
    identity_segment,
    interleaved_segments,
    reversal_segment,
    step_matrix_three,
)

logger = logging.getLogger(__name__)

SCHEMA_HINT = "see docs/schema.md for the descriptor schema"
Measure = Union[Permuton, Graphon]


def parse_number(text: Any) -> float:
    """Accepts 0.5, "0.5" and "1/2" alike"""
    try:
        return float(Fraction(str(text).strip()))
    except (ValueError, ZeroDivisionError):
        raise InvalidArgumentError(f"not a number: {text!r} ({SCHEMA_HINT})")


def _keyword_args(text: str) -> Dict[str, float]:
    out = {}
    for part in text.split(","):
        key, sep, value = part.partition("=")
        if not sep:
            raise InvalidArgumentError(f"expected key=value, got {part!r} ({SCHEMA_HINT})")
        out[key.strip()] = parse_number(value)
    return out


# ---------------------------------------------------------------------------
# Structured descriptors


def permuton_from_dict(data: Dict) -> Permuton:
    form = data.get("form")
    try:
        if form == "uniform":
            return Uniform()
        if form == "monotone":
            return MonotoneGeometric(parse_number(data["alpha"]))
        if form == "square":
            return SquareGeometric(parse_number(data["alpha"]))
        if form == "step":
            return StepMatrix(
                tuple(tuple(parse_number(v) for v in row) for row in data["matrix"]),
                tuple(parse_number(v) for v in data["z"]),
            )
        if form == "mixture":
            return Mixture(tuple(
                PolygonPiece(tuple((parse_number(x), parse_number(y)) for x, y in p["vertices"]), parse_number(p["weight"]))
                for p in data["pieces"]
            ))
    except InvalidArgumentError:
        raise
    except (KeyError, TypeError) as e:
        raise InvalidArgumentError(f"permuton descriptor {form!r} is missing {e} ({SCHEMA_HINT})")
    except ValueError as e:
        raise InvalidArgumentError(f"permuton descriptor {form!r} is malformed: {e} ({SCHEMA_HINT})")
    raise InvalidArgumentError(f"unknown permuton form {form!r} ({SCHEMA_HINT})")


def _block_sizes_from_dict(data: Dict) -> BlockSizes:
    tail = data.get("tail_alpha")
    return BlockSizes(tuple(parse_number(v) for v in data.get("head", ())),
                      None if tail is None else parse_number(tail))


def graphon_from_dict(data: Dict) -> Graphon:
    form = data.get("form")
    try:
        if form == "constant":
            return Constant(parse_number(data["rho"]))
        if form == "step":
            return Step(
                tuple(tuple(parse_number(v) for v in row) for row in data["values"]),
                tuple(parse_number(v) for v in data["widths"]),
            )
        if form == "cliqueblocks":
            return CliqueBlocks(_block_sizes_from_dict(data["sizes"]))
        if form == "planted":
            return Planted(graphon_from_dict(data["base"]), _block_sizes_from_dict(data["sizes"]))
        if form == "permuton":
            return PermutonInduced(permuton_from_dict(data["permuton"]))
    except InvalidArgumentError:
        raise
    except (KeyError, TypeError) as e:
        raise InvalidArgumentError(f"graphon descriptor {form!r} is missing {e} ({SCHEMA_HINT})")
    except ValueError as e:
        raise InvalidArgumentError(f"graphon descriptor {form!r} is malformed: {e} ({SCHEMA_HINT})")
    raise InvalidArgumentError(f"unknown graphon form {form!r} ({SCHEMA_HINT})")


def to_dict(measure: Measure) -> Dict:
    kind = "permuton" if isinstance(measure, Permuton) else "graphon"
    return {"kind": kind, **measure.to_dict()}


def from_dict(data: Dict) -> Measure:
    kind = data.get("kind")
    if kind == "permuton":
        return permuton_from_dict(data)
    if kind == "graphon":
        return graphon_from_dict(data)
    raise InvalidArgumentError(f"descriptor kind must be 'permuton' or 'graphon', got {kind!r} ({SCHEMA_HINT})")


def save_descriptor(measure: Measure, path: Union[str, Path]):
    Path(path).write_text(json.dumps(to_dict(measure), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Inline shorthand

_PERMUTON_NAMES = {
    "uniform": Uniform,
    "identity": identity_segment,
    "reversal": reversal_segment,
    "interleaved": interleaved_segments,
    "threeblock": step_matrix_three,
}


def parse_permuton(text: str) -> Permuton:
    """uniform | identity | reversal | interleaved | threeblock | monotone:A | square:A"""
    name, _, arg = text.strip().partition(":")
    if name in _PERMUTON_NAMES and not arg:
        return _PERMUTON_NAMES[name]()
    if name == "monotone" and arg:
        return MonotoneGeometric(parse_number(arg))
    if name == "square" and arg:
        return SquareGeometric(parse_number(arg))
    raise InvalidArgumentError(f"unknown permuton shorthand {text!r} ({SCHEMA_HINT})")


def parse_graphon(text: str) -> Graphon:
    """constant:R | cliqueblocks:A | planted:rho=R,alpha=A | inversion:<permuton>"""
    name, _, arg = text.strip().partition(":")
    if not arg:
        raise InvalidArgumentError(f"graphon shorthand {text!r} needs a parameter ({SCHEMA_HINT})")
    if name == "constant":
        return Constant(parse_number(arg))
    if name == "cliqueblocks":
        return CliqueBlocks(BlockSizes.geometric(parse_number(arg)))
    if name == "planted":
        args = _keyword_args(arg)
        if set(args) != {"rho", "alpha"}:
            raise InvalidArgumentError(f"planted shorthand needs rho= and alpha= ({SCHEMA_HINT})")
        return Planted(Constant(args["rho"]), BlockSizes.geometric(args["alpha"]))
    if name == "inversion":
        return PermutonInduced(parse_permuton(arg))
    raise InvalidArgumentError(f"unknown graphon shorthand {text!r} ({SCHEMA_HINT})")


def load_descriptor(text: str) -> Measure:
    """A path to a JSON descriptor file, or an inline shorthand"""
    path = Path(text)
    if text.endswith(".json") or path.is_file():
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            raise InvalidArgumentError(f"descriptor file {text} not found")
        except json.JSONDecodeError as e:
            raise InvalidArgumentError(f"descriptor file {text} is not valid JSON: {e} ({SCHEMA_HINT})")
        return from_dict(data)
    try:
        return parse_permuton(text)
    except InvalidArgumentError:
        pass
    try:
        return parse_graphon(text)
    except InvalidArgumentError:
        raise InvalidArgumentError(f"unrecognised descriptor {text!r} ({SCHEMA_HINT})")


# ---------------------------------------------------------------------------
# CSV


def write_csv(header: Sequence[str], rows: Iterable[Sequence[Any]], comments: Sequence[str] = ()) -> str:
    buffer = io.StringIO()
    for line in comments:
        buffer.write(f"# {line}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
    return buffer.getvalue()


def read_csv(text: str) -> List[Dict[str, str]]:
    lines = [line for line in text.splitlines() if not line.startswith("#")]
    return list(csv.DictReader(lines))


def forcing_reports_csv(reports: Sequence[ForcingReport], comments: Sequence[str] = ()) -> str:
    return write_csv(
        ("constraint_id", "target", "value", "std_error", "tolerance", "pass", "method"),
        ((r.constraint_id, r.target, r.value, r.std_error, r.tolerance,
          "true" if r.passed else "false", r.method) for r in reports),
        comments,
    )


def witness_csv(result: WitnessResult, comments: Sequence[str] = ()) -> str:
    return write_csv(
        ("index", "a_i", "b_i"),
        ((i, a, b) for i, (a, b) in enumerate(zip(result.a, result.b), start=1)),
        comments,
    )


def certification_csv(report: CertificationReport) -> str:
    rows = [(c.name, "" if c.index is None else c.index, c.value, c.threshold,
             "true" if c.passed else "false") for c in report.checks]
    rows.append(("power-sum-gap-predicted", "", report.predicted_gap, "", ""))
    return write_csv(("check", "index", "value", "threshold", "pass"), rows)
