"""Design space definition and Latin hypercube sampling of it.

Every sample is drawn as seven latents in [0, 1), one stratified column per
variable, and then mapped onto the mixed space by :func:`snap`:

* the even-only layer count is picked by uniform binning of its latent,
* the layup is picked by binning the latent over the available sets,
* continuous variables are a linear map of the latent onto their interval.

Randomness comes from numpy's PCG64 bit generator, which is portable and
documented, so a (space, n, seed) triple gives the same matrix everywhere.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import InvalidArgument, ParseError

GENERATOR_NAME = "PCG64"

DOE_COLUMNS = (
    "sample_id",
    "n_layers",
    "thickness_mm",
    "orientation_set",
    "punch_velocity_mps",
    "layer_temp_C",
    "tool_temp_C",
    "air_temp_C",
)

# Order of the latent columns produced by lhs_sample and consumed by snap.
LATENT_ORDER = (
    "n_layers",
    "thickness",
    "orientation",
    "punch_velocity",
    "layer_temp",
    "tool_temp",
    "air_temp",
)

# Feature order used by every learner downstream.  Orientation is 0 for the
# first layup set and 1 for the second.
FEATURE_NAMES = (
    "n_layers",
    "thickness",
    "orientation",
    "punch_velocity",
    "layer_temp",
    "tool_temp",
    "air_temp",
)


def _check_interval(name, lo, hi):
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise InvalidArgument(f"{name}: bounds must be finite, got ({lo}, {hi})")
    if lo > hi:
        raise InvalidArgument(f"{name}: lower bound {lo} exceeds upper bound {hi}")


@dataclass(frozen=True)
class ParameterSpace:
    """The seven-variable design space.  Defaults are the nominal study ranges."""

    n_layers_range: tuple[int, int] = (4, 16)
    thickness_range: tuple[float, float] = (0.1, 0.6)
    orientation_sets: tuple[tuple[str, tuple[float, ...]], ...] = (
        ("A", (0.0, 45.0, -45.0, 90.0)),
        ("B", (30.0, -30.0, 60.0, -60.0)),
    )
    punch_velocity_range: tuple[float, float] = (4.0, 6.5)
    layer_temp_range: tuple[float, float] = (200.0, 400.0)
    tool_temp_range: tuple[float, float] = (20.0, 220.0)
    air_temp_range: tuple[float, float] = (10.0, 30.0)

    def __post_init__(self):
        lo, hi = self.n_layers_range
        if int(lo) != lo or int(hi) != hi or lo % 2 or hi % 2 or lo < 2:
            raise InvalidArgument(
                f"n_layers_range must have even integer bounds >= 2, got {self.n_layers_range}"
            )
        _check_interval("n_layers_range", lo, hi)
        for name in ("thickness_range", "punch_velocity_range", "layer_temp_range",
                     "tool_temp_range", "air_temp_range"):
            _check_interval(name, *getattr(self, name))
        if self.thickness_range[0] <= 0:
            raise InvalidArgument("thickness must be positive")
        if not self.orientation_sets:
            raise InvalidArgument("at least one orientation set is required")
        labels = [label for label, _ in self.orientation_sets]
        if len(set(labels)) != len(labels):
            raise InvalidArgument(f"duplicate orientation labels: {labels}")

    @property
    def layer_values(self) -> tuple[int, ...]:
        lo, hi = self.n_layers_range
        return tuple(range(int(lo), int(hi) + 1, 2))

    @property
    def orientation_labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.orientation_sets)

    def angles(self, label: str) -> tuple[float, ...]:
        for name, angles in self.orientation_sets:
            if name == label:
                return angles
        raise InvalidArgument(f"unknown orientation set {label!r}")

    def continuous_ranges(self) -> dict[str, tuple[float, float]]:
        return {
            "thickness": self.thickness_range,
            "punch_velocity": self.punch_velocity_range,
            "layer_temp": self.layer_temp_range,
            "tool_temp": self.tool_temp_range,
            "air_temp": self.air_temp_range,
        }


DEFAULT_SPACE = ParameterSpace()


@dataclass(frozen=True)
class DesignPoint:
    n_layers: int
    thickness: float  # mm per layer
    orientation: str
    punch_velocity: float  # m/s
    layer_temp: float  # degC
    tool_temp: float  # degC
    air_temp: float  # degC

    @property
    def laminate_thickness(self) -> float:
        """Total stack thickness in mm."""
        return self.n_layers * self.thickness

    def symbols(self) -> dict[str, float]:
        """The four variables used by the closed-form equations (a, b, c, d)."""
        return {
            "a": float(self.n_layers),
            "b": self.thickness,
            "c": self.layer_temp,
            "d": self.tool_temp,
        }

    def features(self, space: ParameterSpace = DEFAULT_SPACE) -> np.ndarray:
        code = space.orientation_labels.index(self.orientation)
        return np.array(
            [self.n_layers, self.thickness, code, self.punch_velocity,
             self.layer_temp, self.tool_temp, self.air_temp],
            dtype=float,
        )

    def validate(self, space: ParameterSpace = DEFAULT_SPACE) -> None:
        """Raise InvalidArgument naming the first field that violates the space."""
        problem = self.first_violation(space)
        if problem is not None:
            raise InvalidArgument(f"{problem[0]}: {problem[1]}")

    def first_violation(self, space: ParameterSpace = DEFAULT_SPACE):
        if self.n_layers not in space.layer_values:
            return "n_layers", f"{self.n_layers} is not one of {space.layer_values}"
        if self.orientation not in space.orientation_labels:
            return "orientation", f"unknown orientation set {self.orientation!r}"
        for name, (lo, hi) in space.continuous_ranges().items():
            value = getattr(self, name)
            if not (lo <= value <= hi):
                return name, f"{value} outside [{lo}, {hi}]"
        return None


@dataclass
class DoeMatrix:
    points: list[DesignPoint]
    seed: int
    space: ParameterSpace = field(default_factory=ParameterSpace)
    generator: str = GENERATOR_NAME

    def __len__(self):
        return len(self.points)

    def features(self) -> np.ndarray:
        if not self.points:
            return np.zeros((0, len(FEATURE_NAMES)))
        return np.vstack([p.features(self.space) for p in self.points])


def _check_seed(seed):
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise InvalidArgument(f"seed must be an integer, got {seed!r}")
    if not 0 <= int(seed) < 2**64:
        raise InvalidArgument(f"seed must fit in an unsigned 64-bit integer, got {seed}")
    return int(seed)


def _linear(latent, lo, hi):
    if lo == hi:
        return float(lo)
    return float(lo + latent * (hi - lo))


def snap(latents: Sequence[float], space: ParameterSpace = DEFAULT_SPACE) -> DesignPoint:
    """Map seven latents in [0, 1) (in ``LATENT_ORDER``) onto a design point."""
    latents = [float(u) for u in latents]
    if len(latents) != len(LATENT_ORDER):
        raise InvalidArgument(f"expected {len(LATENT_ORDER)} latents, got {len(latents)}")
    for name, u in zip(LATENT_ORDER, latents):
        if not 0.0 <= u < 1.0:
            raise InvalidArgument(f"latent for {name} must lie in [0, 1), got {u}")
    u_layers, u_thick, u_orient, u_vel, u_ltemp, u_ttemp, u_air = latents

    layers = space.layer_values
    n_layers = layers[min(int(u_layers * len(layers)), len(layers) - 1)]
    labels = space.orientation_labels
    orientation = labels[min(int(u_orient * len(labels)), len(labels) - 1)]
    return DesignPoint(
        n_layers=n_layers,
        thickness=_linear(u_thick, *space.thickness_range),
        orientation=orientation,
        punch_velocity=_linear(u_vel, *space.punch_velocity_range),
        layer_temp=_linear(u_ltemp, *space.layer_temp_range),
        tool_temp=_linear(u_ttemp, *space.tool_temp_range),
        air_temp=_linear(u_air, *space.air_temp_range),
    )


def lhs_latents(n: int, dim: int, seed: int) -> np.ndarray:
    """Stratified latents of shape (n, dim).

    Column j is drawn as ``(permutation(n) + uniform(n)) / n`` with the
    permutation drawn before the jitter, columns in order.
    """
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise InvalidArgument(f"sample count must be a positive integer, got {n!r}")
    n = int(n)
    rng = np.random.Generator(np.random.PCG64(_check_seed(seed)))
    out = np.empty((n, dim))
    for j in range(dim):
        perm = rng.permutation(n)
        jitter = rng.random(n)
        out[:, j] = (perm + jitter) / n
    # (n - 1 + u) / n can round up to 1.0 when u is within an ulp of 1.
    np.minimum(out, np.nextafter(1.0, 0.0), out=out)
    return out


def lhs_sample(space: ParameterSpace, n: int, seed: int) -> DoeMatrix:
    latents = lhs_latents(n, len(LATENT_ORDER), seed)
    points = [snap(row, space) for row in latents]
    return DoeMatrix(points=points, seed=int(seed), space=space)


# -- CSV persistence ---------------------------------------------------------

def _fmt6(value: float) -> str:
    return format(value, ".6g")


def doe_rows(matrix: DoeMatrix) -> Iterable[list[str]]:
    for i, p in enumerate(matrix.points):
        yield [
            str(i),
            str(p.n_layers),
            _fmt6(p.thickness),
            p.orientation,
            _fmt6(p.punch_velocity),
            _fmt6(p.layer_temp),
            _fmt6(p.tool_temp),
            _fmt6(p.air_temp),
        ]


def persist_doe(matrix: DoeMatrix, sink: IO[str]) -> None:
    """Write ``matrix`` as CSV.  Reals carry 6 significant digits."""
    sink.write(f"# seed={matrix.seed} generator={matrix.generator}\n")
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(DOE_COLUMNS)
    writer.writerows(doe_rows(matrix))


def dumps_doe(matrix: DoeMatrix) -> str:
    buf = io.StringIO()
    persist_doe(matrix, buf)
    return buf.getvalue()


def _parse_header_comment(line: str, lineno: int):
    seed, generator = 0, GENERATOR_NAME
    for token in line.lstrip("#").split():
        key, sep, value = token.partition("=")
        if not sep:
            continue
        if key == "seed":
            try:
                seed = _check_seed(int(value))
            except (ValueError, InvalidArgument) as exc:
                raise ParseError(f"bad seed {value!r}", row=lineno) from exc
        elif key == "generator":
            generator = value
    return seed, generator


def read_doe(source: IO[str], space: ParameterSpace = DEFAULT_SPACE) -> DoeMatrix:
    """Parse a DOE CSV.  Errors name the file line and the column at fault."""
    seed, generator = 0, GENERATOR_NAME
    points: list[DesignPoint] = []
    header_seen = False
    for lineno, line in enumerate(source, start=1):
        text = line.rstrip("\r\n")
        if not text.strip():
            continue
        if text.startswith("#"):
            if not header_seen:
                seed, generator = _parse_header_comment(text, lineno)
            continue
        cells = next(csv.reader([text]))
        if not header_seen:
            if tuple(c.strip() for c in cells) != DOE_COLUMNS:
                raise ParseError(f"expected header {','.join(DOE_COLUMNS)}", row=lineno)
            header_seen = True
            continue
        points.append(_parse_row(cells, lineno, len(points), space))
    if not header_seen:
        raise ParseError("missing header line")
    return DoeMatrix(points=points, seed=seed, space=space, generator=generator)


def _parse_row(cells, lineno, expected_id, space) -> DesignPoint:
    if len(cells) != len(DOE_COLUMNS):
        raise ParseError(f"expected {len(DOE_COLUMNS)} fields, got {len(cells)}", row=lineno)
    values = dict(zip(DOE_COLUMNS, (c.strip() for c in cells)))

    def number(column, kind=float):
        try:
            value = kind(values[column])
        except ValueError:
            raise ParseError(f"not a number: {values[column]!r}", row=lineno, column=column) from None
        if kind is float and not math.isfinite(value):
            raise ParseError(f"non-finite value {values[column]!r}", row=lineno, column=column)
        return value

    if number("sample_id", int) != expected_id:
        raise ParseError(f"sample_id out of sequence, expected {expected_id}",
                         row=lineno, column="sample_id")
    point = DesignPoint(
        n_layers=number("n_layers", int),
        thickness=number("thickness_mm"),
        orientation=values["orientation_set"],
        punch_velocity=number("punch_velocity_mps"),
        layer_temp=number("layer_temp_C"),
        tool_temp=number("tool_temp_C"),
        air_temp=number("air_temp_C"),
    )
    problem = point.first_violation(space)
    if problem is not None:
        column = {
            "n_layers": "n_layers",
            "orientation": "orientation_set",
            "thickness": "thickness_mm",
            "punch_velocity": "punch_velocity_mps",
            "layer_temp": "layer_temp_C",
            "tool_temp": "tool_temp_C",
            "air_temp": "air_temp_C",
        }[problem[0]]
        raise ParseError(problem[1], row=lineno, column=column)
    return point
