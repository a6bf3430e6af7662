"""Functional-data primitives: grids, curves, datasets, integration, norms, CSV I/O.

Curves are represented by their values on a shared finite grid over [0, 1];
every functional operation below is grid-discrete. Integration is the
composite trapezoid rule on the (possibly non-uniform) grid, which is exact
for the piecewise-linear interpolants the discrete curves stand for.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, GridMismatchError

__all__ = [
    "TimeGrid",
    "Curve",
    "ObservationalDataset",
    "uniform_grid",
    "trapezoid_integrate",
    "l2_distance_sq",
    "sup_norm",
    "write_dataset",
    "load_dataset",
]

#: Default number of equispaced grid points for simulated curves.
DEFAULT_GRID_SIZE = 100


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=np.float64)
    if out is a:
        out = out.copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing sample points on [0, 1], with endpoints pinned at 0 and 1.

    Coordinates are canonicalized to 10 significant digits, the precision of
    the CSV header format, so writing and reloading a dataset is the identity.
    """

    points: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.points, dtype=np.float64).ravel()
        pts = _readonly(np.array([float(format(t, ".10g")) for t in raw]))
        object.__setattr__(self, "points", pts)
        if pts.size < 2:
            raise DataError(f"grid needs at least 2 points, got {pts.size}")
        if not np.all(np.isfinite(pts)):
            raise DataError("grid points must be finite")
        if pts[0] != 0.0 or pts[-1] != 1.0:
            raise DataError(
                f"grid must span [0, 1] exactly; got endpoints ({pts[0]}, {pts[-1]})"
            )
        if not np.all(np.diff(pts) > 0):
            raise DataError("grid points must be strictly increasing")
        # trapezoid weights: w_j = (t_{j+1} - t_{j-1}) / 2 with one-sided ends
        w = np.empty_like(pts)
        d = np.diff(pts)
        w[0] = d[0] / 2.0
        w[-1] = d[-1] / 2.0
        w[1:-1] = (d[:-1] + d[1:]) / 2.0
        object.__setattr__(self, "trapezoid_weights", _readonly(w))

    trapezoid_weights: np.ndarray = field(init=False, repr=False)

    def __len__(self) -> int:
        return self.points.size

    @property
    def m(self) -> int:
        return self.points.size

    def same_as(self, other: "TimeGrid") -> bool:
        return self is other or (
            self.m == other.m and bool(np.array_equal(self.points, other.points))
        )

    def require_same(self, other: "TimeGrid", what: str = "curves") -> None:
        if not self.same_as(other):
            raise GridMismatchError(f"{what} are defined on different grids")

    def index_of(self, t: float) -> int:
        """Index of the grid point closest to t."""
        return int(np.argmin(np.abs(self.points - t)))


def uniform_grid(m: int = DEFAULT_GRID_SIZE) -> TimeGrid:
    """Equispaced grid with m points on [0, 1]."""
    return TimeGrid(np.linspace(0.0, 1.0, m))


@dataclass(frozen=True, eq=False)
class Curve:
    """A real function sampled on a TimeGrid."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        vals = _readonly(np.asarray(self.values, dtype=np.float64).ravel())
        object.__setattr__(self, "values", vals)
        if vals.size != self.grid.m:
            raise DataError(
                f"curve has {vals.size} values but grid has {self.grid.m} points"
            )
        if not np.all(np.isfinite(vals)):
            raise DataError("curve values must be finite")

    def __add__(self, other: "Curve") -> "Curve":
        self.grid.require_same(other.grid)
        return Curve(self.grid, self.values + other.values)

    def __sub__(self, other: "Curve") -> "Curve":
        self.grid.require_same(other.grid)
        return Curve(self.grid, self.values - other.values)

    def __mul__(self, scalar: float) -> "Curve":
        return Curve(self.grid, self.values * float(scalar))

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class ObservationalDataset:
    """n units of (treatment flag, covariate row, outcome curve) on one shared grid.

    Covariates may be empty (p = 0). Arm balance is not enforced here; the
    estimators that need both arms check for themselves.
    """

    treatment: np.ndarray  # (n,) values in {0, 1}
    covariates: np.ndarray  # (n, p), p >= 0
    outcomes: np.ndarray  # (n, m) rows are curves on `grid`
    grid: TimeGrid

    def __post_init__(self):
        a = np.asarray(self.treatment)
        x = np.asarray(self.covariates, dtype=np.float64)
        y = np.asarray(self.outcomes, dtype=np.float64)
        if a.ndim != 1:
            raise DataError("treatment must be a 1-d array")
        n = a.shape[0]
        if n < 1:
            raise DataError("dataset needs at least 1 unit")
        if x.ndim != 2 or x.shape[0] != n:
            raise DataError(
                f"covariates must be (n, p) with n={n}, got shape {x.shape}"
            )
        if y.ndim != 2 or y.shape != (n, self.grid.m):
            raise DataError(
                f"outcomes must be (n, m)=({n}, {self.grid.m}), got shape {y.shape}"
            )
        if not np.all(np.isin(a, (0, 1))):
            bad = int(np.flatnonzero(~np.isin(a, (0, 1)))[0])
            raise DataError(f"treatment must be 0 or 1; unit {bad} has {a[bad]!r}")
        if not np.all(np.isfinite(x)):
            raise DataError("covariates must be finite")
        if not np.all(np.isfinite(y)):
            raise DataError("outcome values must be finite")
        a_int = np.ascontiguousarray(a, dtype=np.int64)
        if a_int is a:
            a_int = a_int.copy()
        a_int.flags.writeable = False
        object.__setattr__(self, "treatment", a_int)
        object.__setattr__(self, "covariates", _readonly(x))
        object.__setattr__(self, "outcomes", _readonly(y))

    @property
    def n(self) -> int:
        return self.treatment.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    def outcome_curve(self, i: int) -> Curve:
        return Curve(self.grid, self.outcomes[i])

    def arm_counts(self) -> tuple[int, int]:
        n1 = int(self.treatment.sum())
        return self.n - n1, n1


def trapezoid_integrate(c: Curve) -> float:
    """Trapezoid-rule approximation of the integral of c over [0, 1]."""
    return float(c.values @ c.grid.trapezoid_weights)


def l2_distance_sq(a: Curve, b: Curve) -> float:
    """Integrated squared difference between two curves on the same grid."""
    a.grid.require_same(b.grid)
    diff = a.values - b.values
    return float((diff * diff) @ a.grid.trapezoid_weights)


def sup_norm(c: Curve) -> float:
    """Maximum absolute value over the grid."""
    return float(np.max(np.abs(c.values)))


# --- wide CSV dataset format -------------------------------------------------
#
# Header: A,X1,...,Xp,Y@<t1>,...,Y@<tm> with decimal grid points; one row per
# unit; UTF-8 with '.' decimal separator. Grid points carry 10 significant
# digits; data values are written with shortest round-trip precision.

_Y_PREFIX = "Y@"


def write_dataset(dataset: ObservationalDataset, path) -> None:
    """Write a dataset in the wide CSV format."""
    header = ["A"]
    header += [f"X{j + 1}" for j in range(dataset.p)]
    header += [_Y_PREFIX + format(t, ".10g") for t in dataset.grid.points]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(dataset.n):
            row = [str(int(dataset.treatment[i]))]
            row += [repr(float(v)) for v in dataset.covariates[i]]
            row += [repr(float(v)) for v in dataset.outcomes[i]]
            writer.writerow(row)


def _parse_header(header: list[str]) -> tuple[int, np.ndarray]:
    if not header or header[0] != "A":
        raise DataError("malformed header: first column must be 'A'")
    p = 0
    k = 1
    while k < len(header) and not header[k].startswith(_Y_PREFIX):
        expected = f"X{p + 1}"
        if header[k] != expected:
            raise DataError(
                f"malformed header: expected column '{expected}' or '{_Y_PREFIX}<t>', got {header[k]!r}"
            )
        p += 1
        k += 1
    grid_points = []
    for col in header[k:]:
        if not col.startswith(_Y_PREFIX):
            raise DataError(f"malformed header: outcome columns must come last, got {col!r}")
        try:
            grid_points.append(float(col[len(_Y_PREFIX):]))
        except ValueError:
            raise DataError(f"malformed header: cannot parse grid point in column {col!r}") from None
    if len(grid_points) < 2:
        raise DataError(
            "missing outcome columns: need at least 2 'Y@<t>' columns, "
            f"found {len(grid_points)}"
        )
    return p, np.asarray(grid_points)


def load_dataset(path) -> ObservationalDataset:
    """Load and validate a dataset from the wide CSV format.

    Errors name the offending row (1-based, excluding the header) and column.
    """
    try:
        fh = open(path, "r", newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        p, grid_points = _parse_header(header)
        try:
            grid = TimeGrid(grid_points)
        except DataError as exc:
            raise DataError(f"{path}: bad outcome grid in header: {exc}") from None
        m = grid.m
        ncols = 1 + p + m
        treatment, covariates, outcomes = [], [], []
        for rownum, row in enumerate(reader, start=1):
            if len(row) != ncols:
                raise DataError(
                    f"{path}: row {rownum} has {len(row)} fields, expected {ncols}"
                )
            try:
                a = float(row[0])
            except ValueError:
                raise DataError(f"{path}: row {rownum}: treatment {row[0]!r} is not a number") from None
            if a not in (0.0, 1.0):
                raise DataError(f"{path}: row {rownum}: treatment must be 0 or 1, got {row[0]!r}")
            vals = np.empty(p + m)
            for j, tok in enumerate(row[1:]):
                try:
                    vals[j] = float(tok)
                except ValueError:
                    raise DataError(
                        f"{path}: row {rownum}, column {header[1 + j]!r}: {tok!r} is not a number"
                    ) from None
            if not np.all(np.isfinite(vals)):
                j = int(np.flatnonzero(~np.isfinite(vals))[0])
                raise DataError(
                    f"{path}: row {rownum}, column {header[1 + j]!r}: non-finite value"
                )
            treatment.append(int(a))
            covariates.append(vals[:p])
            outcomes.append(vals[p:])
    if not treatment:
        raise DataError(f"{path}: no data rows")
    return ObservationalDataset(
        treatment=np.asarray(treatment),
        covariates=np.asarray(covariates).reshape(len(treatment), p),
        outcomes=np.asarray(outcomes),
        grid=grid,
    )
