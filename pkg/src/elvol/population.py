"""Finite-population frames, synthetic scenarios and CSV ingestion.

Random streams
--------------
All randomness comes from numpy's PCG64. A frame generated for Monte Carlo
replicate ``r`` of base seed ``s`` uses ``SeedSequence(entropy=s,
spawn_key=(r,))``, so every replicate owns an independent stream that does not
depend on which worker runs it or in what order.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from elvol.errors import DegenerateFrameError, InputError


class Scenario(str, enum.Enum):
    M1 = "M1"
    M2 = "M2"


def _readonly(a):
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class OracleData:
    """Quantities only a simulation knows. Estimators must never read these."""

    y_full: np.ndarray
    true_pi: np.ndarray


@dataclass(frozen=True)
class PopulationFrame:
    """All N units of a finite population with the selection indicator.

    ``y`` is NaN wherever ``delta == 0``; the respondent values are exposed
    through :attr:`y_s`, which is the only way estimation code reads outcomes.
    """

    x: np.ndarray
    delta: np.ndarray
    y: np.ndarray
    x_names: tuple = ()
    oracle: Optional[OracleData] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        delta = np.asarray(self.delta)
        if x.ndim != 2 or delta.ndim != 1 or x.shape[0] != delta.shape[0]:
            raise InputError("x must be N x p and delta length N")
        if not np.all((delta == 0) | (delta == 1)):
            raise InputError("delta must be 0/1")
        delta = delta.astype(np.int8)
        y = np.asarray(self.y, dtype=np.float64).copy()
        if y.shape != delta.shape:
            raise InputError("y must have length N")
        resp = delta == 1
        if np.any(~np.isfinite(y[resp])):
            bad = int(np.flatnonzero(resp & ~np.isfinite(y))[0])
            raise InputError(f"unit {bad} has delta=1 but no finite y")
        if not np.all(np.isfinite(x)):
            raise InputError("x contains non-finite values")
        y[~resp] = np.nan
        names = tuple(self.x_names) or tuple(f"x{j + 1}" for j in range(x.shape[1]))
        if len(names) != x.shape[1]:
            raise InputError("x_names length does not match x columns")
        object.__setattr__(self, "x", _readonly(x))
        object.__setattr__(self, "delta", _readonly(delta))
        object.__setattr__(self, "y", _readonly(y))
        object.__setattr__(self, "x_names", names)

    @property
    def n_units(self) -> int:
        return int(self.delta.shape[0])

    @property
    def n_sample(self) -> int:
        return int(self.delta.sum())

    @property
    def n_x(self) -> int:
        return int(self.x.shape[1])

    @property
    def resp(self) -> np.ndarray:
        return self.delta == 1

    @property
    def x_s(self) -> np.ndarray:
        return self.x[self.resp]

    @property
    def y_s(self) -> np.ndarray:
        return self.y[self.resp]

    @property
    def is_degenerate(self) -> bool:
        n = self.n_sample
        return n == 0 or n == self.n_units

    def require_estimable(self):
        """Raise unless 1 <= n < N."""
        if self.is_degenerate:
            raise DegenerateFrameError(
                f"need both selected and unselected units (n={self.n_sample}, N={self.n_units})"
            )

    def take(self, index) -> "PopulationFrame":
        """Reordered/sub-setted copy (oracle data follows the units)."""
        index = np.asarray(index)
        oracle = None
        if self.oracle is not None:
            oracle = OracleData(self.oracle.y_full[index], self.oracle.true_pi[index])
        return PopulationFrame(self.x[index], self.delta[index], self.y[index],
                               self.x_names, oracle)


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: Scenario = Scenario.M1
    n_units: int = 5000
    phi_true: tuple = (-2.0, 1.0, 0.5)
    seed: int = 20240101

    def __post_init__(self):
        sc = getattr(self.scenario, "value", self.scenario)
        object.__setattr__(self, "scenario", Scenario(str(sc).upper()))
        if int(self.n_units) < 10:
            raise ValueError("n_units must be >= 10")
        if len(self.phi_true) != 3 or not all(math.isfinite(v) for v in self.phi_true):
            raise ValueError("phi_true must be 3 finite numbers")


def replicate_rng(seed: int, replicate: Optional[int] = None) -> np.random.Generator:
    if replicate is None:
        ss = np.random.SeedSequence(seed)
    else:
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(int(replicate),))
    return np.random.Generator(np.random.PCG64(ss))


def outcome_mean(scenario: Scenario, x1, x2):
    if scenario is Scenario.M1:
        return -4.0 + x1 + x2
    return 0.5 * (x1 + x2 - 5.0) ** 2 - 1.5


def generate_population(config: ScenarioConfig, replicate: Optional[int] = None) -> PopulationFrame:
    """Draw one finite population for the simulation scenarios.

    x1, x2 ~ N(2, 1), e ~ N(0, 1), y = m(x1, x2) + e and
    delta ~ Bernoulli(expit(phi0 + phi1 x1 + phi2 y)).
    """
    rng = replicate_rng(config.seed, replicate)
    n = int(config.n_units)
    x = rng.normal(2.0, 1.0, size=(n, 2))
    e = rng.normal(0.0, 1.0, size=n)
    y = outcome_mean(config.scenario, x[:, 0], x[:, 1]) + e
    phi0, phi1, phi2 = config.phi_true
    pi = _expit(phi0 + phi1 * x[:, 0] + phi2 * y)
    delta = (rng.random(n) < pi).astype(np.int8)
    return PopulationFrame(x, delta, np.where(delta == 1, y, np.nan), ("x1", "x2"),
                           OracleData(_readonly(y), _readonly(pi)))


def _expit(t):
    from scipy.special import expit

    return expit(t)


# --- CSV -----------------------------------------------------------------------

@dataclass(frozen=True)
class ColumnMap:
    """Header names for the CSV columns. ``x=None`` means every other column."""

    x: Optional[Sequence[str]] = None
    delta: str = "delta"
    y: str = "y"


def save_population(frame: PopulationFrame, path) -> None:
    """Write a frame in the ingestion format (y blank where delta=0)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*frame.x_names, "delta", "y"])
        for i in range(frame.n_units):
            d = int(frame.delta[i])
            yv = repr(float(frame.y[i])) if d == 1 else ""
            w.writerow([*(repr(float(v)) for v in frame.x[i]), d, yv])


def load_population(path, schema: Optional[ColumnMap] = None) -> PopulationFrame:
    """Parse a CSV file into a frame.

    Rows are numbered from 2 (the header is row 1) in error messages. A y value
    on a delta=0 row is discarded.
    """
    schema = schema or ColumnMap()
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        for col in (schema.delta, schema.y):
            if col not in header:
                raise InputError(f"{path}: missing column {col!r}")
        x_cols = list(schema.x) if schema.x is not None else [
            h for h in header if h not in (schema.delta, schema.y)]
        if not x_cols:
            raise InputError(f"{path}: no auxiliary columns")
        for col in x_cols:
            if col not in header:
                raise InputError(f"{path}: missing column {col!r}")
        xi = [header.index(c) for c in x_cols]
        di, yi = header.index(schema.delta), header.index(schema.y)

        xs, ds, ys = [], [], []
        for rownum, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise InputError(f"row {rownum}: expected {len(header)} fields, got {len(row)}")
            try:
                xs.append([float(row[j]) for j in xi])
            except ValueError:
                raise InputError(f"row {rownum}: non-numeric auxiliary value") from None
            d = row[di].strip()
            if d not in ("0", "1"):
                raise InputError(f"row {rownum}: delta must be 0 or 1, got {d!r}")
            d = int(d)
            ytxt = row[yi].strip()
            if d == 1:
                if not ytxt:
                    raise InputError(f"row {rownum}: delta=1 but y is missing")
                try:
                    yv = float(ytxt)
                except ValueError:
                    raise InputError(f"row {rownum}: non-numeric y {ytxt!r}") from None
                if not math.isfinite(yv):
                    raise InputError(f"row {rownum}: y must be finite")
            else:
                yv = math.nan
            ds.append(d)
            ys.append(yv)
    if not ds:
        raise InputError(f"{path}: no data rows")
    return PopulationFrame(np.array(xs), np.array(ds), np.array(ys), tuple(x_cols))
