"""Panel data containers, regression design blocks, and the simulator.

Stacking convention used everywhere: observation (i, t) sits at position
(t-1)*N + i (1-based), i.e. index t*N + i with zero-based t and i.  Time is
the outer dimension, spatial units the inner one.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import (
    DataError,
    DesignConstructionError,
    InstrumentShapeError,
    InvalidDimensionError,
    PanelFormatError,
)
from .spatial import SpatialWeights, apply_expanded, spatial_filter


class ErrorDist(str, Enum):
    STANDARD_NORMAL = "normal"
    CAUCHY = "cauchy"


class EffectsMode(str, Enum):
    INDIVIDUAL_AND_TIME = "both"
    INDIVIDUAL_ONLY = "individual-only"


class InstrumentRule(str, Enum):
    LAGGED_Y = "lagged-y"
    FITTED_SPATIAL_LAG = "fitted-spatial-lag"
    USER_SUPPLIED = "user-supplied"


@dataclass(frozen=True)
class PanelData:
    """Stacked NT-observation panel: response ``y`` and covariates ``x``."""

    n: int
    t: int
    y: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        nt = self.n * self.t
        if y.shape[0] != nt or x.shape[0] != nt:
            raise InvalidDimensionError(
                f"y ({y.shape[0]}) and x ({x.shape[0]}) must have N*T = {nt} rows"
            )
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise DataError("panel contains non-finite values")
        y.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)

    @property
    def p(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class TrueEffects:
    """Fixed effects used by one simulated replicate."""

    nu: np.ndarray
    psi: np.ndarray


@dataclass(frozen=True)
class DgpSpec:
    """Data-generating process for the spatial panel model.

    y = rho0 W* y + X beta0 + Z1 nu + Z2 psi + u,  u = lambda0 M* u + eps.

    ``error_scale`` multiplies eps (0 gives the noise-free process) and
    ``effect_scale`` multiplies the drawn fixed effects.
    """

    rho0: float
    lambda0: float
    beta0: np.ndarray
    n: int
    t: int
    error_dist: ErrorDist = ErrorDist.STANDARD_NORMAL
    effects: EffectsMode = EffectsMode.INDIVIDUAL_AND_TIME
    seed: int = 0
    error_scale: float = 1.0
    effect_scale: float = 1.0

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta0, dtype=float))
        beta.setflags(write=False)
        object.__setattr__(self, "beta0", beta)
        if abs(self.rho0) >= 1 or abs(self.lambda0) >= 1:
            raise InvalidDimensionError("|rho0| and |lambda0| must be < 1")
        if self.n < 2 or self.t < 2:
            raise InvalidDimensionError("n and t must be >= 2")

    @property
    def p(self) -> int:
        return self.beta0.shape[0]


def _draw_errors(rng: np.random.Generator, dist: ErrorDist, size: int) -> np.ndarray:
    u = rng.random(size)
    if dist is ErrorDist.CAUCHY:
        # inverse-CDF transform; moments do not exist
        return np.tan(np.pi * (u - 0.5))
    # inverse-CDF keeps the draw count identical across distributions
    from scipy.special import ndtri

    return ndtri(u)


def simulate(spec: DgpSpec, w: SpatialWeights, m: SpatialWeights):
    """Draw one panel from the DGP.  Deterministic given ``spec.seed``.

    Returns
    -------
    (PanelData, TrueEffects)
    """
    if w.n != spec.n or m.n != spec.n:
        raise DesignConstructionError(
            f"weight matrices ({w.n}, {m.n}) do not match spec.n = {spec.n}"
        )
    rng = np.random.default_rng(spec.seed)
    nt = spec.n * spec.t
    x = rng.standard_normal((nt, spec.p))
    nu = spec.effect_scale * rng.standard_normal(spec.n)
    if spec.effects is EffectsMode.INDIVIDUAL_AND_TIME:
        psi = spec.effect_scale * rng.standard_normal(spec.t)
    else:
        psi = np.zeros(spec.t)
    eps = spec.error_scale * _draw_errors(rng, spec.error_dist, nt)

    b_lambda = spatial_filter(m, spec.t, spec.lambda0)
    u = b_lambda.solve(eps)
    # Z1 nu stacks nu once per period; Z2 psi repeats psi_t within a period
    rhs = x @ spec.beta0 + np.tile(nu, spec.t) + np.repeat(psi, spec.n) + u
    b_rho = spatial_filter(w, spec.t, spec.rho0)
    y = b_rho.solve(rhs)
    return PanelData(spec.n, spec.t, y, x), TrueEffects(nu, psi)


@dataclass(frozen=True)
class DesignSystem:
    """All regression blocks derived from one panel + weight-matrix pair.

    ``z_star``/``z1_star``/``z2_star`` carry the full doubled blocks
    [., -M* .]; estimators select a full-rank basis from them.
    """

    n: int
    t: int
    p: int
    y: np.ndarray
    d: np.ndarray
    z_star: np.ndarray
    z1_star: np.ndarray
    z2_star: np.ndarray
    instruments: np.ndarray
    sample_mask: np.ndarray

    def __post_init__(self):
        for name in ("y", "d", "z_star", "z1_star", "z2_star", "instruments", "sample_mask"):
            arr = getattr(self, name)
            arr.setflags(write=False)
        nt = self.n * self.t
        expected = {
            "z_star": 2 * (1 + self.p),
            "z1_star": 2 * self.n,
            "z2_star": 2 * self.t,
        }
        for name, cols in expected.items():
            got = getattr(self, name).shape[1]
            if got != cols:
                raise DesignConstructionError(f"{name} has {got} columns, expected {cols}")
        if self.y.shape[0] != nt or self.sample_mask.shape[0] != nt:
            raise DesignConstructionError("block row counts do not match N*T")

    @property
    def q(self) -> int:
        return self.instruments.shape[1]

    @property
    def n_eff(self) -> int:
        return int(self.sample_mask.sum())

    @property
    def z1(self) -> np.ndarray:
        """The raw individual-dummy block Z1 = 1_T (x) I_N."""
        return self.z1_star[:, : self.n]

    @property
    def z2(self) -> np.ndarray:
        """The raw time-dummy block Z2 = I_T (x) 1_N."""
        return self.z2_star[:, : self.t]


def build_design(
    data: PanelData,
    w: SpatialWeights,
    m: SpatialWeights,
    instrument_rule: InstrumentRule = InstrumentRule.LAGGED_Y,
    instruments: Optional[np.ndarray] = None,
) -> DesignSystem:
    """Build every block of the transformed regression from the stacked model.

    Under ``LAGGED_Y`` the single instrument column is y_{i,t-1} and the
    first period is masked out of the estimation sample.  Under
    ``FITTED_SPATIAL_LAG`` the instrument is the least-squares prediction of
    d from the exogenous side of the model ([X, M*X, M*M*X] plus the dummy
    span); no rows are masked.
    """
    if w.n != data.n or m.n != data.n:
        raise DesignConstructionError(
            f"weight matrices ({w.n}, {m.n}) do not match panel n = {data.n}"
        )
    n, t, nt = data.n, data.t, data.n * data.t
    d = apply_expanded(m, t, data.y)
    wy = apply_expanded(w, t, data.y)
    z = np.column_stack([wy, data.x])
    z_star = np.hstack([z, -apply_expanded(m, t, z)])
    z1 = np.kron(np.ones((t, 1)), np.eye(n))
    z2 = np.kron(np.eye(t), np.ones((n, 1)))
    z1_star = np.hstack([z1, -apply_expanded(m, t, z1)])
    z2_star = np.hstack([z2, -apply_expanded(m, t, z2)])

    if instrument_rule is InstrumentRule.LAGGED_Y:
        e = np.zeros((nt, 1))
        e[n:, 0] = data.y[:-n]
        mask = np.ones(nt, dtype=bool)
        mask[:n] = False
    elif instrument_rule is InstrumentRule.FITTED_SPATIAL_LAG:
        mx = apply_expanded(m, t, data.x)
        mmx = apply_expanded(m, t, mx)
        # one time dummy dropped: the full Z1 and Z2 sums are both 1_NT
        stage1 = np.hstack([data.x, mx, mmx, z1, z2[:, 1:]])
        q_basis, _ = np.linalg.qr(stage1)
        e = (q_basis @ (q_basis.T @ d))[:, None]
        mask = np.ones(nt, dtype=bool)
    else:
        if instruments is None:
            raise InstrumentShapeError("user-supplied rule requires an instrument matrix")
        e = np.asarray(instruments, dtype=float)
        if e.ndim == 1:
            e = e[:, None]
        if e.shape[0] != nt:
            raise InstrumentShapeError(f"instrument matrix has {e.shape[0]} rows, expected {nt}")
        if not np.all(np.isfinite(e)):
            raise DataError("instrument matrix contains non-finite values")
        mask = np.ones(nt, dtype=bool)

    return DesignSystem(
        n=n,
        t=t,
        p=data.p,
        y=np.array(data.y),
        d=d,
        z_star=z_star,
        z1_star=z1_star,
        z2_star=z2_star,
        instruments=e,
        sample_mask=mask,
    )


def load_panel_csv(path) -> PanelData:
    """Read a long-format panel CSV with header ``unit_id,time_id,y,x1..xp``.

    Units and times must form a complete rectangle; gaps are errors.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 3 or header[0] != "unit_id" or header[1] != "time_id":
            raise PanelFormatError(f"{path}: expected header unit_id,time_id,y,x1..xp")
        p = len(header) - 3
        rows = list(reader)
    if not rows:
        raise PanelFormatError(f"{path}: no data rows")
    units, times = [], []
    records = {}
    for ln, row in enumerate(rows, start=2):
        if len(row) != 3 + p:
            raise PanelFormatError(f"{path}:{ln}: expected {3 + p} fields, got {len(row)}")
        try:
            vals = [float(v) for v in row[2:]]
        except ValueError as exc:
            raise PanelFormatError(f"{path}:{ln}: {exc}") from None
        key = (row[0], row[1])
        if key in records:
            raise PanelFormatError(f"{path}:{ln}: duplicate observation for {key}")
        records[key] = vals
        if row[0] not in units:
            units.append(row[0])
        if row[1] not in times:
            times.append(row[1])

    def _order(labels):
        try:
            return sorted(labels, key=float)
        except ValueError:
            return sorted(labels)

    units, times = _order(units), _order(times)
    n, t = len(units), len(times)
    if len(records) != n * t:
        missing = [(u, s) for s in times for u in units if (u, s) not in records]
        raise PanelFormatError(
            f"{path}: incomplete panel rectangle; missing {len(missing)} cells, e.g. {missing[:3]}"
        )
    y = np.empty(n * t)
    x = np.empty((n * t, p))
    for ti, s in enumerate(times):
        for ui, u in enumerate(units):
            vals = records[(u, s)]
            y[ti * n + ui] = vals[0]
            x[ti * n + ui] = vals[1:]
    return PanelData(n, t, y, x)


def save_panel_csv(path, data: PanelData) -> None:
    """Write a panel in the long CSV format read by :func:`load_panel_csv`."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["unit_id", "time_id", "y"] + [f"x{j + 1}" for j in range(data.p)])
        for ti in range(data.t):
            for ui in range(data.n):
                k = ti * data.n + ui
                writer.writerow(
                    [ui + 1, ti + 1, repr(float(data.y[k]))]
                    + [repr(float(v)) for v in data.x[k]]
                )
