"""Time evolution exp(-itH) on a finite box, survival probability, position
moments, time averages and log-scaling fits.

Propagation uses the Chebyshev expansion

    exp(-i t H) = sum_k (2 - delta_k0) (-i)^k J_k(a t) T_k(H / a),

with a = 2 + max|V| bounding the spectrum.  Terms are dropped once the Bessel
coefficients fall below ``tol`` past k = a t, after which they decay
superexponentially.  A tridiagonal eigensolve serves as an oracle on small boxes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import jv

from .errors import BoundaryContamination, CoverageGap, DegenerateFit, ValidationError
from .sturmian import PotentialSpec, potential_array

EDGE_FRACTION = 0.01
EDGE_MASS_MAX = 1e-6
GAP_FRACTION = 0.3
DENSE_MAX_HALF_WIDTH = 512


@dataclass(frozen=True)
class BoxOperator:
    """H on sites [-N, N] with Dirichlet ends."""

    half_width: int
    diag: np.ndarray = field(repr=False)
    vmax: float
    spec: PotentialSpec | None = field(default=None, repr=False)

    @property
    def offset(self) -> int:
        return -self.half_width

    @property
    def size(self) -> int:
        return len(self.diag)

    @property
    def sites(self) -> np.ndarray:
        return np.arange(-self.half_width, self.half_width + 1)

    @property
    def spectral_radius_bound(self) -> float:
        return 2.0 + self.vmax

    def apply(self, x: np.ndarray) -> np.ndarray:
        y = self.diag * x
        y[1:] += x[:-1]
        y[:-1] += x[1:]
        return y

    def dense(self) -> np.ndarray:
        n = self.size
        return np.diag(self.diag) + np.eye(n, k=1) + np.eye(n, k=-1)


def build_box(spec: PotentialSpec, half_width: int) -> BoxOperator:
    if half_width < 8:
        raise ValidationError("half_width must be >= 8")
    V = np.array(potential_array(spec, -half_width, half_width))
    V.setflags(write=False)
    return BoxOperator(half_width=int(half_width), diag=V,
                       vmax=float(np.max(np.abs(V))), spec=spec)


@dataclass
class LatticeState:
    offset: int
    amplitudes: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)

    @classmethod
    def delta(cls, op: BoxOperator, site: int = 0) -> "LatticeState":
        if not -op.half_width <= site <= op.half_width:
            raise ValidationError(f"site {site} outside the box")
        a = np.zeros(op.size, dtype=complex)
        a[site + op.half_width] = 1.0
        return cls(offset=op.offset, amplitudes=a)

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + len(self.amplitudes))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def _check_state(op: BoxOperator, state: LatticeState):
    if state.offset != op.offset or len(state.amplitudes) != op.size:
        raise ValidationError("state does not live on this box")
    if abs(state.norm - 1.0) > 1e-8:
        raise ValidationError(f"state is not normalized (norm {state.norm})")


def chebyshev_coefficients(a_t: float, tol: float) -> np.ndarray:
    """(2 - delta_k0) (-i)^k J_k(a t), cut after the last |J_k| >= tol."""
    x = abs(a_t)
    k = np.arange(int(x + 10 * x ** (1 / 3) + 60))
    J = jv(k, x)
    big = np.nonzero(np.abs(J) >= tol)[0]
    K = int(big[-1]) + 2 if len(big) else 1
    c = (-1j) ** k[:K] * J[:K] * np.where(k[:K] == 0, 1.0, 2.0)
    # exp(-i t H) with t < 0 has coefficients conj-like: J_k(-x) = (-1)^k J_k(x)
    if a_t < 0:
        c = c * (-1.0) ** k[:K]
    return c


def _propagate(op: BoxOperator, x: np.ndarray, t: float, tol: float) -> np.ndarray:
    if t == 0:
        return x.copy()
    a = op.spectral_radius_bound
    c = chebyshev_coefficients(a * t, tol)
    prev = x
    out = c[0] * x
    if len(c) == 1:
        return out
    cur = op.apply(x) / a
    out = out + c[1] * cur
    for ck in c[2:]:
        prev, cur = cur, 2.0 * op.apply(cur) / a - prev
        out += ck * cur
    return out


def edge_mass(op: BoxOperator, x: np.ndarray) -> float:
    k = max(1, int(math.ceil(EDGE_FRACTION * op.size)))
    p = np.abs(x) ** 2
    return float(p[:k].sum() + p[-k:].sum())


def propagate(op: BoxOperator, state: LatticeState, t: float, tol: float = 1e-14) -> LatticeState:
    """exp(-i t H) state for any real t (negative t runs backwards)."""
    _check_state(op, state)
    x = _propagate(op, state.amplitudes, float(t), tol)
    return LatticeState(offset=op.offset, amplitudes=x, time=state.time + float(t))


def evolve(op: BoxOperator, state: LatticeState, dt: float, steps: int,
           tol: float = 1e-14) -> list[LatticeState]:
    """States at t0 + k dt for k = 0..steps.

    Raises :class:`BoundaryContamination` (carrying the valid prefix) as soon as
    the outer 1% of sites holds more than 1e-6 of the probability.
    """
    if not dt > 0:
        raise ValidationError("dt must be positive")
    if steps < 0:
        raise ValidationError("steps must be >= 0")
    _check_state(op, state)
    out = [state]
    x = state.amplitudes
    for k in range(1, steps + 1):
        x = _propagate(op, x, dt, tol)
        t = state.time + k * dt
        if edge_mass(op, x) > EDGE_MASS_MAX:
            raise BoundaryContamination(f"wave packet reached the box edge at t={t}",
                                        time=t, states=out)
        out.append(LatticeState(offset=op.offset, amplitudes=x, time=t))
    return out


def dense_propagate(op: BoxOperator, state: LatticeState, t: float) -> LatticeState:
    """Oracle: exp(-i t H) through a full tridiagonal eigendecomposition."""
    if op.half_width > DENSE_MAX_HALF_WIDTH:
        raise ValidationError(f"dense oracle limited to half_width <= {DENSE_MAX_HALF_WIDTH}")
    w, U = eigh_tridiagonal(op.diag, np.ones(op.size - 1))
    x = U @ (np.exp(-1j * w * t) * (U.T @ state.amplitudes))
    return LatticeState(offset=op.offset, amplitudes=x, time=state.time + t)


def survival(state_t: LatticeState, state_0: LatticeState) -> float:
    if state_t.offset != state_0.offset or len(state_t.amplitudes) != len(state_0.amplitudes):
        raise ValidationError("states live on different boxes")
    return float(abs(np.vdot(state_0.amplitudes, state_t.amplitudes)) ** 2)


def moment(state: LatticeState, m: float) -> float:
    if not m > 0:
        raise ValidationError("m must be positive")
    return float(np.sum(np.abs(state.sites.astype(float)) ** m * np.abs(state.amplitudes) ** 2))


def energy(op: BoxOperator, state: LatticeState) -> float:
    return float(np.vdot(state.amplitudes, op.apply(state.amplitudes)).real)


def time_average(samples, T: float, gap_fraction: float = GAP_FRACTION) -> float:
    """Trapezoid estimate of (1/T) int_0^T f dt from (t, f) samples starting at t = 0.

    A T between samples is handled by linear interpolation of f.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 2:
        raise ValidationError("samples must be a sequence of (t, f) pairs")
    t, f = arr[:, 0], arr[:, 1]
    if t[0] != 0:
        raise CoverageGap("samples must start at t = 0")
    if np.any(np.diff(t) <= 0):
        raise ValidationError("sample times must be strictly increasing")
    if not T > 0:
        raise ValidationError("T must be positive")
    if T > t[-1] * (1 + 1e-12):
        raise CoverageGap(f"samples end at {t[-1]} < T = {T}")
    n = int(np.searchsorted(t, T, side="left"))
    if n < len(t) and math.isclose(t[n], T, rel_tol=1e-12):
        tt, ff = t[:n + 1], f[:n + 1]
    else:
        tt = np.append(t[:n], T)
        ff = np.append(f[:n], np.interp(T, t, f))
    gap = float(np.max(np.diff(tt)))
    if gap > gap_fraction * T:
        raise CoverageGap(f"sample spacing {gap} exceeds {gap_fraction} of T = {T}")
    return float(np.trapezoid(ff, tt) / T)


def time_grid(T_max: float, T_min: float = 10.0, points_per_decade: int = 32) -> np.ndarray:
    """0, a uniform grid on [0, T_min], then a uniform grid inside each decade."""
    if not 0 < T_min <= T_max:
        raise ValidationError("need 0 < T_min <= T_max")
    if points_per_decade < 1:
        raise ValidationError("points_per_decade must be >= 1")
    parts = [np.linspace(0.0, T_min, points_per_decade + 1)]
    lo = T_min
    while lo < T_max * (1 - 1e-12):
        hi = min(10 * lo, T_max)
        n = max(1, int(math.ceil(points_per_decade * (hi - lo) / (9 * lo))))
        parts.append(np.linspace(lo, hi, n + 1)[1:])
        lo = hi
    return np.concatenate(parts)


@dataclass(frozen=True)
class TransportRecord:
    T: float
    survival_avg: float
    moment_avg: dict


class TransportRun(NamedTuple):
    records: list
    times: np.ndarray
    survival: np.ndarray
    moments: dict


def transport_run(op: BoxOperator, initial: LatticeState | None, T_grid: Sequence[float],
                  moments: Sequence[float] = (1.0, 2.0), points_per_decade: int = 32,
                  tol: float = 1e-14, gap_fraction: float = GAP_FRACTION) -> TransportRun:
    """Time-averaged survival and moments at every T in ``T_grid``."""
    T_grid = np.asarray(sorted(float(T) for T in T_grid))
    if len(T_grid) == 0 or T_grid[0] <= 0:
        raise ValidationError("T_grid must contain positive times")
    state0 = initial if initial is not None else LatticeState.delta(op)
    _check_state(op, state0)
    times = np.union1d(time_grid(T_grid[-1], min(T_grid[0], 10.0), points_per_decade), T_grid)
    x0 = state0.amplitudes
    x = x0
    surv = np.empty(len(times))
    mom = {float(m): np.empty(len(times)) for m in moments}
    absn = np.abs(op.sites).astype(float)
    weights = {m: absn ** m for m in mom}
    for i, t in enumerate(times):
        if i:
            x = _propagate(op, x, t - times[i - 1], tol)
            if edge_mass(op, x) > EDGE_MASS_MAX:
                raise BoundaryContamination(f"wave packet reached the box edge at t={t}",
                                            time=float(t), states=[])
        p = np.abs(x) ** 2
        surv[i] = abs(np.vdot(x0, x)) ** 2
        for m, w in weights.items():
            mom[m][i] = float(w @ p)
    records = []
    for T in T_grid:
        s = time_average(np.column_stack([times, surv]), T, gap_fraction)
        ma = {m: time_average(np.column_stack([times, v]), T, gap_fraction) for m, v in mom.items()}
        records.append(TransportRecord(T=float(T), survival_avg=s, moment_avg=ma))
    return TransportRun(records=records, times=times, survival=surv, moments=mom)


class ScalingFit(NamedTuple):
    kappa_hat: float
    D_hat: float
    residual: float


def _records_xy(records, m, quantity):
    if len(records) < 8:
        raise DegenerateFit("need at least 8 records")
    T = np.array([r.T for r in records], dtype=float)
    if np.any(T <= 1):
        raise DegenerateFit("need T > 1")
    if math.log10(T.max() / T.min()) < 3 - 1e-9:
        raise DegenerateFit("T must span at least three decades")
    if quantity == "moment":
        y = np.array([r.moment_avg[float(m)] for r in records])
    elif quantity == "survival":
        y = np.array([r.survival_avg for r in records])
    else:
        raise ValidationError(f"unknown quantity {quantity!r}")
    if np.any(y <= 0):
        raise DegenerateFit("values must be positive")
    return T, np.log(y)


def _lsq(x, y, sign):
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    residual = float(np.sqrt(np.mean((y - slope * x - icpt) ** 2)))
    return ScalingFit(kappa_hat=float(sign * slope), D_hat=float(math.exp(icpt)), residual=residual)


def fit_log_scaling(records: Sequence[TransportRecord], m: float = 2.0,
                    quantity: str = "moment") -> ScalingFit:
    """log y = log D + kappa log log T for moments, log y = log C - kappa log log T
    for survival."""
    T, y = _records_xy(records, m, quantity)
    return _lsq(np.log(np.log(T)), y, 1.0 if quantity == "moment" else -1.0)


def fit_power_scaling(records: Sequence[TransportRecord], m: float = 2.0,
                      quantity: str = "moment") -> ScalingFit:
    """Same with log T as regressor; used to flag ballistic (power) growth."""
    T, y = _records_xy(records, m, quantity)
    return _lsq(np.log(T), y, 1.0 if quantity == "moment" else -1.0)


def records_columns(moments: Sequence[float]) -> list[str]:
    return ["T", "survival_avg"] + [f"moment_avg[m={m:g}]" for m in moments]


def write_records_csv(records: Sequence[TransportRecord], path) -> None:
    ms = sorted(records[0].moment_avg) if records else []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(records_columns(ms))
        for r in records:
            w.writerow([repr(r.T), repr(r.survival_avg)] + [repr(r.moment_avg[m]) for m in ms])
