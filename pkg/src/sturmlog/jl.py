"""The scale L_phi(eps), the two-sided norm-ratio inequality, dimension functions
and log-Lipschitz fits.

For boundary phase phi let psi1 = (sin phi, cos phi) and psi2 = (-cos phi, sin phi)
at sites (0, 1).  L_phi(eps) solves ||psi1||_L ||psi2||_L = 1/(2 eps); at that
scale

    (5 - sqrt 24) / |m_phi| < ||psi1||_L / ||psi2||_L < (5 + sqrt 24) / |m_phi|,

where m_phi is the m-function of the phase phi boundary condition (see
:func:`phase_m` for the sign convention).

Both solutions are linear combinations of the basis solutions u = (1, 0) and
v = (0, 1), so one pair of trajectories per energy serves every phi and eps.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import CapExceeded, DegenerateFit, DomainError, OutOfRange, ValidationError
from .sturmian import PotentialSpec, potential_array
from .weyl import JL_LOWER, JL_UPPER, m_phi, m_plus

DEFAULT_L_CAP = 1e7
# a trajectory that reached this size is far past any product 1/(2 eps) we accept
_HUGE = 1e150


@dataclass(frozen=True)
class DimensionFunction:
    kind: str
    parameter: float

    def __post_init__(self):
        if self.kind not in ("power", "logb"):
            raise ValidationError(f"unknown dimension function kind {self.kind!r}")
        if not self.parameter > 0:
            raise ValidationError("parameter must be positive")
        if self.kind == "power" and not self.parameter < 1:
            raise ValidationError("power exponent must lie in (0, 1)")

    @classmethod
    def power(cls, alpha: float):
        return cls("power", alpha)

    @classmethod
    def logb(cls, b: float):
        return cls("logb", b)


def h_eval(h: DimensionFunction, x):
    """x**alpha, or (log 1/x)**-b on 0 < x < 1."""
    x = np.asarray(x, dtype=float)
    if h.kind == "power":
        if np.any(x < 0):
            raise DomainError("power dimension function needs x >= 0")
        out = x ** h.parameter
    else:
        if np.any((x <= 0) | (x >= 1)):
            raise DomainError("log dimension function needs 0 < x < 1")
        out = np.log(1.0 / x) ** (-h.parameter)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class JLScale:
    E: float
    eps: float
    phi: float
    L: float
    norms: tuple[float, float]


class JLResult(NamedTuple):
    lower: float
    mid: float
    upper: float
    passed: bool


@dataclass
class _Basis:
    """u, v on sites 0..len-1 with prefix sums of u^2, uv, v^2."""
    u: np.ndarray
    v: np.ndarray
    Suu: np.ndarray
    Suv: np.ndarray
    Svv: np.ndarray
    truncated: bool

    def norms_sq(self, phi: float):
        s, c = math.sin(phi), math.cos(phi)
        n1 = s * s * self.Suu + 2 * s * c * self.Suv + c * c * self.Svv
        n2 = c * c * self.Suu - 2 * s * c * self.Suv + s * s * self.Svv
        p1, p2 = s * self.u + c * self.v, -c * self.u + s * self.v
        return n1, n2, p1 * p1, p2 * p2


def _basis(spec: PotentialSpec, E: float, N: int) -> _Basis:
    V = potential_array(spec, 1, N).tolist()
    u, v = [1.0, 0.0], [0.0, 1.0]
    up, uc, vp, vc = 1.0, 0.0, 0.0, 1.0
    truncated = False
    for x in V:
        t = E - x
        up, uc = uc, t * uc - up
        vp, vc = vc, t * vc - vp
        if abs(uc) > _HUGE or abs(vc) > _HUGE:
            truncated = True
            break
        u.append(uc)
        v.append(vc)
    u, v = np.array(u), np.array(v)
    return _Basis(u, v, np.cumsum(u * u), np.cumsum(u * v), np.cumsum(v * v), truncated)


class _Trajectories:
    """Basis solutions at one energy, extended on demand by factors of four."""

    def __init__(self, spec: PotentialSpec, E: float, L_cap: float):
        self.spec, self.E, self.L_cap = spec, float(E), float(L_cap)
        self.basis = _basis(spec, self.E, 64)

    def extend(self) -> bool:
        b = self.basis
        if b.truncated or len(b.u) - 1 >= self.L_cap + 1:
            return False
        N = int(min(4 * len(b.u), self.L_cap + 2))
        self.basis = _basis(self.spec, self.E, N)
        return True

    def length(self, eps: float, phi: float) -> JLScale:
        target_sq = 1.0 / (4.0 * eps * eps)
        while True:
            n1, n2, a1, a2 = self.basis.norms_sq(phi)
            prod_sq = n1 * n2  # at integer L = 0, 1, ...
            k = int(np.searchsorted(prod_sq, target_sq, side="left"))
            if k < len(prod_sq) and k <= self.L_cap:
                break
            if not self.extend():
                K = min(len(prod_sq) - 1, int(self.L_cap))
                raise CapExceeded(
                    f"norm product {math.sqrt(prod_sq[K])} < {1 / (2 * eps)} at L={K}",
                    product=float(math.sqrt(prod_sq[K])))
        if k == 0:
            if prod_sq[0] > target_sq:
                raise OutOfRange(
                    f"1/(2 eps) = {1 / (2 * eps)} is below the norm product "
                    f"{math.sqrt(prod_sq[0])} at L = 0; no scale solves the equation")
            L = 0.0
            x1, x2 = n1[0], n2[0]
        else:
            # on [k-1, k]: ||psi||^2 = S(k-1) + t psi(k)^2, product squared is quadratic in t
            A1, A2, d1, d2 = n1[k - 1], n2[k - 1], a1[k], a2[k]
            lo, hi = 0.0, 1.0
            for _ in range(64):
                mid = 0.5 * (lo + hi)
                if (A1 + mid * d1) * (A2 + mid * d2) < target_sq:
                    lo = mid
                else:
                    hi = mid
                if hi - lo <= 1e-16:
                    break
            t = 0.5 * (lo + hi)
            L = (k - 1) + t
            x1, x2 = A1 + t * d1, A2 + t * d2
        return JLScale(E=self.E, eps=float(eps), phi=float(phi), L=float(L),
                       norms=(math.sqrt(x1), math.sqrt(x2)))


def jl_length(spec: PotentialSpec, E: float, eps: float, phi: float,
              L_cap: float = DEFAULT_L_CAP) -> JLScale:
    """L with ||psi1||_L ||psi2||_L = 1/(2 eps).

    The product is located between consecutive integers from prefix sums and
    then bisected in the interpolation parameter to machine precision.
    """
    if not eps > 0:
        raise ValidationError("eps must be positive")
    return _Trajectories(spec, E, L_cap).length(eps, phi)


def phase_m(mp, phi: float) -> complex:
    """m-function of the boundary phase carried by the pair (psi1, psi2).

    The Weyl solution of the half line {1, 2, ...} has data (-1, m+) at sites
    (0, 1).  Writing it as psi2 + m psi1 gives
    m = (cos phi m+ - sin phi) / (cos phi + sin phi m+), which is
    :func:`weyl.m_phi` at -phi.  The two agree at phi = 0 and phi = pi/2.
    """
    return m_phi(mp, -phi)


def _result(scale: JLScale, mp) -> JLResult:
    r = abs(phase_m(mp, scale.phi))
    mid = scale.norms[0] / scale.norms[1]
    lower, upper = JL_LOWER / r, JL_UPPER / r
    return JLResult(lower, mid, upper, bool(lower < mid < upper))


def jl_check(spec: PotentialSpec, E: float, eps: float, phi: float, depth: int = 64,
             tol: float = 1e-12, L_cap: float = DEFAULT_L_CAP) -> JLResult:
    scale = jl_length(spec, E, eps, phi, L_cap)
    mp = m_plus(spec, complex(E, eps), depth=depth, tol=tol)
    return _result(scale, mp)


JL_COLUMNS = ["E", "eps", "phi", "L", "lower", "mid", "upper", "pass"]


def jl_grid(spec: PotentialSpec, energies, eps_list, phis, depth: int = 64,
            tol: float = 1e-12, L_cap: float = DEFAULT_L_CAP) -> list[dict]:
    """jl_check over a product grid, sharing trajectories and m+ values."""
    rows = []
    for E in energies:
        tr = _Trajectories(spec, E, L_cap)
        for eps in eps_list:
            mp = m_plus(spec, complex(E, eps), depth=depth, tol=tol)
            for phi in phis:
                sc = tr.length(eps, phi)
                res = _result(sc, mp)
                rows.append({"E": float(E), "eps": float(eps), "phi": float(phi), "L": sc.L,
                             "lower": res.lower, "mid": res.mid, "upper": res.upper,
                             "pass": res.passed})
    return rows


def write_jl_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(JL_COLUMNS)
        for r in rows:
            w.writerow([repr(float(r[c])) if c != "pass" else str(r[c]).lower()
                        for c in JL_COLUMNS])


@dataclass(frozen=True)
class LogLipschitzFit:
    b_hat: float
    C_hat: float
    residual: float
    E: float

    def report(self, gamma_hat: float | None = None) -> dict:
        d = {"E": self.E, "b_hat": self.b_hat, "C_hat": self.C_hat, "residual": self.residual}
        if gamma_hat is not None:
            d["gamma_hat"] = gamma_hat
            d["ratio"] = self.b_hat / (2 * gamma_hat) if gamma_hat != 0 else math.nan
        return d


def fit_log_lipschitz(bound_samples: Sequence[tuple[float, float]], E: float = math.nan
                      ) -> LogLipschitzFit:
    """Fit mass ~ C (log 1/eps)**-b by least squares in (log log 1/eps, log mass).

    Needs at least 8 samples with eps < 1 spanning three decades.  ``b_hat`` is
    clamped at 0; ``residual`` is the RMS misfit in log mass.
    """
    arr = np.asarray(bound_samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 8:
        raise DegenerateFit("need at least 8 (eps, mass) samples")
    eps, mass = arr[:, 0], arr[:, 1]
    if np.any((eps <= 0) | (eps >= 1)) or np.any(mass <= 0):
        raise DegenerateFit("need 0 < eps < 1 and positive masses")
    if math.log10(eps.max() / eps.min()) < 3 - 1e-9:
        raise DegenerateFit("eps must span at least three decades")
    x = np.log(np.log(1.0 / eps))
    y = np.log(mass)
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    residual = float(np.sqrt(np.mean((y - slope * x - icpt) ** 2)))
    return LogLipschitzFit(b_hat=max(0.0, float(-slope)), C_hat=float(math.exp(icpt)),
                           residual=residual, E=float(E))
