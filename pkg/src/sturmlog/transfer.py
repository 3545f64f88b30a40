"""Solutions of psi(n+1) + psi(n-1) + V(n) psi(n) = E psi(n) and their growth.

``solve`` runs the recursion in plain double precision and refuses to rescale:
if amplitudes leave the representable range it raises
:class:`TrajectoryOverflow` with the index reached.  Exponent fits go through a
separate multi-energy kernel that tracks the 2x2 Gram matrix of the two basis
solutions; rescaling there is by exact powers of two and is bookkept as a
log-scale, so every normalized solution's ``||psi||_L`` is recoverable.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateFit, OutOfRange, TrajectoryOverflow, ValidationError
from .sturmian import PotentialSpec, potential_array

# squares must stay finite for the cumulative norms
OVERFLOW_LIMIT = 1e150

# RMS log-log misfit above which a trajectory is not considered power-law.
POWER_LAW_RESIDUAL_MAX = 0.5


@dataclass(frozen=True)
class TransferMatrix:
    entries: np.ndarray

    @classmethod
    def one_step(cls, E: float, v: float) -> "TransferMatrix":
        return cls(np.array([[E - v, -1.0], [1.0, 0.0]]))

    @property
    def det(self) -> float:
        a, b, c, d = self.entries.ravel()
        return a * d - b * c

    def __matmul__(self, other: "TransferMatrix") -> "TransferMatrix":
        return TransferMatrix(self.entries @ other.entries)


@dataclass
class SolutionTrajectory:
    energy: float
    initial: tuple[float, float]
    samples: np.ndarray
    cumulative_norms_sq: np.ndarray = field(repr=False)
    spec: PotentialSpec | None = field(default=None, repr=False)

    @property
    def N(self) -> int:
        return len(self.samples) - 2

    def residuals(self) -> np.ndarray:
        """Relative defect of the recursion at interior sites 1..N."""
        psi = self.samples
        V = potential_array(self.spec, 1, self.N)
        lhs = psi[2:] + psi[:-2] + V * psi[1:-1]
        rhs = self.energy * psi[1:-1]
        scale = np.abs(psi[2:]) + np.abs(psi[:-2]) + (abs(self.energy) + np.abs(V)) * np.abs(psi[1:-1])
        return np.abs(lhs - rhs) / np.where(scale > 0, scale, 1.0)


def solve(spec: PotentialSpec, E: float, initial: Sequence[float], N: int) -> SolutionTrajectory:
    """psi(0..N+1) from psi(0), psi(1) via psi(n+1) = (E - V(n)) psi(n) - psi(n-1)."""
    if N < 1:
        raise ValidationError("N must be >= 1")
    a, b = float(initial[0]), float(initial[1])
    if a == 0.0 and b == 0.0:
        raise ValidationError("initial data must not vanish")
    E = float(E)
    V = potential_array(spec, 1, N).tolist()
    psi = [a, b]
    prev, cur = a, b
    for v in V:
        prev, cur = cur, (E - v) * cur - prev
        psi.append(cur)
    arr = np.array(psi)
    bad = ~np.isfinite(arr) | (np.abs(arr) > OVERFLOW_LIMIT)
    if bad.any():
        n = int(np.argmax(bad))
        raise TrajectoryOverflow(f"|psi({n})| left the representable range at E={E}", n_reached=n)
    return SolutionTrajectory(energy=E, initial=(a, b), samples=arr,
                              cumulative_norms_sq=np.cumsum(arr * arr), spec=spec)


def norm_L(traj: SolutionTrajectory, L):
    """Truncated norm with linear interpolation of the last square.

    ``||psi||_L^2 = sum_{n<=floor L} |psi(n)|^2 + (L - floor L) |psi(floor L + 1)|^2``.
    Vectorized over ``L``.
    """
    L_arr = np.asarray(L, dtype=float)
    if np.any(L_arr < 0):
        raise OutOfRange("L must be nonnegative")
    k = np.floor(L_arr).astype(np.int64)
    frac = L_arr - k
    last = len(traj.samples) - 1
    if np.any((k > last) | ((frac > 0) & (k + 1 > last))):
        raise OutOfRange(f"L={float(np.max(L_arr))} exceeds the trajectory (N={traj.N})")
    kk = np.minimum(k + 1, last)
    sq = traj.samples[kk] ** 2
    val = traj.cumulative_norms_sq[np.minimum(k, last)] + np.where(frac > 0, frac * sq, 0.0)
    out = np.sqrt(val)
    return float(out) if out.ndim == 0 else out


@dataclass
class PhiPair:
    phi: float
    psi1: SolutionTrajectory
    psi2: SolutionTrajectory

    def wronskian(self) -> np.ndarray:
        """psi1(n+1) psi2(n) - psi1(n) psi2(n+1) for n = 0..N."""
        a, b = self.psi1.samples, self.psi2.samples
        return a[1:] * b[:-1] - a[:-1] * b[1:]

    def frame_norm_sq(self) -> np.ndarray:
        return self.psi1.samples ** 2 + self.psi2.samples ** 2


def phi_pair(spec: PotentialSpec, E: float, phi: float, N: int) -> PhiPair:
    """psi1 = (sin phi, cos phi), psi2 = (-cos phi, sin phi) at sites (0, 1)."""
    s, c = math.sin(phi), math.cos(phi)
    return PhiPair(phi=float(phi), psi1=solve(spec, E, (s, c), N), psi2=solve(spec, E, (-c, s), N))


def cumulative_transfer(spec: PotentialSpec, E: float, N: int, n_from: int = 1):
    """Ordered product T(n_from + N - 1) ... T(n_from) of one-step matrices.

    Returned as ``(Q, k)`` with the product equal to ``2**k * Q``.  Factoring out
    powers of two is exact in binary floating point, so no information is lost;
    it only keeps hyperbolic products from overflowing.
    """
    E = float(E)
    V = potential_array(spec, n_from, n_from + N - 1).tolist()
    a, b, c, d = 1.0, 0.0, 0.0, 1.0
    k = 0
    for i, v in enumerate(V):
        t = E - v
        a, b, c, d = t * a - c, t * b - d, a, b
        if i & 63 == 63:
            m = max(abs(a), abs(b), abs(c), abs(d))
            if m > 1e100:
                e = math.frexp(m)[1]
                a, b, c, d = (math.ldexp(x, -e) for x in (a, b, c, d))
                k += e
    return np.array([[a, b], [c, d]]), k


def determinant_defect(Q: np.ndarray, k: int) -> float:
    """|det(P) - 1| relative to the cancellation scale ||P||_F^2 / 2, for P = 2**k Q.

    For elliptic (bounded) products this is the plain |det P - 1|; for
    hyperbolic ones the absolute defect is dominated by the unavoidable rounding
    of ``ad - bc`` and is measured against the size of those terms.
    """
    a, b, c, d = Q.ravel()
    inv = math.ldexp(1.0, -2 * k)
    det_q = a * d - b * c
    scale = max(inv, 0.5 * (a * a + b * b + c * c + d * d))
    return abs(det_q - inv) / scale


def write_csv(traj: SolutionTrajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "psi", "cumulative_norm_sq"])
        for n, (x, s) in enumerate(zip(traj.samples, traj.cumulative_norms_sq)):
            w.writerow([n, repr(float(x)), repr(float(s))])


# ---------------------------------------------------------------------------
# Multi-energy Gram kernel

@dataclass
class GramTrack:
    """Gram matrices of the basis solutions u=(1,0), v=(0,1) on an L grid.

    ``G[i, j] * exp(2 * log_scale[i, j])`` is the 2x2 matrix
    ``[[|u|_L^2, <u,v>_L], [<u,v>_L, |v|_L^2]]`` at energy ``energies[i]`` and
    ``L_grid[j]``; ``log_det`` is the log of its determinant, carried separately
    because it is far below the rounding level of the entries whenever one
    solution outgrows the other.
    """

    energies: np.ndarray
    L_grid: np.ndarray
    G: np.ndarray
    log_scale: np.ndarray
    log_det: np.ndarray

    def log_norm(self, phi: float) -> np.ndarray:
        """log ||psi||_L for the solution with (psi(0), psi(1)) = (sin phi, cos phi)."""
        a, b = math.sin(phi), math.cos(phi)
        q = a * a * self.G[..., 0, 0] + 2 * a * b * self.G[..., 0, 1] + b * b * self.G[..., 1, 1]
        return 0.5 * np.log(q) + self.log_scale

    def log_infimum(self) -> np.ndarray:
        """log of inf over normalized solutions of ||psi||_L (smallest Gram eigenvalue)."""
        tr = self.G[..., 0, 0] + self.G[..., 1, 1]
        # det/tr^2 of the stored matrix, from the accurate determinant
        r = np.clip(np.exp(self.log_det - 4 * self.log_scale - 2 * np.log(tr)), 0.0, 0.25)
        log_lmax = np.log(0.5 * tr * (1.0 + np.sqrt(1.0 - 4.0 * r)))
        return 0.5 * (self.log_det - log_lmax - 2 * self.log_scale)


# re-orthonormalize the working basis once the trace of its Gram matrix passes this;
# the Gram matrix is >= identity after the first pass, so this bounds its condition
_REORTHO_TRACE = 1e6


def gram_track(spec: PotentialSpec, energies, L_grid) -> GramTrack:
    """Prefix Gram matrices of u, v for many energies in one pass.

    The recursion runs on a working basis (f1, f2) = (u, v) M that is
    re-orthonormalized (Cholesky) whenever its Gram matrix becomes large; M and
    log|det M| are accumulated so that everything about u and v, including the
    tiny determinant of their Gram matrix, is recovered without cancellation.
    """
    E = np.atleast_1d(np.asarray(energies, dtype=float))
    L = np.asarray(L_grid, dtype=float)
    if np.any(np.diff(L) <= 0) or L[0] <= 0:
        raise ValidationError("L_grid must be positive and strictly increasing")
    n_max = int(math.floor(L[-1])) + 1
    V = potential_array(spec, 1, max(n_max, 1))
    ks = np.floor(L).astype(np.int64)
    fr = L - ks
    m = len(E)
    # working solutions at sites n (prev) and n + 1 (cur)
    p1, c1 = np.ones(m), np.zeros(m)
    p2, c2 = np.zeros(m), np.ones(m)
    A, B, C = np.ones(m), np.zeros(m), np.zeros(m)      # Gram of (f1, f2) over sites <= n
    M = np.tile(np.eye(2), (m, 1, 1))                   # exp(sigma) * M is the true M
    sigma = np.zeros(m)
    logdetM = np.zeros(m)
    G = np.empty((m, len(L), 2, 2))
    LS = np.empty((m, len(L)))
    LD = np.empty((m, len(L)))
    j = 0
    for n in range(0, n_max):
        while j < len(L) and ks[j] == n:
            a = A + fr[j] * c1 * c1
            b = B + fr[j] * c1 * c2
            c = C + fr[j] * c2 * c2
            # adj(M) maps u, v coordinates to f coordinates up to the scalar det M
            d00, d01, d10, d11 = M[:, 1, 1], -M[:, 0, 1], -M[:, 1, 0], M[:, 0, 0]
            K00 = d00 * (a * d00 + b * d10) + d10 * (b * d00 + c * d10)
            K01 = d00 * (a * d01 + b * d11) + d10 * (b * d01 + c * d11)
            K11 = d01 * (a * d01 + b * d11) + d11 * (b * d01 + c * d11)
            G[:, j, 0, 0], G[:, j, 0, 1], G[:, j, 1, 0], G[:, j, 1, 1] = K00, K01, K01, K11
            LS[:, j] = sigma - logdetM
            LD[:, j] = np.log(np.maximum(a * c - b * b, np.finfo(float).tiny)) - 2 * logdetM
            j += 1
        if j == len(L):
            break
        A += c1 * c1
        B += c1 * c2
        C += c2 * c2
        t = E - V[n]  # V[n] is V(n + 1)
        p1, c1 = c1, t * c1 - p1
        p2, c2 = c2, t * c2 - p2
        big = A + C > _REORTHO_TRACE
        if big.any():
            r11 = np.sqrt(A[big])
            r12 = B[big] / r11
            r22 = np.sqrt(np.maximum(C[big] - r12 * r12, np.finfo(float).tiny))
            q = r12 / r11
            for x1, x2 in ((p1, p2), (c1, c2)):
                x2[big] = (x2[big] - q * x1[big]) / r22
                x1[big] /= r11
            A[big], B[big], C[big] = 1.0, 0.0, 1.0
            Mb = M[big]
            Mb[:, :, 1] = (Mb[:, :, 1] - q[:, None] * Mb[:, :, 0]) / r22[:, None]
            Mb[:, :, 0] /= r11[:, None]
            s = np.abs(Mb).max(axis=(1, 2))
            M[big] = Mb / s[:, None, None]
            sigma[big] += np.log(s)
            logdetM[big] -= np.log(r11 * r22)
    return GramTrack(energies=E, L_grid=L, G=G, log_scale=LS, log_det=LD)


@dataclass
class GrowthFit:
    gamma_hat: float
    C_hat: float
    residual: float
    mode: str
    energy: float = float("nan")

    @property
    def power_law_valid(self) -> bool:
        return bool(np.isfinite(self.residual) and self.residual < POWER_LAW_RESIDUAL_MAX)


def _fit_loglog(x: np.ndarray, y: np.ndarray, mode: str) -> tuple[float, float, float]:
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    residual = float(np.sqrt(np.mean((y - (slope * x + icpt)) ** 2)))
    if mode == "least-squares":
        return float(slope), float(math.exp(icpt)) if icpt < 700 else math.inf, residual
    if mode == "lower-envelope":
        # largest gamma for which the power law through the first sample stays below all others
        gamma = float(np.min((y[1:] - y[0]) / (x[1:] - x[0])))
        log_c = y[0] - gamma * x[0]
        return gamma, float(math.exp(log_c)) if log_c < 700 else math.inf, residual
    raise ValidationError(f"unknown fit mode {mode!r}")


def _check_grid(L_grid) -> np.ndarray:
    L = np.asarray(L_grid, dtype=float)
    if L.ndim != 1 or len(L) < 8:
        raise DegenerateFit("need at least 8 L values")
    if np.any(np.diff(L) <= 0) or L[0] <= 0:
        raise DegenerateFit("L_grid must be positive and increasing")
    if L[-1] / L[0] < 100:
        raise DegenerateFit("L_grid must span at least two decades")
    return L


def growth_scan(spec: PotentialSpec, energies, L_grid, mode: str = "lower-envelope",
                phis: Sequence[float] | None = None) -> list[GrowthFit]:
    """fit_growth_exponent for many energies sharing one propagation pass."""
    L = _check_grid(L_grid)
    track = gram_track(spec, energies, L)
    if phis is None:
        logn = track.log_infimum()
    else:
        logn = np.min(np.stack([track.log_norm(p) for p in phis]), axis=0)
    x = np.log(L)
    out = []
    for i, E in enumerate(track.energies):
        g, c, r = _fit_loglog(x, logn[i], mode)
        out.append(GrowthFit(gamma_hat=g, C_hat=c, residual=r, mode=mode, energy=float(E)))
    return out


def fit_growth_exponent(spec: PotentialSpec, E: float, L_grid, mode: str = "lower-envelope",
                        phis: Sequence[float] | None = None) -> GrowthFit:
    """Power-law exponent gamma in ||psi||_L ~ C L**gamma over normalized solutions.

    With ``phis`` the norm at each L is the minimum over the solutions with
    initial data (sin phi, cos phi); without it, the exact infimum over all
    normalized solutions is used.
    """
    return growth_scan(spec, [E], L_grid, mode, phis)[0]
