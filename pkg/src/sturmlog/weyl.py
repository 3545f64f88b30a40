"""Half-line Weyl functions, the whole-line matrix M and its Moebius structure.

m+(z) = <d1, (H+ - z)^-1 d1> is the continued fraction

    1 / (V(1) - z - 1 / (V(2) - z - ...))

truncated with a zero tail (a Dirichlet cut); m-(z) runs over V(0), V(-1), ...
The truncated fraction is the composition of the maps w -> 1/(a_k - w), i.e.
the matrix product of [[0, 1], [-1, a_k]], which is reduced pairwise in numpy
with per-level normalization (Moebius maps are scale invariant).  Depth is
doubled until successive values agree to ``tol``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .errors import EpsilonTooSmall, InvalidZ, NearSingular, NoConvergence, ValidationError
from .sturmian import PotentialSpec, potential_array

EPS_FLOOR = 1e-6
MAX_DEPTH = 2 ** 24
CHUNK = 2 ** 16

JL_LOWER = 5 - math.sqrt(24)
JL_UPPER = 5 + math.sqrt(24)


@dataclass(frozen=True)
class HerglotzValue:
    value: complex
    at_z: complex
    depth: int = 0
    delta: float = 0.0

    def __post_init__(self):
        if self.at_z.imag > 0 and not self.value.imag > 0:
            raise NoConvergence(
                f"Herglotz property violated: Im m = {self.value.imag} at z = {self.at_z}")


@dataclass(frozen=True)
class WholeLineM:
    matrix: np.ndarray
    trace: complex


def _check_z(z: complex, eps_floor: float) -> complex:
    z = complex(z)
    if not z.imag > 0:
        raise InvalidZ(f"need Im z > 0, got {z}")
    if z.imag < eps_floor:
        raise EpsilonTooSmall(f"Im z = {z.imag} is below the floor {eps_floor}")
    return z


def _normalize(a, b, c, d):
    s = np.maximum(np.maximum(np.abs(a), np.abs(b)), np.maximum(np.abs(c), np.abs(d)))
    return a / s, b / s, c / s, d / s


def _reduce(diag: np.ndarray):
    """Normalized product M_1 M_2 ... M_n with M_k = [[0, 1], [-1, diag_k]]."""
    n = len(diag)
    a = np.zeros(n, dtype=complex)
    b = np.ones(n, dtype=complex)
    c = -np.ones(n, dtype=complex)
    d = diag.astype(complex)
    while len(a) > 1:
        if len(a) % 2:
            a, b, c, d = (np.append(x, y) for x, y in zip((a, b, c, d), (1, 0, 0, 1)))
        a1, b1, c1, d1 = a[0::2], b[0::2], c[0::2], d[0::2]
        a2, b2, c2, d2 = a[1::2], b[1::2], c[1::2], d[1::2]
        a, b, c, d = _normalize(a1 * a2 + b1 * c2, a1 * b2 + b1 * d2,
                                c1 * a2 + d1 * c2, c1 * b2 + d1 * d2)
    return complex(a[0]), complex(b[0]), complex(c[0]), complex(d[0])


def _mul(P, Q):
    a1, b1, c1, d1 = P
    a2, b2, c2, d2 = Q
    a, b, c, d = a1 * a2 + b1 * c2, a1 * b2 + b1 * d2, c1 * a2 + d1 * c2, c1 * b2 + d1 * d2
    s = max(abs(a), abs(b), abs(c), abs(d))
    return a / s, b / s, c / s, d / s


def _segment_product(spec: PotentialSpec, z: complex, start: int, stop: int, side: int):
    """Product over the sites side*k for k in [start, stop) (plus side: k = site)."""
    P = (1 + 0j, 0j, 0j, 1 + 0j)
    for s in range(start, stop, CHUNK):
        e = min(s + CHUNK, stop)
        if side > 0:
            V = potential_array(spec, s, e - 1)
        else:
            V = potential_array(spec, -(e - 1), -s)[::-1]
        P = _mul(P, _reduce(V - z))
    return P


def _weyl(spec: PotentialSpec, z: complex, depth: int, tol: float | None, side: int,
          eps_floor: float, max_depth: int) -> HerglotzValue:
    z = _check_z(z, eps_floor)
    if depth < 1:
        raise ValidationError("depth must be >= 1")
    first = 1 if side > 0 else 0
    P = _segment_product(spec, z, first, first + depth, side)
    m = P[1] / P[3]
    if tol is None:
        return HerglotzValue(m, z, depth)
    D = depth
    delta = math.inf
    while 2 * D <= max_depth:
        P = _mul(P, _segment_product(spec, z, first + D, first + 2 * D, side))
        m_new = P[1] / P[3]
        delta = abs(m_new - m)
        m, D = m_new, 2 * D
        if delta < tol:
            return HerglotzValue(m, z, D, delta)
    raise NoConvergence(f"m-function at z={z} not converged to {tol} by depth {D}",
                        last_delta=delta, depth=D)


def m_plus(spec: PotentialSpec, z: complex, depth: int = 64, tol: float | None = 1e-12,
           eps_floor: float = EPS_FLOOR, max_depth: int = MAX_DEPTH) -> HerglotzValue:
    """<d1, (H+ - z)^-1 d1> on the half line {1, 2, ...}.

    With ``tol=None`` the fraction is evaluated once at exactly ``depth`` sites
    (the Dirichlet-truncated resolvent); otherwise depth doubles until two
    successive values differ by less than ``tol``.
    """
    return _weyl(spec, z, depth, tol, +1, eps_floor, max_depth)


def m_minus(spec: PotentialSpec, z: complex, depth: int = 64, tol: float | None = 1e-12,
            eps_floor: float = EPS_FLOOR, max_depth: int = MAX_DEPTH) -> HerglotzValue:
    """<d0, (H- - z)^-1 d0> on the half line {0, -1, -2, ...}."""
    return _weyl(spec, z, depth, tol, -1, eps_floor, max_depth)


def whole_line(mp: HerglotzValue, mm: HerglotzValue) -> WholeLineM:
    """M = [[m-, -m+ m-], [-m+ m-, m+]] / (1 - m+ m-) and its trace."""
    if mp.at_z != mm.at_z:
        raise ValidationError("m+ and m- must be evaluated at the same z")
    p, n = mp.value, mm.value
    den = 1 - p * n
    if abs(den) <= 1e-12:
        raise NearSingular(f"|1 - m+ m-| = {abs(den)}")
    off = -p * n / den
    matrix = np.array([[n / den, off], [off, p / den]])
    return WholeLineM(matrix=matrix, trace=(p + n) / den)


def m_phi(mp: HerglotzValue | complex, phi: float) -> complex:
    """(sin phi + cos phi m+) / (cos phi - sin phi m+)."""
    m = mp.value if isinstance(mp, HerglotzValue) else complex(mp)
    s, c = math.sin(phi), math.cos(phi)
    return (s + c * m) / (c - s * m)


def cayley(m: complex) -> complex:
    """mu = (m - i) / (m + i); maps the upper half-plane onto the unit disk."""
    return (m - 1j) / (m + 1j)


def moebius_sup(mp: HerglotzValue | complex) -> float:
    """sup over phi of |m_phi| in closed form, (1 + |mu|) / (1 - |mu|)."""
    m = mp.value if isinstance(mp, HerglotzValue) else complex(mp)
    if not m.imag > 0:
        raise ValidationError("need Im m+ > 0")
    r = abs(cayley(m))
    return (1 + r) / (1 - r)


def verify_moebius_identity(mp, mm) -> tuple[complex, complex, float]:
    """Both sides of (m+ + m-)/(1 - m+ m-) = i (1 + mu w)/(1 - mu w).

    mu = (m+ - i)/(m+ + i), w = (i - m-)/(i + m-).
    """
    p = mp.value if isinstance(mp, HerglotzValue) else complex(mp)
    n = mm.value if isinstance(mm, HerglotzValue) else complex(mm)
    lhs = (p + n) / (1 - p * n)
    mu = cayley(p)
    w = (1j - n) / (1j + n)
    rhs = 1j * (1 + mu * w) / (1 - mu * w)
    return lhs, rhs, abs(lhs - rhs)


def lambda_interval_bound(trace_value: complex, E: float, eps: float) -> float:
    """2 eps Im m(E + i eps), an upper bound for the mass of [E - eps, E + eps]."""
    if not eps > 0:
        raise ValidationError("eps must be positive")
    return 2.0 * eps * complex(trace_value).imag


# ---------------------------------------------------------------------------
# Truncated-resolvent oracles (banded LAPACK solves, independent of the above)

def _resolvent_column(diag: np.ndarray, z: complex, k: int) -> np.ndarray:
    n = len(diag)
    ab = np.zeros((3, n), dtype=complex)
    ab[0, 1:] = 1.0
    ab[1] = diag - z
    ab[2, :-1] = 1.0
    rhs = np.zeros(n, dtype=complex)
    rhs[k] = 1.0
    return solve_banded((1, 1), ab, rhs)


def truncated_m_plus(spec: PotentialSpec, z: complex, size: int) -> complex:
    """Solve (H+ - z) u = d1 on sites 1..size with a Dirichlet cut; return u(1)."""
    return complex(_resolvent_column(np.asarray(potential_array(spec, 1, size)), z, 0)[0])


def truncated_m_minus(spec: PotentialSpec, z: complex, size: int) -> complex:
    """Same on sites 0, -1, ..., -(size-1); return u(0)."""
    V = np.asarray(potential_array(spec, -(size - 1), 0))
    return complex(_resolvent_column(V, z, size - 1)[size - 1])


def truncated_trace(spec: PotentialSpec, z: complex, n_left: int, n_right: int) -> complex:
    """<d0,(H-z)^-1 d0> + <d1,(H-z)^-1 d1> on sites [-n_left, n_right]."""
    V = np.asarray(potential_array(spec, -n_left, n_right))
    i0 = n_left
    g00 = _resolvent_column(V, z, i0)[i0]
    g11 = _resolvent_column(V, z, i0 + 1)[i0 + 1]
    return complex(g00 + g11)


# ---------------------------------------------------------------------------

SCAN_COLUMNS = ["E", "eps", "re_m_plus", "im_m_plus", "re_m_minus", "im_m_minus",
                "re_trace", "im_trace", "sup_phi", "lambda_bound"]


def mfunction_scan(spec: PotentialSpec, energies, eps_list, tol: float = 1e-12,
                   depth: int = 64) -> list[dict]:
    rows = []
    for E in energies:
        for eps in eps_list:
            z = complex(E, eps)
            mp = m_plus(spec, z, depth=depth, tol=tol)
            mm = m_minus(spec, z, depth=depth, tol=tol)
            tr = whole_line(mp, mm).trace
            rows.append({"E": float(E), "eps": float(eps),
                         "re_m_plus": mp.value.real, "im_m_plus": mp.value.imag,
                         "re_m_minus": mm.value.real, "im_m_minus": mm.value.imag,
                         "re_trace": tr.real, "im_trace": tr.imag,
                         "sup_phi": moebius_sup(mp),
                         "lambda_bound": lambda_interval_bound(tr, E, eps)})
    return rows


def write_scan_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SCAN_COLUMNS)
        for r in rows:
            w.writerow([repr(float(r[c])) for c in SCAN_COLUMNS])
