"""Band spectra of periodic approximants (theta -> p/q).

The discriminant D(E) = tr(T(q) ... T(1)) is a degree-q polynomial whose q-1
critical values all satisfy |D| >= 2; the spectrum of the q-periodic operator
is {E : |D(E)| <= 2}.  Bands are found by scanning D on a grid, locating every
extremum, and bisecting D = +-2 on each monotone piece.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .cfrac import Convergent, RotationNumber
from .errors import EmptyBands, ResolutionTooCoarse, ValidationError
from .sturmian import approximant_window

EDGE_XTOL = 1e-13
# |D| at an interior extremum within this of 2 is a closed gap (double root)
TANGENCY_TOL = 1e-10


@dataclass(frozen=True)
class BandSet:
    bands: tuple[tuple[float, float], ...]
    approximant: Convergent
    lam: float
    beta: float

    def __post_init__(self):
        q = self.approximant.q
        if len(self.bands) > q:
            raise ValidationError(f"{len(self.bands)} bands for period {q}")
        for (l1, u1), (l2, u2) in zip(self.bands, self.bands[1:]):
            if not (l1 <= u1 < l2 <= u2):
                raise ValidationError("bands must be sorted and disjoint")

    @property
    def total_bandwidth(self) -> float:
        return float(sum(u - l for l, u in self.bands))

    def contains(self, E, tol: float = 0.0) -> np.ndarray:
        E = np.asarray(E, dtype=float)
        inside = np.zeros(E.shape, dtype=bool)
        for l, u in self.bands:
            inside |= (E >= l - tol) & (E <= u + tol)
        return inside

    def distance(self, E) -> np.ndarray:
        E = np.asarray(E, dtype=float)
        d = np.full(E.shape, np.inf)
        for l, u in self.bands:
            d = np.minimum(d, np.maximum(0.0, np.maximum(l - E, E - u)))
        return d

    def to_json(self) -> dict:
        return {"lambda": self.lam, "p": self.approximant.p, "q": self.approximant.q,
                "beta": self.beta, "bands": [[l, u] for l, u in self.bands],
                "total_bandwidth": self.total_bandwidth}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def _period(lam, convergent: Convergent, beta) -> np.ndarray:
    return approximant_window(lam, convergent, beta, periods=1).values


def discriminant(lam, convergent: Convergent, beta, E):
    """Trace of the one-period transfer product; vectorized over E."""
    V = _period(lam, convergent, beta)
    E = np.asarray(E, dtype=float)
    a, b = np.ones_like(E), np.zeros_like(E)    # first column of the running product
    c, d = np.zeros_like(E), np.ones_like(E)    # second column
    for v in V:
        t = E - v
        a, b = t * a - b, a
        c, d = t * c - d, c
    out = a + d
    return float(out) if out.ndim == 0 else out


def default_resolution(lam, q: int) -> float:
    return 1e-4 * (4 + 2 * abs(lam)) / q


def _edges_on_piece(D, lo, hi, d_lo, d_hi):
    """Sub-interval of the monotone piece [lo, hi] where |D| <= 2, or None."""
    def root(level):
        return brentq(lambda e: D(e) - level, lo, hi, xtol=EDGE_XTOL, rtol=4 * np.finfo(float).eps)
    if d_hi < d_lo:
        if d_lo < -2 or d_hi > 2:
            return None
        return (lo if d_lo <= 2 else root(2.0)), (hi if d_hi >= -2 else root(-2.0))
    if d_hi < -2 or d_lo > 2:
        return None
    return (lo if d_lo >= -2 else root(-2.0)), (hi if d_hi <= 2 else root(2.0))


def _turning_points(vals: np.ndarray) -> np.ndarray:
    """Grid indices where the discrete slope changes sign (flat steps inherit the last sign)."""
    s = np.sign(np.diff(vals))
    nz = np.nonzero(s)[0]
    if len(nz) == 0:
        return nz
    idx = np.maximum.accumulate(np.where(s != 0, np.arange(len(s)), nz[0]))
    s = s[idx]
    return np.nonzero(s[:-1] != s[1:])[0] + 1


def band_set(lam, convergent: Convergent, beta=0.0, resolution: float | None = None,
             max_refine: int = 3) -> BandSet:
    """Bands {E : |D(E)| <= 2} with edges bisected to ~1e-13.

    The scan covers [-2-|lam|, 2+|lam|].  If fewer than q-1 extrema are seen the
    grid is refined (up to ``max_refine`` times by 4x) before giving up.
    """
    q = convergent.q
    res = resolution if resolution is not None else default_resolution(lam, q)
    if res <= 0:
        raise ValidationError("resolution must be positive")
    V = _period(lam, convergent, beta)
    lo_e, hi_e = float(V.min()) - 2.0, float(V.max()) + 2.0
    span = hi_e - lo_e

    def D(e):
        return discriminant(lam, convergent, beta, e)

    for attempt in range(max_refine + 1):
        n = max(int(math.ceil(span / res)) + 1, 4 * q + 1)
        grid = np.linspace(lo_e - 1e-3 * span, hi_e + 1e-3 * span, n)
        vals = discriminant(lam, convergent, beta, grid)
        turn = _turning_points(vals)
        if len(turn) == q - 1:
            break
        res /= 4
    else:
        raise ResolutionTooCoarse(
            f"found {len(turn)} of {q - 1} discriminant extrema at resolution {res * 4}")

    cuts = [grid[0]]
    for i in turn:
        maximum = vals[i] > vals[i - 1]
        f = (lambda e: -D(e)) if maximum else D
        r = minimize_scalar(f, bounds=(grid[i - 1], grid[i + 1]), method="bounded",
                            options={"xatol": 1e-14})
        e_star, d_star = float(r.x), float(D(r.x))
        if abs(d_star) < 2 - TANGENCY_TOL:
            raise ResolutionTooCoarse(f"interior extremum with |D|={abs(d_star)} < 2 at E={e_star}")
        cuts.append(e_star)
    cuts.append(grid[-1])

    pieces = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        d_lo, d_hi = D(lo), D(hi)
        # a closed gap: the extremum value is 2 up to rounding, treat it as inside
        if abs(abs(d_lo) - 2) <= TANGENCY_TOL:
            d_lo = math.copysign(2.0, d_lo)
        if abs(abs(d_hi) - 2) <= TANGENCY_TOL:
            d_hi = math.copysign(2.0, d_hi)
        piece = _edges_on_piece(D, lo, hi, d_lo, d_hi)
        if piece is not None:
            pieces.append(piece)

    merged: list[list[float]] = []
    for l, u in pieces:
        if merged and l - merged[-1][1] <= 1e-12:
            merged[-1][1] = max(merged[-1][1], u)
        else:
            merged.append([l, u])
    return BandSet(bands=tuple((float(l), float(u)) for l, u in merged),
                   approximant=convergent, lam=float(lam), beta=float(beta))


def sample_energies(bands: BandSet, count: int) -> np.ndarray:
    """``count`` interior energies spread over the bands in proportion to length."""
    if count < 1:
        raise ValidationError("count must be >= 1")
    if not bands.bands:
        raise EmptyBands("band set is empty")
    lengths = np.array([u - l for l, u in bands.bands])
    total = lengths.sum()
    weights = lengths / total if total > 0 else np.full(len(lengths), 1 / len(lengths))
    quota = weights * count
    alloc = np.floor(quota).astype(int)
    # largest remainder, ties to the earlier band
    for i in np.argsort(-(quota - alloc), kind="stable")[: count - alloc.sum()]:
        alloc[i] += 1
    out = []
    for (l, u), k in zip(bands.bands, alloc):
        out.extend(l + (np.arange(k) + 0.5) / k * (u - l) if k else [])
    return np.array(out)


def hausdorff_distance(a: BandSet, b: BandSet) -> float:
    """Hausdorff distance between two finite unions of closed intervals."""
    def one_way(x: BandSet, y: BandSet) -> float:
        # sup over x of the distance to y is attained at band edges of x or at
        # midpoints of gaps of y lying inside x
        cand = [e for band in x.bands for e in band]
        for (_, u1), (l2, _) in zip(y.bands, y.bands[1:]):
            m = 0.5 * (u1 + l2)
            if np.any(x.contains(m)):
                cand.append(m)
        return float(np.max(y.distance(np.array(cand))))
    return max(one_way(a, b), one_way(b, a))


def approximant_bands(lam, theta: RotationNumber, index: int, beta=0.0, **kw) -> BandSet:
    return band_set(lam, theta.convergents(max(index, 1))[index], beta, **kw)


def periodic_operator_eigenvalues(lam, convergent: Convergent, beta=0.0, periods: int = 50,
                                  edge_fraction: float = 0.1, edge_weight_max: float = 0.5):
    """Dirichlet eigenvalues on ``periods * q`` sites, minus edge-localized modes.

    A mode is dropped when more than ``edge_weight_max`` of its weight sits on
    the outer ``edge_fraction`` of sites at either end.
    """
    from scipy.linalg import eigh_tridiagonal

    V = approximant_window(lam, convergent, beta, periods=periods).values
    w, vecs = eigh_tridiagonal(V, np.ones(len(V) - 1))
    k = max(1, int(edge_fraction * len(V)))
    edge = (vecs[:k] ** 2).sum(axis=0) + (vecs[-k:] ** 2).sum(axis=0)
    return w[edge <= edge_weight_max], w


def _nearest_band(D, E: float, w: float, n: int = 401, max_widen: int = 12):
    """Band of {|D| <= 2} nearest to E, searched on a window of half-width w around E."""
    for _ in range(max_widen):
        grid = np.linspace(E - w, E + w, n)
        with np.errstate(over="ignore", invalid="ignore"):
            inside = np.abs(D(grid)) <= 2
        if inside.any():
            idx = np.nonzero(inside)[0]
            i = int(idx[np.argmin(np.abs(grid[idx] - E))])
            j_lo = i
            while j_lo > 0 and inside[j_lo - 1]:
                j_lo -= 1
            j_hi = i
            while j_hi < n - 1 and inside[j_hi + 1]:
                j_hi += 1
            if j_lo == 0 or j_hi == n - 1:
                w *= 4  # band runs off the window
                continue
            f = lambda e: abs(D(e)) - 2.0
            lo = brentq(f, grid[j_lo - 1], grid[j_lo], xtol=EDGE_XTOL)
            hi = brentq(f, grid[j_hi], grid[j_hi + 1], xtol=EDGE_XTOL)
            return lo, hi
        w *= 4
    raise ResolutionTooCoarse(f"no band found near E={E}")


def refine_into_spectrum(lam, theta: RotationNumber, energies, index_from: int, index_to: int,
                         beta=0.0) -> np.ndarray:
    """Move each energy into a band of every approximant index_from+1 .. index_to in turn.

    Each step picks the band of the next approximant nearest the current point
    and moves the point into the middle half of that band, so the result lies in a band of the period
    ``q_{index_to}`` operator inherited through the whole chain.  Energies drawn
    from a low approximant frequently sit in gaps that only open at finer
    scales; after refinement they are close to the limiting spectrum.
    """
    cs = theta.convergents(index_to)
    lo_k = band_set(lam, cs[index_from], beta)
    out = []
    for E in np.atleast_1d(np.asarray(energies, dtype=float)):
        d = lo_k.distance(E)
        w = max(float(d), 1e-3)
        for (l, u) in lo_k.bands:
            if l <= E <= u:
                w = u - l
        E_cur = float(E)
        for k in range(index_from + 1, index_to + 1):
            c = cs[k]
            l, u = _nearest_band(lambda e: discriminant(lam, c, beta, e), E_cur, max(w, 1e-14))
            E_cur, w = min(max(E_cur, l + 0.25 * (u - l)), u - 0.25 * (u - l)), (u - l)
        out.append(E_cur)
    return np.array(out)
