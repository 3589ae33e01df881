"""Finite signed measures on [-r, 0]: atoms + piecewise-polynomial density,
with an optional sampled-density fallback for analytic densities.

All integral functionals the rest of the package consumes live here:
total variation, tail masses a([-t, 0]) and the exponential moments
M_j(lambda) = integral of u^j e^(lambda u) a(du).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

# |lambda|*r below this uses the Taylor-series branch of the polynomial
# moments (the 1/lambda recursions are singular at 0).
SERIES_SWITCH = 1e-4

# Minimum grid size accepted for sampled densities.
MIN_SAMPLED_GRID = 33


class MeasureError(ValueError):
    """Invalid measure descriptor or out-of-domain argument."""


@dataclass(frozen=True)
class DensityPiece:
    lo: float
    hi: float
    coeffs: tuple[float, ...]  # c0 + c1*u + c2*u^2 + ... on [lo, hi]


@dataclass(frozen=True)
class SignedMeasure:
    """Finite signed measure on [-r, 0].

    atoms: ((location, weight), ...) with locations in [-r, 0], weights != 0.
    density_pieces: piecewise-polynomial absolutely-continuous part, pairwise
        disjoint interiors.
    sampled_grid/sampled_values: uniform grid on [-r, 0] with density values,
        integrated by composite Simpson quadrature.  Mutually exclusive with
        density_pieces.
    """

    r: float
    atoms: tuple[tuple[float, float], ...] = ()
    density_pieces: tuple[DensityPiece, ...] = ()
    sampled_grid: tuple[float, ...] = field(default=(), repr=False)
    sampled_values: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if not (self.r > 0 and math.isfinite(self.r)):
            raise MeasureError(f"delay horizon r must be positive, got {self.r}")
        for u, w in self.atoms:
            if not (-self.r - 1e-12 <= u <= 1e-12):
                raise MeasureError(f"atom location {u} outside [-r, 0]")
            if w == 0.0:
                raise MeasureError("atom weights must be nonzero")
        pieces = sorted(self.density_pieces, key=lambda p: p.lo)
        for p in pieces:
            if not (p.lo < p.hi):
                raise MeasureError(f"degenerate density piece [{p.lo}, {p.hi}]")
            if not (-self.r - 1e-12 <= p.lo and p.hi <= 1e-12):
                raise MeasureError(f"density piece [{p.lo}, {p.hi}] outside [-r, 0]")
        for left, right in zip(pieces, pieces[1:]):
            if right.lo < left.hi - 1e-12:
                raise MeasureError("density pieces must have disjoint interiors")
        if self.density_pieces and self.sampled_values:
            raise MeasureError("at most one of density_pieces / sampled density")
        if self.sampled_values:
            g = np.asarray(self.sampled_grid)
            if g.size != len(self.sampled_values):
                raise MeasureError("sampled grid and values length mismatch")
            if g.size < MIN_SAMPLED_GRID:
                raise MeasureError(f"sampled grid needs >= {MIN_SAMPLED_GRID} points")
            if abs(g[0] + self.r) > 1e-9 * self.r or abs(g[-1]) > 1e-9 * self.r:
                raise MeasureError("sampled grid must cover [-r, 0]")
            steps = np.diff(g)
            if np.any(np.abs(steps - steps[0]) > 1e-9 * abs(steps[0])):
                raise MeasureError("sampled grid must be uniform")
        if not self.atoms and total_variation(self) == 0.0:
            raise MeasureError("measure must not be identically zero")

    # -- constructors ------------------------------------------------------

    @staticmethod
    def point_masses(r: float, *atoms: tuple[float, float]) -> "SignedMeasure":
        return SignedMeasure(r=r, atoms=tuple(atoms))

    @staticmethod
    def polynomial_density(r: float, pieces) -> "SignedMeasure":
        return SignedMeasure(
            r=r, density_pieces=tuple(DensityPiece(lo, hi, tuple(c)) for lo, hi, c in pieces)
        )

    @staticmethod
    def sampled_density(r: float, values) -> "SignedMeasure":
        values = np.asarray(values, dtype=float)
        grid = np.linspace(-r, 0.0, values.size)
        return SignedMeasure(
            r=r, sampled_grid=tuple(grid.tolist()), sampled_values=tuple(values.tolist())
        )

    # -- JSON descriptor ---------------------------------------------------

    @staticmethod
    def from_dict(d: dict) -> "SignedMeasure":
        try:
            r = float(d["r"])
        except KeyError as exc:
            raise MeasureError("measure descriptor needs field 'r'") from exc
        atoms = tuple((float(a["u"]), float(a["w"])) for a in d.get("atoms", []))
        pieces = tuple(
            DensityPiece(float(p["lo"]), float(p["hi"]), tuple(float(c) for c in p["coeffs"]))
            for p in d.get("density", [])
        )
        sampled = d.get("sampled")
        if sampled:
            vals = np.asarray(sampled["expr_values"], dtype=float)
            if "n" in sampled and int(sampled["n"]) != vals.size:
                raise MeasureError("sampled.n disagrees with len(expr_values)")
            grid = tuple(np.linspace(-r, 0.0, vals.size).tolist())
            return SignedMeasure(r, atoms, pieces, grid, tuple(vals.tolist()))
        return SignedMeasure(r, atoms, pieces)

    def to_dict(self) -> dict:
        d: dict = {"r": self.r}
        if self.atoms:
            d["atoms"] = [{"u": u, "w": w} for u, w in self.atoms]
        if self.density_pieces:
            d["density"] = [
                {"lo": p.lo, "hi": p.hi, "coeffs": list(p.coeffs)} for p in self.density_pieces
            ]
        if self.sampled_values:
            d["sampled"] = {"n": len(self.sampled_values), "expr_values": list(self.sampled_values)}
        return d

    @staticmethod
    def from_json(path) -> "SignedMeasure":
        with open(path) as fh:
            return SignedMeasure.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# polynomial helpers (coefficients are ascending powers of u)


def _poly_eval(coeffs, u):
    out = np.zeros_like(np.asarray(u, dtype=float))
    for c in reversed(coeffs):
        out = out * u + c
    return out


def _poly_antideriv(coeffs):
    return [0.0] + [c / (k + 1) for k, c in enumerate(coeffs)]


def _poly_defint(coeffs, lo, hi):
    anti = _poly_antideriv(coeffs)
    return float(_poly_eval(anti, hi) - _poly_eval(anti, lo))


def _poly_abs_defint(coeffs, lo, hi):
    """Integral of |p(u)| over [lo, hi]: split at the real roots inside."""
    arr = np.asarray(coeffs, dtype=float)
    if not np.any(arr):
        return 0.0
    pts = [lo, hi]
    if arr.size > 1:
        roots = np.roots(arr[::-1])
        for z in roots:
            if abs(z.imag) < 1e-12 and lo < z.real < hi:
                pts.append(float(z.real))
    pts = sorted(set(pts))
    return sum(abs(_poly_defint(coeffs, a, b)) for a, b in zip(pts, pts[1:]))


# ---------------------------------------------------------------------------
# exponential-moment kernels: I_k = integral over [lo, hi] of u^k e^(lam u) du
#
# The parts recursion B_k = k I_{k-1} + lam I_k (B_k the boundary term) is
# only used upward where it is relative-error stable, i.e. when the per-step
# factor k / (|lam| max|u|) stays <= 1/2.  Small |lam| uses the Taylor series
# in lam (no 1/lam anywhere); the middle band uses Gauss-Legendre quadrature,
# whose node count stays below ~150 there.


def _ik_series(lam: complex, kmax: int, lo: float, hi: float) -> np.ndarray:
    ks = np.arange(kmax + 1)
    out = np.zeros(kmax + 1, dtype=complex)
    lam_pow = 1.0 + 0.0j
    fact = 1.0
    mx = np.zeros(kmax + 1)
    for s in range(120):
        powers = ks + s + 1
        term = (lam_pow / fact) * (hi**powers - lo**powers) / powers
        out += term
        mx = np.maximum(mx, np.abs(out))
        if s >= 2 and np.all(np.abs(term) <= 1e-16 * mx + 1e-300):
            break
        lam_pow *= lam
        fact *= s + 1
    return out


def _ik_upward(lam: complex, kmax: int, lo: float, hi: float) -> np.ndarray:
    elam_hi, elam_lo = np.exp(lam * hi), np.exp(lam * lo)
    out = np.empty(kmax + 1, dtype=complex)
    out[0] = (elam_hi - elam_lo) / lam
    for k in range(1, kmax + 1):
        bk = hi**k * elam_hi - lo**k * elam_lo
        out[k] = (bk - k * out[k - 1]) / lam
    return out


def _leggauss_cached(n: int, _cache={}) -> tuple[np.ndarray, np.ndarray]:
    if n not in _cache:
        _cache[n] = np.polynomial.legendre.leggauss(n)
    return _cache[n]


def _ik_gauss(lam: complex, kmax: int, lo: float, hi: float) -> np.ndarray:
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    n = kmax + 20 + int(math.ceil(1.6 * abs(lam) * half))
    t, w = _leggauss_cached(min(n, 400))
    x = mid + half * t
    weighted = np.exp(lam * x) * (w * half)
    out = np.empty(kmax + 1, dtype=complex)
    pw = np.ones_like(x)
    for k in range(kmax + 1):
        out[k] = np.sum(pw * weighted)
        pw = pw * x
    return out


def _exp_kernel_moments(lam: complex, kmax: int, lo: float, hi: float) -> np.ndarray:
    """I_0..I_kmax over [lo, hi] in a numerically safe branch."""
    u_scale = max(abs(lo), abs(hi))
    z = abs(lam) * u_scale
    if z < SERIES_SWITCH:
        return _ik_series(lam, kmax, lo, hi)
    if z >= 2.0 * (kmax + 1):
        return _ik_upward(lam, kmax, lo, hi)
    return _ik_gauss(lam, kmax, lo, hi)


# ---------------------------------------------------------------------------
# public operations


def total_variation(a: SignedMeasure) -> float:
    """Total variation |a|([-r, 0])."""
    tv = sum(abs(w) for _, w in a.atoms)
    for p in a.density_pieces:
        tv += _poly_abs_defint(p.coeffs, p.lo, p.hi)
    if a.sampled_values:
        tv += float(simpson(np.abs(a.sampled_values), x=np.asarray(a.sampled_grid)))
    return float(tv)


def tail_mass(a: SignedMeasure, t: float) -> float:
    """a([-t, 0]) with both endpoints closed."""
    if not (-1e-12 <= t <= a.r + 1e-12):
        raise MeasureError(f"tail_mass needs t in [0, r], got {t}")
    t = min(max(t, 0.0), a.r)
    total = sum(w for u, w in a.atoms if u >= -t)
    for p in a.density_pieces:
        lo = max(p.lo, -t)
        if lo < p.hi:
            total += _poly_defint(p.coeffs, lo, p.hi)
    if a.sampled_values:
        grid = np.asarray(a.sampled_grid)
        vals = np.asarray(a.sampled_values)
        if t >= a.r - 1e-12:
            total += float(simpson(vals, x=grid))
        else:
            cum = cumulative_simpson(vals, x=grid, initial=0.0)
            total += float(cum[-1] - np.interp(-t, grid, cum))
    return float(total)


def exp_moment(a: SignedMeasure, lam: complex, j: int = 0) -> complex:
    """M_j(lambda) = integral of u^j e^(lambda u) a(du)."""
    if j < 0 or j > 16 + 8:
        raise MeasureError(f"moment order {j} out of supported range")
    lam = complex(lam)
    total = 0.0 + 0.0j
    for u, w in a.atoms:
        total += w * (u**j if j else 1.0) * np.exp(lam * u)
    for p in a.density_pieces:
        kmax = j + len(p.coeffs) - 1
        iks = _exp_kernel_moments(lam, kmax, p.lo, p.hi)
        for i, c in enumerate(p.coeffs):
            if c:
                total += c * iks[i + j]
    if a.sampled_values:
        grid = np.asarray(a.sampled_grid)
        vals = np.asarray(a.sampled_values)
        integrand = vals * (grid**j if j else 1.0) * np.exp(lam * grid)
        total += complex(simpson(integrand, x=grid))
    return complex(total)


def exp_moments_many(a: SignedMeasure, lams: np.ndarray, j: int = 0) -> np.ndarray:
    """Vectorized M_j over an array of lambda values (used on contours)."""
    lams = np.asarray(lams, dtype=complex)
    out = np.zeros(lams.shape, dtype=complex)
    for u, w in a.atoms:
        out += w * (u**j if j else 1.0) * np.exp(lams * u)
    if a.density_pieces:
        flat = lams.ravel()
        vals = np.array([exp_moment_pieces_only(a, z, j) for z in flat])
        out += vals.reshape(lams.shape)
    if a.sampled_values:
        grid = np.asarray(a.sampled_grid)
        vals = np.asarray(a.sampled_values) * (grid**j if j else 1.0)
        flat = lams.ravel()
        chunk = max(1, int(2e6 // max(grid.size, 1)))
        acc = np.empty(flat.size, dtype=complex)
        for s in range(0, flat.size, chunk):
            block = flat[s : s + chunk]
            integrand = vals[None, :] * np.exp(block[:, None] * grid[None, :])
            acc[s : s + chunk] = simpson(integrand, x=grid, axis=1)
        out += acc.reshape(lams.shape)
    return out


def exp_moments_01_many(a: SignedMeasure, lams: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(M_0, M_1) over an array of lambda values, sharing the exponential
    evaluations (hot path of the contour winding counts)."""
    lams = np.asarray(lams, dtype=complex)
    m0 = np.zeros(lams.shape, dtype=complex)
    m1 = np.zeros(lams.shape, dtype=complex)
    for u, w in a.atoms:
        e = w * np.exp(lams * u)
        m0 += e
        m1 += u * e
    if a.density_pieces:
        flat = lams.ravel()
        v0 = np.array([exp_moment_pieces_only(a, z, 0) for z in flat])
        v1 = np.array([exp_moment_pieces_only(a, z, 1) for z in flat])
        m0 += v0.reshape(lams.shape)
        m1 += v1.reshape(lams.shape)
    if a.sampled_values:
        grid = np.asarray(a.sampled_grid)
        vals = np.asarray(a.sampled_values)
        flat = lams.ravel()
        chunk = max(1, int(2e6 // max(grid.size, 1)))
        acc0 = np.empty(flat.size, dtype=complex)
        acc1 = np.empty(flat.size, dtype=complex)
        for s in range(0, flat.size, chunk):
            block = flat[s : s + chunk]
            expm = np.exp(block[:, None] * grid[None, :])
            acc0[s : s + chunk] = simpson(vals[None, :] * expm, x=grid, axis=1)
            acc1[s : s + chunk] = simpson((vals * grid)[None, :] * expm, x=grid, axis=1)
        m0 += acc0.reshape(lams.shape)
        m1 += acc1.reshape(lams.shape)
    return m0, m1


def exp_moment_pieces_only(a: SignedMeasure, lam: complex, j: int) -> complex:
    total = 0.0 + 0.0j
    for p in a.density_pieces:
        kmax = j + len(p.coeffs) - 1
        iks = _exp_kernel_moments(complex(lam), kmax, p.lo, p.hi)
        for i, c in enumerate(p.coeffs):
            if c:
                total += c * iks[i + j]
    return total


def density_on_grid(a: SignedMeasure, grid: np.ndarray) -> np.ndarray:
    """Density values at the given nodes (piecewise polynomial evaluated
    exactly; sampled densities interpolated linearly)."""
    out = np.zeros(grid.size)
    for p in a.density_pieces:
        mask = (grid >= p.lo - 1e-12) & (grid <= p.hi + 1e-12)
        out[mask] = _poly_eval(p.coeffs, grid[mask])
    if a.sampled_values:
        out += np.interp(grid, np.asarray(a.sampled_grid), np.asarray(a.sampled_values))
    return out


def has_density(a: SignedMeasure) -> bool:
    return bool(a.density_pieces) or bool(a.sampled_values)
