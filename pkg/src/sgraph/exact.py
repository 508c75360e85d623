"""Exact scaled graphs of normal stable LTI systems.

The scaled graph equals the hyperbolic convex hull of the Nyquist spectrum.
The Beltrami-Klein map sends hyperbolic geodesics to straight chords of the
unit disk, so the hull is an ordinary planar convex hull in that picture.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelError, StateSpace

POLE_EPS = 1e-9
HULL_EPS = 1e-12


class ExactError(ValueError):
    pass


def bk_map(z):
    """``(conj(z) - j)(z - j) / (1 + |z|^2)``, mapping the plane into the closed unit disk."""
    z = np.asarray(z, dtype=complex)
    return (np.conj(z) - 1j) * (z - 1j) / (1.0 + np.abs(z) ** 2)


def bk_inverse(w):
    """Both preimages ``(Im w +- j sqrt(1 - |w|^2)) / (Re w - 1)``, upper branch first."""
    w = np.asarray(w, dtype=complex)
    if np.any(np.abs(w - 1.0) < POLE_EPS):
        raise ExactError("w = 1 is the image of the point at infinity")
    root = np.sqrt(np.clip(1.0 - np.abs(w) ** 2, 0.0, None))
    den = w.real - 1.0
    lower = (w.imag + 1j * root) / den  # den < 0 puts this branch below the axis
    upper = (w.imag - 1j * root) / den
    return upper, lower


@dataclass(frozen=True)
class SpectrumCloud:
    points: np.ndarray
    freq_grid: np.ndarray


def default_freq_grid(sys: StateSpace, count: int = 1024) -> np.ndarray:
    if sys.m == 0:
        return np.logspace(-3, 3, count)
    mags = np.abs(np.linalg.eigvals(sys.A))
    lo = max(mags.min(), 1e-12)
    return np.logspace(np.log10(1e-3 * lo), np.log10(1e3 * mags.max()), count)


def _responses(sys: StateSpace, omega) -> np.ndarray:
    if sys.m == 0:
        return np.broadcast_to(sys.D, (len(omega),) + sys.D.shape).astype(complex)
    return sys.freqresp(omega)


def spectrum(sys: StateSpace, freq_grid=None) -> SpectrumCloud:
    """Eigenvalues of ``H(j w)`` over ``+-freq_grid`` plus the DC and high-frequency limits."""
    sys.require_hurwitz()
    w = default_freq_grid(sys) if freq_grid is None else np.asarray(freq_grid, float)
    if w.size == 0:
        raise ValueError("empty frequency grid")
    H = _responses(sys, np.abs(w))
    eig = np.linalg.eigvals(H).ravel()
    dc = np.linalg.eigvals(_responses(sys, [0.0])[0])
    inf = np.linalg.eigvals(sys.D.astype(complex)) if sys.n else np.zeros(0)
    pts = np.concatenate([eig, np.conj(eig), dc, inf])
    return SpectrumCloud(pts, w)


def is_normal(sys: StateSpace, freq_grid=None, tol: float | None = None) -> bool:
    """Whether ``H(jw)`` commutes with its conjugate transpose on the grid."""
    if sys.n == 1:
        return True
    w = default_freq_grid(sys) if freq_grid is None else np.asarray(freq_grid, float)
    H = _responses(sys, np.concatenate([[0.0], w]))
    Hs = np.conj(np.transpose(H, (0, 2, 1)))
    comm = np.linalg.norm(Hs @ H - H @ Hs, axis=(1, 2))
    limit = 1e-8 * (1.0 + np.linalg.norm(H, axis=(1, 2))) if tol is None else tol
    return bool(np.all(comm <= limit))


def convex_hull(points) -> np.ndarray:
    """Counter-clockwise hull vertices (monotone chain), collinear points dropped."""
    pts = np.unique(np.round(np.asarray(points, dtype=complex).ravel(), 15))
    if pts.size <= 2:
        return pts
    order = np.lexsort((pts.imag, pts.real))
    pts = pts[order]

    def cross(o, a, b):
        return (a.real - o.real) * (b.imag - o.imag) - (a.imag - o.imag) * (b.real - o.real)

    def chain(seq):
        out = []
        for p in seq:
            while len(out) >= 2 and cross(out[-2], out[-1], p) <= HULL_EPS:
                out.pop()
            out.append(p)
        return out

    lower, upper = chain(pts), chain(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    if hull.size < 2:
        return pts[[0, -1]]
    return hull


def _in_hull(w: np.ndarray, hull: np.ndarray, eps: float) -> np.ndarray:
    if hull.size == 1:
        return np.abs(w - hull[0]) <= eps
    if hull.size == 2:
        a, b = hull
        d = b - a
        t = np.clip(((w - a) * np.conj(d)).real / abs(d) ** 2, 0.0, 1.0)
        return np.abs(w - (a + t * d)) <= eps
    inside = np.ones(w.shape, bool)
    for a, b in zip(hull, np.roll(hull, -1)):
        d = b - a
        cr = d.real * (w.imag - a.imag) - d.imag * (w.real - a.real)
        inside &= cr >= -eps * abs(d)
    return inside


@dataclass(frozen=True)
class ExactSG:
    hull: np.ndarray        # CCW vertices in the unit disk
    boundary: tuple         # complex polylines in the plane
    spectrum: SpectrumCloud
    eps: float = 1e-9

    @property
    def is_singleton(self) -> bool:
        return self.hull.size == 1

    def contains(self, z):
        z = np.asarray(z, dtype=complex)
        return _in_hull(bk_map(z), self.hull, self.eps)

    def boundary_points(self) -> np.ndarray:
        return np.concatenate(self.boundary) if self.boundary else np.zeros(0, complex)


def _edge_params(a: complex, b: complex, per_edge: int, spacing: float) -> np.ndarray:
    """Edge parameters refined until consecutive preimages are ``spacing`` apart."""
    t = np.linspace(0.0, 1.0, per_edge + 1)
    for _ in range(30):
        up, low = bk_inverse(a + t * (b - a))
        gap = np.maximum(np.abs(np.diff(up)), np.abs(np.diff(low)))
        coarse = gap > spacing
        if not coarse.any():
            break
        mids = 0.5 * (t[:-1] + t[1:])[coarse]
        t = np.sort(np.concatenate([t, mids]))
    return t[:-1]


def _preimage_boundary(hull: np.ndarray, per_edge: int = 64, spacing: float = 5e-4) -> tuple:
    if hull.size == 1:
        up, _ = bk_inverse(hull)
        return (up,)
    edges = list(zip(hull, np.roll(hull, -1)))
    scale = max(1.0, float(np.max(np.abs(bk_inverse(hull)[0]))))
    ws = np.concatenate([a + _edge_params(a, b, per_edge, spacing * scale) * (b - a)
                         for a, b in edges] + [hull[:1]])
    up, low = bk_inverse(ws)
    return (up, low)


def exact_sg(sys: StateSpace, freq_grid=None, eps: float = 1e-9) -> ExactSG:
    """Exact scaled graph of a normal stable LTI system."""
    try:
        sys.require_hurwitz()
    except ModelError as exc:
        raise ExactError(str(exc)) from None
    if not is_normal(sys, freq_grid):
        raise ExactError("system is not normal; the hull construction is not exact")
    spec = spectrum(sys, freq_grid)
    hull = convex_hull(bk_map(spec.points))
    if np.any(np.abs(hull - 1.0) < POLE_EPS):
        raise ExactError("unbounded scaled graph: hull reaches the image of infinity")
    return ExactSG(hull, _preimage_boundary(hull), spec, eps)
