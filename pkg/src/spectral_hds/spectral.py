"""Minutia-pair spectral functions on a fixed (q, R) grid.

Two functions are evaluated over all pairs a < b of a minutia set::

    xtheta(q, R) = sum exp(i q phi_ab) g(R - R_ab) exp(i (theta_b - theta_a))
    xbeta(q, R)  = sum exp(i (q - 2) phi_ab) g(R - R_ab) exp(i (theta_b + theta_a))

with g a Gaussian window of width ``sigma`` and ``phi_ab`` the full-plane
angle of the vector x_a - x_b.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, ShapeError, UnsupportedKindError
from .minutiae import MinutiaSet

KINDS = ("xtheta", "xbeta")

DEFAULT_R = tuple(float(r) for r in range(16, 131, 6))
DEFAULT_Q = tuple(range(1, 17))
SIGMA_HIGH_QUALITY = 2.3
SIGMA_LOW_QUALITY = 3.2


@dataclass(frozen=True)
class SpectralGrid:
    r_values: tuple[float, ...] = DEFAULT_R
    q_values: tuple[int, ...] = DEFAULT_Q
    sigma: float = SIGMA_HIGH_QUALITY

    def __post_init__(self):
        r = tuple(float(v) for v in self.r_values)
        q = tuple(int(v) for v in self.q_values)
        if not r or not q:
            raise ShapeError("grid needs at least one radius and one harmonic")
        if r[0] <= 0 or any(b <= a for a, b in zip(r, r[1:])):
            raise ShapeError("r_values must be positive and strictly increasing")
        if any(b <= a for a, b in zip(q, q[1:])):
            raise ShapeError("q_values must be strictly increasing")
        if not self.sigma > 0:
            raise ShapeError("sigma must be positive")
        object.__setattr__(self, "r_values", r)
        object.__setattr__(self, "q_values", q)
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.q_values), len(self.r_values)

    @property
    def size(self) -> int:
        return len(self.q_values) * len(self.r_values)

    def to_dict(self) -> dict:
        return {"r_values": list(self.r_values), "q_values": list(self.q_values), "sigma": self.sigma}

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True, eq=False)
class SpectralMap:
    """Complex values of one spectral function, shape ``(len(q), len(R))``."""

    grid: SpectralGrid
    values: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UnsupportedKindError(f"unknown kind {self.kind!r}")
        v = np.asarray(self.values, dtype=np.complex128)
        if v.size != self.grid.size:
            raise ShapeError(f"{v.size} values for a grid of {self.grid.size} points")
        v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise DegenerateError("spectral map has non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def components(self) -> np.ndarray:
        """Real vector of all real parts (grid-major) followed by all imaginary parts."""
        flat = self.values.ravel()
        return np.concatenate([flat.real, flat.imag])


def _pairs(mset: MinutiaSet):
    x, y, theta = mset.arrays
    if len(x) < 2:
        raise DegenerateError("spectral functions need at least two minutiae")
    a, b = np.triu_indices(len(x), k=1)
    dx, dy = x[a] - x[b], y[a] - y[b]
    r_ab = np.hypot(dx, dy)
    phi_ab = np.arctan2(dy, dx)
    return a, b, r_ab, phi_ab, theta


def _evaluate(q_exponent: np.ndarray, phi_ab, r_ab, pair_phase, grid: SpectralGrid) -> np.ndarray:
    # (nq, P) @ (P, nR); the matmul is the pair sum
    angular = np.exp(1j * np.outer(q_exponent, phi_ab)) * np.exp(1j * pair_phase)[None, :]
    r = np.asarray(grid.r_values)
    radial = np.exp(-((r[None, :] - r_ab[:, None]) ** 2) / (2.0 * grid.sigma ** 2))
    return angular @ radial


def spectral_xtheta(mset: MinutiaSet, grid: SpectralGrid) -> SpectralMap:
    a, b, r_ab, phi_ab, theta = _pairs(mset)
    q = np.asarray(grid.q_values, dtype=np.float64)
    values = _evaluate(q, phi_ab, r_ab, theta[b] - theta[a], grid)
    return SpectralMap(grid, values, "xtheta")


def spectral_xbeta(mset: MinutiaSet, grid: SpectralGrid) -> SpectralMap:
    a, b, r_ab, phi_ab, theta = _pairs(mset)
    q = np.asarray(grid.q_values, dtype=np.float64) - 2.0
    values = _evaluate(q, phi_ab, r_ab, theta[b] + theta[a], grid)
    return SpectralMap(grid, values, "xbeta")


SPECTRAL_FUNCTIONS = {"xtheta": spectral_xtheta, "xbeta": spectral_xbeta}


def spectral(mset: MinutiaSet, grid: SpectralGrid, kind: str) -> SpectralMap:
    try:
        fn = SPECTRAL_FUNCTIONS[kind]
    except KeyError:
        raise UnsupportedKindError(f"unknown kind {kind!r}") from None
    return fn(mset, grid)


def rotate_map(smap: SpectralMap, delta: float) -> SpectralMap:
    """Apply the image-rotation law ``M(q, R) -> exp(i q delta) M(q, R)``.

    Only defined for ``xtheta``.
    """
    if smap.kind != "xtheta":
        raise UnsupportedKindError("rotation law is only established for xtheta")
    q = np.asarray(smap.grid.q_values, dtype=np.float64)
    return SpectralMap(smap.grid, smap.values * np.exp(1j * q * delta)[:, None], smap.kind)


def normalize(smap: SpectralMap) -> SpectralMap:
    """Shift and scale so that real and imaginary parts, pooled, have mean 0 and variance 1."""
    if smap.grid.size < 2:
        raise DegenerateError("normalization needs at least two grid points")
    pooled = np.concatenate([smap.values.real.ravel(), smap.values.imag.ravel()])
    mu = pooled.mean()
    sd = np.sqrt(np.mean((pooled - mu) ** 2))
    if not sd > 0:
        raise DegenerateError("map has zero variance")
    out = ((smap.values.real - mu) + 1j * (smap.values.imag - mu)) / sd
    return SpectralMap(smap.grid, out, smap.kind)


def similarity(a: SpectralMap, b: SpectralMap) -> float:
    """Normalized correlation: mean over grid points of ``Re(a * conj(b))``."""
    if a.grid != b.grid or a.values.shape != b.values.shape:
        raise ShapeError("maps are on different grids")
    if a.kind != b.kind:
        raise ShapeError(f"cannot compare {a.kind} with {b.kind}")
    return float(np.mean((a.values * np.conj(b.values)).real))


def fuse_scores(s1: float, s2: float) -> float:
    return s1 + s2


def write_spectral_csv(maps, path) -> None:
    """Dump maps as CSV rows ``kind,q,R,re,im`` (9 significant digits)."""
    lines = ["kind,q,R,re,im"]
    for m in maps:
        for iq, q in enumerate(m.grid.q_values):
            for ir, r in enumerate(m.grid.r_values):
                v = m.values[iq, ir]
                lines.append(f"{m.kind},{q},{r:.9g},{v.real:.9g},{v.imag:.9g}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
