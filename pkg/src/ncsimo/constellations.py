"""Modulation alphabets and the geometric constants the detectors rely on."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

__all__ = [
    "Constellation",
    "make_bpsk",
    "make_qpsk",
    "make_16qam",
    "get_constellation",
    "CONSTELLATIONS",
]


def _energy(z):
    # |z|^2 without the sqrt round trip, exact on integer grids
    z = np.asarray(z)
    return z.real * z.real + z.imag * z.imag


@dataclass(frozen=True)
class Constellation:
    """Finite complex alphabet with precomputed distance/energy constants.

    Points are stored sorted lexicographically by (real, imag). The
    position of a point in ``points`` is its index everywhere else in the
    package (detectors report sequences as arrays of these indices).

    Attributes
    ----------
    name : str
        Short identifier ("bpsk", "qpsk", "16qam", ...).
    points : np.ndarray
        (K,) complex symbol amplitudes.
    d_min_sq : float
        Minimum squared distance between two distinct points.
    e_max : float
        Largest squared magnitude of a point.
    e_avg : float
        Mean squared magnitude over the points.
    is_constant_modulus : bool
        True when every point has the same squared magnitude.
    """

    name: str
    points: np.ndarray = field(repr=False)
    d_min_sq: float
    e_max: float
    e_avg: float
    is_constant_modulus: bool

    @classmethod
    def from_points(cls, name: str, points) -> "Constellation":
        pts = np.asarray(points, dtype=complex).ravel()
        if pts.size == 0:
            raise ValueError("constellation must have at least one point")
        order = np.lexsort((pts.imag, pts.real))
        pts = pts[order]
        if np.unique(pts).size != pts.size:
            raise ValueError("constellation points must be distinct")
        pts.setflags(write=False)

        energies = _energy(pts)
        if pts.size > 1:
            d_min_sq = min(_energy(p - q) for p, q in combinations(pts, 2))
        else:
            d_min_sq = 0.0
        e_avg = float(energies.mean())
        return cls(
            name=name,
            points=pts,
            d_min_sq=float(d_min_sq),
            e_max=float(energies.max()),
            e_avg=e_avg,
            is_constant_modulus=bool(np.allclose(energies, e_avg, rtol=1e-12, atol=1e-12)),
        )

    @property
    def size(self) -> int:
        return int(self.points.size)

    @property
    def energies(self) -> np.ndarray:
        return _energy(self.points)

    def __len__(self) -> int:
        return self.size

    def index_of(self, symbol: complex) -> int:
        """Index of ``symbol`` in ``points`` (exact match within 1e-12)."""
        hits = np.flatnonzero(np.abs(self.points - symbol) < 1e-12)
        if hits.size == 0:
            raise ValueError(f"{symbol!r} is not a point of {self.name}")
        return int(hits[0])

    def quantize(self, y) -> np.ndarray:
        """Nearest-point indices for each entry of ``y``.

        Exact ties go to the smaller index (``argmin`` keeps the first).
        """
        y = np.asarray(y, dtype=complex)
        dist = _energy(y[..., None] - self.points)
        return np.argmin(dist, axis=-1)


def make_bpsk() -> Constellation:
    return Constellation.from_points("bpsk", [1.0, -1.0])


def make_qpsk() -> Constellation:
    """Unit-energy QPSK, points (+-1 +-1j)/sqrt(2)."""
    pts = [(a + 1j * b) / np.sqrt(2.0) for a in (-1, 1) for b in (-1, 1)]
    return Constellation.from_points("qpsk", pts)


def make_16qam() -> Constellation:
    """Unnormalized 16-QAM on the {+-1, +-3} grid (max energy 18, mean 10)."""
    levels = (-3, -1, 1, 3)
    return Constellation.from_points("16qam", [a + 1j * b for a in levels for b in levels])


CONSTELLATIONS = {
    "bpsk": make_bpsk,
    "qpsk": make_qpsk,
    "16qam": make_16qam,
}


def get_constellation(name: str) -> Constellation:
    try:
        return CONSTELLATIONS[name.lower()]()
    except KeyError:
        raise ValueError(
            f"unknown constellation {name!r}; expected one of {sorted(CONSTELLATIONS)}"
        ) from None
