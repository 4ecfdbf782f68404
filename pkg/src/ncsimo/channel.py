"""Coherence-block generator for the SIMO model X = h s^H + W.

Conventions
-----------
``s`` is the length-T column vector; the transmitted row is its conjugate
transpose, so column k of X equals ``conj(s[k]) * h + w_k``. The symbol at
the last position is the known pilot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constellations import Constellation

__all__ = [
    "ChannelConfig",
    "ReceivedBlock",
    "noise_variance",
    "complex_normal",
    "draw_block",
    "ml_channel_estimate",
    "residual_metric",
]


@dataclass(frozen=True)
class ChannelConfig:
    n_rx: int
    t_coh: int
    snr_db: float
    constellation: Constellation
    pilot_index: int = 0
    seed: int | tuple = 0

    def __post_init__(self):
        if self.n_rx < 1:
            raise ValueError("n_rx must be >= 1")
        if self.t_coh < 2:
            raise ValueError("t_coh must be >= 2 (one pilot plus data)")
        if not 0 <= self.pilot_index < self.constellation.size:
            raise ValueError("pilot_index outside the constellation")

    @property
    def pilot_symbol(self) -> complex:
        return complex(self.constellation.points[self.pilot_index])

    @property
    def sigma_w_sq(self) -> float:
        return noise_variance(self.constellation, self.snr_db)


@dataclass(frozen=True)
class ReceivedBlock:
    """One simulated coherence block plus its ground truth."""

    x: np.ndarray
    h_true: np.ndarray
    s_true: np.ndarray
    s_idx: np.ndarray
    sigma_w_sq: float

    @property
    def n_rx(self) -> int:
        return self.x.shape[0]

    @property
    def t_coh(self) -> int:
        return self.x.shape[1]


def noise_variance(constellation: Constellation, snr_db: float) -> float:
    """Per-entry complex noise variance for SNR = e_avg / sigma_w^2."""
    return constellation.e_avg * 10.0 ** (-snr_db / 10.0)


def complex_normal(rng: np.random.Generator, shape, var: float = 1.0) -> np.ndarray:
    """CN(0, var) samples: real and imaginary parts each N(0, var/2)."""
    z = rng.standard_normal((*np.atleast_1d(shape), 2))
    return np.sqrt(var / 2.0) * (z[..., 0] + 1j * z[..., 1])


def draw_block(cfg: ChannelConfig, rng: np.random.Generator | None = None) -> ReceivedBlock:
    """Draw h ~ CN(0, I), i.i.d. uniform symbols with a pinned pilot, and noise.

    The block is a deterministic function of ``cfg.seed`` unless an explicit
    generator is passed.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    const = cfg.constellation
    n, t = cfg.n_rx, cfg.t_coh
    sigma_sq = cfg.sigma_w_sq

    h = complex_normal(rng, n)
    s_idx = rng.integers(0, const.size, size=t)
    s_idx[-1] = cfg.pilot_index
    s = const.points[s_idx]
    w = complex_normal(rng, (n, t), sigma_sq)
    x = np.outer(h, s.conj()) + w
    return ReceivedBlock(x=x, h_true=h, s_true=s, s_idx=s_idx, sigma_w_sq=sigma_sq)


def _energy(s: np.ndarray) -> float:
    e = float(np.vdot(s, s).real)
    if e <= 0.0:
        raise ValueError("symbol sequence has zero energy")
    return e


def ml_channel_estimate(x, s) -> np.ndarray:
    """Least-squares channel for a known sequence: X s / ||s||^2."""
    x = np.asarray(x, dtype=complex)
    s = np.asarray(s, dtype=complex)
    return x @ s / _energy(s)


def residual_metric(x, s) -> float:
    """||X - h_hat s^H||^2 = tr(X X^H) - s^H X^H X s / ||s||^2."""
    x = np.asarray(x, dtype=complex)
    s = np.asarray(s, dtype=complex)
    xs = x @ s
    return float(np.vdot(x, x).real - np.vdot(xs, xs).real / _energy(s))
