"""Closed-form reference quantities for validating the numerical pipeline.

These are test-support helpers: none of the detectors import them. They
describe what the detector sees on average, i.e. with X^H X / N replaced
by its expectation s s^H + sigma_w^2 I (unit-variance channel).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .constellations import Constellation
from .linalg import cholesky_psd, hermitize

__all__ = [
    "ExpectedGram",
    "expected_gram",
    "expected_cholesky_diag_cm",
    "expected_cholesky_diag_ncm",
    "lemma1_bound",
    "lemma2_bound",
    "gram_entry_variance",
    "batch_partial_metrics",
    "SeparationReport",
    "divergence_separation",
    "nodes_within",
]


@dataclass(frozen=True)
class ExpectedGram:
    """Expected normalized Gram matrix of a block carrying ``s``.

    Attributes
    ----------
    s : np.ndarray
        (T,) transmitted sequence.
    sigma_w_sq : float
        Per-entry noise variance.
    """

    s: np.ndarray
    sigma_w_sq: float

    @property
    def matrix(self) -> np.ndarray:
        return expected_gram(self.s, self.sigma_w_sq)

    @property
    def total_energy(self) -> float:
        return float(np.sum(np.abs(self.s) ** 2))

    @property
    def rho(self) -> float:
        """Top eigenvalue: total energy plus the noise floor."""
        return self.total_energy + self.sigma_w_sq

    @property
    def shifted(self) -> np.ndarray:
        """rho*I - E[Gram] = t*I - s s^H, which is singular PSD."""
        s = np.asarray(self.s, dtype=complex)
        return hermitize(self.total_energy * np.eye(s.size) - np.outer(s, s.conj()))

    def r_factor(self) -> np.ndarray:
        return cholesky_psd(self.shifted)


def expected_gram(s, sigma_w_sq: float) -> np.ndarray:
    """E[X^H X]/N for X = h s^H + W with h ~ CN(0, I).

    Entry (i, j) is s_i conj(s_j) plus sigma_w^2 on the diagonal.
    """
    s = np.asarray(s, dtype=complex).ravel()
    if s.size < 2:
        raise ValueError("need T >= 2")
    return hermitize(np.outer(s, s.conj()) + sigma_w_sq * np.eye(s.size))


def expected_cholesky_diag_cm(t_coh: int) -> np.ndarray:
    """Diagonal of the factor of T*I - s s^H for unit-modulus ``s``.

    Entry i (1-based) is sqrt(T - T/(T - i + 1)); the last one is 0.
    """
    if t_coh < 2:
        raise ValueError("need T >= 2")
    i = np.arange(1, t_coh + 1)
    d = t_coh - t_coh / (t_coh - i + 1.0)
    d[-1] = 0.0
    return np.sqrt(d)


def expected_cholesky_diag_ncm(s) -> np.ndarray:
    """Diagonal of the factor of t*I - s s^H, t = ||s||^2.

    Entry i is sqrt(t * (1 - |s_i|^2 / ||s_{i:T}||^2)); the last one is 0.
    """
    s = np.asarray(s, dtype=complex).ravel()
    if s.size < 2:
        raise ValueError("need T >= 2")
    e = np.abs(s) ** 2
    tail = np.cumsum(e[::-1])[::-1]
    if np.any(tail <= 0):
        raise ValueError("sequence tail has zero energy")
    d = e.sum() * (1.0 - e / tail)
    d[-1] = 0.0
    return np.sqrt(np.maximum(d, 0.0))


def lemma1_bound(constellation: Constellation, t_coh: int) -> float:
    """Separation of wrong sequences at their divergence layer: T*d_min^2/2."""
    if not constellation.is_constant_modulus:
        raise ValueError("bound applies to constant-modulus constellations only")
    return t_coh * constellation.d_min_sq / 2.0


def lemma2_bound() -> float:
    """Normalized-metric separation on the {+-1,+-3} 16-QAM grid."""
    return 2.0 / 45.0


def gram_entry_variance(sigma_w_sq: float, n_rx: int) -> float:
    """Variance of an off-diagonal Gram entry for unit-modulus symbols."""
    if n_rx < 1:
        raise ValueError("N must be >= 1")
    return (1.0 + sigma_w_sq) ** 2 / n_rx


def batch_partial_metrics(r_factor, seqs, *, normalized=False, e_max=None) -> np.ndarray:
    """Partial metrics for a batch of sequences, shape (K, T).

    Column i-1 holds the layer-i metric of each row; see
    :func:`ncsimo.detectors.partial_metrics` for the single-sequence form.
    """
    r = np.asarray(r_factor, dtype=complex)
    seqs = np.atleast_2d(np.asarray(seqs, dtype=complex))
    terms = np.abs(seqs @ r.T) ** 2
    m = np.cumsum(terms[:, ::-1], axis=1)[:, ::-1]
    if not normalized:
        return m
    if e_max is None:
        raise ValueError("normalized metrics need e_max")
    t = seqs.shape[1]
    tail = np.cumsum((np.abs(seqs) ** 2)[:, ::-1], axis=1)[:, ::-1]
    return m / (e_max * np.arange(t) + tail)


@dataclass(frozen=True)
class SeparationReport:
    """Outcome of a brute-force separation sweep.

    Attributes
    ----------
    min_wrong : float
        Smallest divergence-layer metric over all (true, wrong) pairs.
    max_true : float
        Largest partial metric of any transmitted sequence.
    pairs : int
        Number of (true, wrong) pairs examined.
    """

    min_wrong: float
    max_true: float
    pairs: int


def divergence_separation(
    constellation: Constellation,
    t_coh: int,
    *,
    normalized: bool | None = None,
    sigma_w_sq: float = 0.0,
    max_pairs: int = 1 << 22,
) -> SeparationReport:
    """Brute-force separation of wrong sequences under the expected Gram.

    For every transmitted sequence (last symbol fixed to each point in
    turn) and every wrong sequence sharing its last symbol, the wrong
    sequence's metric is read at its divergence layer, the deepest layer
    where it differs from the truth. Partial metrics only grow toward
    layer 1, so this is the smallest value on the wrong branch.
    """
    if normalized is None:
        normalized = not constellation.is_constant_modulus
    k = constellation.size
    pts = constellation.points
    n_seq = k ** t_coh
    if n_seq * k ** (t_coh - 1) > max_pairs:
        raise ValueError("sequence space too large for brute force")

    all_idx = np.array(list(product(range(k), repeat=t_coh)), dtype=int)
    min_wrong = np.inf
    max_true = 0.0
    pairs = 0
    for true_idx in all_idx:
        s = pts[true_idx]
        r = ExpectedGram(s, sigma_w_sq).r_factor()
        cand = all_idx[all_idx[:, -1] == true_idx[-1]]
        metrics = batch_partial_metrics(
            r, pts[cand], normalized=normalized, e_max=constellation.e_max
        )
        own = batch_partial_metrics(r, s, normalized=normalized, e_max=constellation.e_max)
        max_true = max(max_true, float(np.abs(own).max()))

        differs = cand != true_idx
        wrong = differs.any(axis=1)
        if not wrong.any():
            continue
        # deepest differing position = last True along each row
        layer = t_coh - 1 - np.argmax(differs[:, ::-1], axis=1)
        vals = metrics[np.arange(cand.shape[0]), layer][wrong]
        min_wrong = min(min_wrong, float(vals.min()))
        pairs += int(wrong.sum())
    return SeparationReport(min_wrong=min_wrong, max_true=max_true, pairs=pairs)


def nodes_within(
    r_factor,
    constellation: Constellation,
    pilot_index: int,
    threshold: float,
    *,
    normalized: bool = False,
    tol: float = 1e-12,
) -> int:
    """Count tree nodes (pinned partial sequences) with metric <= threshold.

    Enumerates every layer by brute force, so only small T is practical.
    """
    r = np.asarray(r_factor, dtype=complex)
    t = r.shape[0]
    k = constellation.size
    pts = constellation.points
    total = 0
    for li in range(t - 1, -1, -1):
        free = t - 1 - li
        if k**free > 1 << 22:
            raise ValueError("tree too large for brute force")
        tails = np.array(list(product(range(k), repeat=free)), dtype=int).reshape(k**free, free)
        seqs = np.zeros((tails.shape[0], t), dtype=complex)
        seqs[:, li:t - 1] = pts[tails]
        seqs[:, t - 1] = pts[pilot_index]
        # positions before li are zero and do not touch rows >= li
        m = batch_partial_metrics(r, seqs, normalized=normalized, e_max=constellation.e_max)[:, li]
        total += int(np.sum(m <= threshold + tol * (1.0 + abs(threshold))))
    return total
