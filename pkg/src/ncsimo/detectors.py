"""Exact joint ML channel estimation and non-coherent data detection.

All detectors minimise the quadratic form s^H (rho*I - X^H X/N) s over
sequences whose last symbol is the known pilot. For constellations with
unequal point energies the objective is divided by ||s||^2.

Tree layers are numbered 1..T as in the usual sphere-decoder description:
a layer-i node is the partial sequence (s_i, ..., s_T). Internally arrays
are 0-based, so layer i lives at index i-1. Search proceeds from layer T
(the pilot) down to layer 1.

A node is *visited* when its metric is computed; ``visited_per_layer``
counts those evaluations and is the complexity figure reported
throughout.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ml_channel_estimate
from .constellations import Constellation
from .linalg import (
    cholesky_psd,
    gram_normalized,
    max_eigenvalue,
    shifted_matrix,
    slightly_above,
)

__all__ = [
    "GramDecomposition",
    "DetectionOutcome",
    "prepare",
    "default_radius",
    "sphere_detect_cm",
    "sphere_detect_ncm",
    "sphere_detect",
    "tsa_detect",
    "exhaustive_detect",
    "objective",
    "partial_metrics",
    "EXHAUSTIVE_LIMIT",
]

EXHAUSTIVE_LIMIT = 2**24
RESTART_POLICIES = ("double", "modified")


@dataclass(frozen=True)
class GramDecomposition:
    """Gram matrix, its shift rho and the Cholesky factor of rho*I - Gram."""

    gram: np.ndarray
    rho: float
    r_factor: np.ndarray
    shift: float = 0.0
    x: np.ndarray | None = field(default=None, repr=False)

    @property
    def t_coh(self) -> int:
        return self.gram.shape[0]

    @property
    def shifted(self) -> np.ndarray:
        return shifted_matrix(self.gram, self.rho)


@dataclass
class DetectionOutcome:
    s_hat: np.ndarray
    metric: float
    h_hat: np.ndarray | None
    visited_nodes: int
    visited_per_layer: np.ndarray
    radius_restarts: int = 0
    radius_history: list = field(default_factory=list)

    def symbols(self, constellation: Constellation) -> np.ndarray:
        return constellation.points[self.s_hat]


def prepare(x, n: int | None = None) -> GramDecomposition:
    """Gram matrix, rho just above its top eigenvalue, and the factor R."""
    x = np.asarray(x, dtype=complex)
    if x.ndim != 2 or x.shape[1] < 2:
        raise ValueError("X must be N x T with T >= 2")
    gram = gram_normalized(x, n)
    return decompose_gram(gram, x=x)


def decompose_gram(gram, x=None) -> GramDecomposition:
    """Same as :func:`prepare` but starting from a Gram matrix."""
    rho = slightly_above(max_eigenvalue(gram))
    r, delta = cholesky_psd(shifted_matrix(gram, rho), return_shift=True)
    return GramDecomposition(gram=np.asarray(gram), rho=rho, r_factor=r, shift=delta, x=x)


def default_radius(constellation: Constellation, t_coh: int) -> float:
    """Initial squared radius: T*d_min^2/6 (constant modulus) or 2/45.

    For unit QPSK the first rule gives T/3. The 2/45 value is the 16-QAM
    separation bound on the {+-1,+-3} grid; other nonconstant-modulus
    alphabets scale it by d_min^2/4 and 18/e_max.
    """
    if constellation.is_constant_modulus:
        return t_coh * constellation.d_min_sq / 6.0
    return (2.0 / 45.0) * (constellation.d_min_sq / 4.0) * (18.0 / constellation.e_max)


def _pinned(pilot_index) -> list[int]:
    """Normalize ``pilot_index`` to the list of indices pinned at the end."""
    if pilot_index is None:
        return []
    if np.ndim(pilot_index) == 0:
        return [int(pilot_index)]
    return [int(p) for p in pilot_index]


def _check_pilot(constellation: Constellation, pilot_index, t: int | None = None):
    pins = _pinned(pilot_index)
    if any(not 0 <= p < constellation.size for p in pins):
        raise ValueError("pilot_index outside the constellation")
    if t is not None and len(pins) >= t:
        raise ValueError("at least one position must be unknown")


def _layer_candidates(constellation, pilot_index, t):
    """Per-layer candidate (index, symbol, energy) lists.

    An int ``pilot_index`` pins layer T; a sequence of k indices pins the
    last k positions (in order).
    """
    pts = [complex(p) for p in constellation.points]
    en = [float(e) for e in constellation.energies]
    full = list(zip(range(len(pts)), pts, en))
    cands = [full] * t
    pins = _pinned(pilot_index)
    for offset, p in enumerate(pins):
        cands[t - len(pins) + offset] = [full[p]]
    return cands


def _finish(g, constellation, s_idx, metric, visited, restarts, history):
    s_idx = np.asarray(s_idx, dtype=int)
    h_hat = None
    if g.x is not None:
        h_hat = ml_channel_estimate(g.x, constellation.points[s_idx])
    per_layer = np.asarray(visited, dtype=np.int64)
    return DetectionOutcome(
        s_hat=s_idx,
        metric=float(metric),
        h_hat=h_hat,
        visited_nodes=int(per_layer.sum()),
        visited_per_layer=per_layer,
        radius_restarts=restarts,
        radius_history=history,
    )


def _sphere_pass(rows, cands, normalized, e_max, r_sq, visited):
    """One depth-first pass under squared radius ``r_sq``.

    Returns (best index tuple or None, best metric, list of accepted radii).
    """
    t = len(rows)
    sym = [0j] * t
    choice = [0] * t
    state = {"r_sq": r_sq, "best": None, "best_score": math.inf}
    history = []

    def descend(i, parent_m, parent_e):
        row = rows[i]
        c = 0j
        for k in range(i + 1, t):
            c += row[k] * sym[k]
        rii = row[i]
        cnt = 0
        for j, w, e in cands[i]:
            cnt += 1
            v = c + rii * w
            m = parent_m + (v.real * v.real + v.imag * v.imag)
            if normalized:
                energy = parent_e + e
                score = m / (e_max * i + energy)
            else:
                energy = 0.0
                score = m
            if score > state["r_sq"]:
                continue
            sym[i] = w
            choice[i] = j
            if i == 0:
                # strict improvement keeps the earliest of tied sequences
                if score < state["best_score"]:
                    state["best"] = tuple(choice)
                    state["best_score"] = score
                    state["r_sq"] = score
                    history.append(score)
            else:
                descend(i - 1, m, energy)
        visited[i] += cnt

    descend(t - 1, 0.0, 0.0)
    return state["best"], state["best_score"], history


def sphere_detect(
    g: GramDecomposition,
    constellation: Constellation,
    pilot_index: int | None = 0,
    r0_sq: float | None = None,
    restart_policy: str = "double",
    *,
    normalized: bool | None = None,
) -> DetectionOutcome:
    """Depth-first sphere decoder with radius shrinking and restarts.

    Parameters
    ----------
    g : GramDecomposition
        Output of :func:`prepare`.
    constellation : Constellation
    pilot_index : int or None
        Index of the pinned last symbol. ``None`` lifts the pinning (the
        problem is then only solvable up to a common phase).
    r0_sq : float, optional
        Initial squared radius; defaults to :func:`default_radius`.
    restart_policy : {"double", "modified"}
        What to do when a pass finds nothing: double r (multiply r^2 by
        4) or rerun with r = infinity.
    normalized : bool, optional
        Use the energy-normalized metric. Defaults to True for
        nonconstant-modulus alphabets.
    """
    _check_pilot(constellation, pilot_index, g.t_coh)
    if restart_policy not in RESTART_POLICIES:
        raise ValueError(f"restart_policy must be one of {RESTART_POLICIES}")
    if normalized is None:
        normalized = not constellation.is_constant_modulus
    t = g.t_coh
    if r0_sq is None:
        r0_sq = default_radius(constellation, t)
    if not r0_sq > 0:
        raise ValueError("initial radius must be positive")

    rows = g.r_factor.tolist()
    cands = _layer_candidates(constellation, pilot_index, t)
    visited = [0] * t
    restarts = 0
    r_sq = float(r0_sq)
    history = []
    while True:
        history.append(r_sq)
        best, score, accepted = _sphere_pass(
            rows, cands, normalized, constellation.e_max, r_sq, visited
        )
        history.extend(accepted)
        if best is not None:
            break
        restarts += 1
        r_sq = 4.0 * r_sq if restart_policy == "double" else math.inf
    return _finish(g, constellation, best, score, visited, restarts, history)


def sphere_detect_cm(g, constellation, pilot_index=0, r0_sq=None, restart_policy="double"):
    """Sphere decoder on M = ||R s||^2 (constant-modulus alphabets)."""
    if not constellation.is_constant_modulus:
        raise ValueError(
            f"{constellation.name} is not constant modulus; use sphere_detect_ncm"
        )
    return sphere_detect(g, constellation, pilot_index, r0_sq, restart_policy, normalized=False)


def sphere_detect_ncm(g, constellation, pilot_index=0, r0_sq=None, restart_policy="double"):
    """Sphere decoder on the energy-normalized metric (any alphabet)."""
    if r0_sq is None and constellation.is_constant_modulus:
        # normalized metric is the plain one divided by T*e
        r0_sq = default_radius(constellation, g.t_coh) / (g.t_coh * constellation.e_max)
    return sphere_detect(g, constellation, pilot_index, r0_sq, restart_policy, normalized=True)


def tsa_detect(
    g: GramDecomposition,
    constellation: Constellation,
    pilot_index: int | None = 0,
    mode: str | None = None,
) -> DetectionOutcome:
    """Best-first tree search: always expand the cheapest leaf.

    The frontier is a heap keyed by (metric, -layer, insertion counter), so
    ties go to the shallower node and then to the earlier-inserted one.
    The search stops when the cheapest leaf is a full-length sequence;
    since metrics never decrease from parent to child this is the optimum.

    ``mode`` is "cm" (plain metric) or "ncm" (energy-normalized); the
    default follows the constellation.
    """
    _check_pilot(constellation, pilot_index, g.t_coh)
    if mode is None:
        mode = "cm" if constellation.is_constant_modulus else "ncm"
    if mode not in ("cm", "ncm"):
        raise ValueError("mode must be 'cm' or 'ncm'")
    normalized = mode == "ncm"
    e_max = constellation.e_max
    t = g.t_coh
    rows = g.r_factor.tolist()
    cands = _layer_candidates(constellation, pilot_index, t)
    visited = [0] * t
    counter = itertools.count()

    # heap entries: (score, -layer, tiebreak, layer_index, m, energy, symbols, choices)
    # root sits at index t (layer T+1) with empty partial sequence
    heap = [(0.0, -(t + 1), next(counter), t, 0.0, 0.0, (), ())]
    history = []
    while True:
        score, _, _, i, m_par, e_par, syms, idx = heapq.heappop(heap)
        history.append(score)
        if i == 0:
            break
        li = i - 1
        row = rows[li]
        c = 0j
        # syms holds s_{i+1..T} in order, i.e. positions li+1 .. t-1
        for k, sk in enumerate(syms, start=li + 1):
            c += row[k] * sk
        rii = row[li]
        for j, w, e in cands[li]:
            v = c + rii * w
            m = m_par + (v.real * v.real + v.imag * v.imag)
            if normalized:
                energy = e_par + e
                child_score = m / (e_max * li + energy)
            else:
                energy = 0.0
                child_score = m
            heapq.heappush(
                heap,
                (child_score, -li, next(counter), li, m, energy, (w,) + syms, (j,) + idx),
            )
        visited[li] += len(cands[li])
    out = _finish(g, constellation, idx, score, visited, 0, history)
    return out


def objective(gram_or_shifted, s, *, rho: float | None = None, normalized: bool = False):
    """Exact objective s^H A s (optionally / ||s||^2) evaluated without Cholesky.

    If ``rho`` is given, A = rho*I - gram; otherwise the first argument is
    taken to be A itself. ``s`` may be a single sequence (T,) or a batch
    (K, T).
    """
    a = np.asarray(gram_or_shifted, dtype=complex)
    if rho is not None:
        a = rho * np.eye(a.shape[0]) - a
    s = np.asarray(s, dtype=complex)
    quad = np.einsum("...i,ij,...j->...", s.conj(), a, s).real
    if normalized:
        quad = quad / np.einsum("...i,...i->...", s.conj(), s).real
    return quad


def exhaustive_detect(
    g_or_x,
    constellation: Constellation,
    pilot_index: int = 0,
    mode: str | None = None,
    *,
    chunk: int = 1 << 16,
) -> DetectionOutcome:
    """Brute-force oracle over all |Omega|^(T-1) pinned sequences.

    With ``pilot_index=None`` all |Omega|^T sequences are enumerated.

    The objective is evaluated straight from rho*I - Gram (no Cholesky).
    Sequences are enumerated as base-|Omega| counters with position 1 most
    significant; ties go to the smallest enumeration index.
    """
    g = g_or_x if isinstance(g_or_x, GramDecomposition) else prepare(g_or_x)
    t = g.t_coh
    _check_pilot(constellation, pilot_index, t)
    if mode is None:
        mode = "cm" if constellation.is_constant_modulus else "ncm"
    if mode not in ("cm", "ncm"):
        raise ValueError("mode must be 'cm' or 'ncm'")
    pins = _pinned(pilot_index)
    free = t - len(pins)
    k = constellation.size
    total = k ** free
    if total > EXHAUSTIVE_LIMIT:
        raise ValueError(
            f"exhaustive search over {total} sequences exceeds the {EXHAUSTIVE_LIMIT} guard"
        )
    a = g.shifted
    pts = constellation.points
    powers = k ** np.arange(free - 1, -1, -1)

    best_val = math.inf
    best_idx = None
    for start in range(0, total, chunk):
        codes = np.arange(start, min(start + chunk, total))
        digits = (codes[:, None] // powers) % k
        idx = np.concatenate([digits, np.tile(pins, (codes.size, 1))], axis=1).astype(int)
        vals = objective(a, pts[idx], normalized=(mode == "ncm"))
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best_val = float(vals[j])
            best_idx = idx[j]

    visited = np.zeros(t, dtype=np.int64)
    visited[0] = total
    out = _finish(g, constellation, best_idx, best_val, visited, 0, [best_val])
    return out


def partial_metrics(r_factor, s, *, normalized: bool = False, e_max: float | None = None):
    """Metrics of every partial sequence (s_i..s_T) of ``s`` under ``R``.

    Returns a length-T array whose entry i-1 is the layer-i metric
    sum_{j>=i} |sum_{k>=j} R[j,k] s_k|^2, or its normalized version
    divided by e_max*(i-1) + ||s_{i:T}||^2.
    """
    r = np.asarray(r_factor, dtype=complex)
    s = np.asarray(s, dtype=complex)
    terms = np.abs(r @ s) ** 2
    m = np.cumsum(terms[::-1])[::-1]
    if not normalized:
        return m
    if e_max is None:
        raise ValueError("normalized metrics need e_max")
    t = s.size
    tail_energy = np.cumsum((np.abs(s) ** 2)[::-1])[::-1]
    return m / (e_max * np.arange(t) + tail_energy)
