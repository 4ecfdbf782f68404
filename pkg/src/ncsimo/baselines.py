"""Suboptimal comparison receivers and the multi-user extension.

Single-user baselines estimate the channel from the pilot (LS or MMSE),
detect the data coherently, and optionally iterate between data-aided
channel estimation and detection.

The multi-user receiver cancels the other users' reconstructed signals
and runs the exact SIMO detector per user.

Symbol conventions follow :mod:`ncsimo.channel`: a single-user block is
X = h s^H + W, so column k carries conj(s_k) * h.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .channel import complex_normal, noise_variance, residual_metric
from .constellations import Constellation
from .detectors import DetectionOutcome, prepare, sphere_detect, tsa_detect

__all__ = [
    "Estimator",
    "BaselineConfig",
    "MimoBlock",
    "pilot_estimate",
    "coherent_detect",
    "iterative_detect",
    "orthogonal_pilots",
    "draw_mimo_block",
    "mimo_channel_estimate",
    "mimo_mmse_detect",
    "mimo_baseline",
    "mimo_detect",
    "MimoOutcome",
]

MAX_ITERATIONS = 10_000


class Estimator(str, Enum):
    LS = "ls"
    MMSE = "mmse"


@dataclass(frozen=True)
class BaselineConfig:
    estimator: Estimator = Estimator.MMSE
    iterations: int = 0

    def __post_init__(self):
        object.__setattr__(self, "estimator", Estimator(self.estimator))
        if not 0 <= self.iterations <= MAX_ITERATIONS:
            raise ValueError(f"iterations must be in [0, {MAX_ITERATIONS}]")


def pilot_estimate(x_col, pilot: complex, sigma_w_sq: float, estimator="ls") -> np.ndarray:
    """Channel estimate from the single pilot column x_T = conj(pilot) h + w.

    LS divides the pilot out; MMSE (unit-variance channel prior) shrinks by
    |pilot|^2 / (|pilot|^2 + sigma_w^2).
    """
    estimator = Estimator(estimator)
    energy = abs(pilot) ** 2
    if energy == 0:
        raise ValueError("pilot symbol has zero energy")
    x_col = np.asarray(x_col, dtype=complex)
    if estimator is Estimator.LS:
        return x_col * pilot / energy
    return x_col * pilot / (energy + sigma_w_sq)


def coherent_detect(x, h_hat, constellation: Constellation, pilot_index: int = 0) -> np.ndarray:
    """Matched-filter each column against ``h_hat`` and slice.

    Returns constellation indices; the last position is forced to the pilot.
    """
    x = np.asarray(x, dtype=complex)
    h_hat = np.asarray(h_hat, dtype=complex)
    gain = float(np.vdot(h_hat, h_hat).real)
    if gain == 0.0:
        raise ValueError("channel estimate is identically zero")
    # x_k^H h / ||h||^2 estimates s_k itself (the column carries conj(s_k))
    z = x.conj().T @ h_hat / gain
    idx = constellation.quantize(z)
    idx[-1] = pilot_index
    return idx


def _data_aided_estimate(x, s, sigma_w_sq, estimator):
    energy = float(np.vdot(s, s).real)
    if estimator is Estimator.LS:
        return x @ s / energy
    return x @ s / (energy + sigma_w_sq)


def iterative_detect(
    x,
    sigma_w_sq: float,
    cfg: BaselineConfig,
    constellation: Constellation,
    pilot_index: int = 0,
) -> DetectionOutcome:
    """Pilot-based detection refined by alternating estimation/detection.

    ``cfg.iterations == 0`` gives the plain pilot-only receiver. The loop
    stops early once the detected sequence stops changing.
    """
    x = np.asarray(x, dtype=complex)
    pts = constellation.points
    pilot = complex(pts[pilot_index])
    h_hat = pilot_estimate(x[:, -1], pilot, sigma_w_sq, cfg.estimator)
    s_idx = coherent_detect(x, h_hat, constellation, pilot_index)
    for _ in range(cfg.iterations):
        h_hat = _data_aided_estimate(x, pts[s_idx], sigma_w_sq, cfg.estimator)
        new_idx = coherent_detect(x, h_hat, constellation, pilot_index)
        if np.array_equal(new_idx, s_idx):
            break
        s_idx = new_idx
    t = x.shape[1]
    return DetectionOutcome(
        s_hat=s_idx,
        metric=residual_metric(x, pts[s_idx]),
        h_hat=h_hat,
        visited_nodes=0,
        visited_per_layer=np.zeros(t, dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# multi-user uplink


@dataclass(frozen=True)
class MimoBlock:
    """M-user block X = H S + W.

    ``s_true`` holds the transmitted symbols as they multiply the channel
    (row j is user j's conjugated sequence); the first M columns are the
    orthogonal pilots.
    """

    x: np.ndarray
    pilots: np.ndarray
    s_true: np.ndarray
    s_idx: np.ndarray
    h_true: np.ndarray
    sigma_w_sq: float

    @property
    def m_users(self) -> int:
        return self.pilots.shape[0]


def orthogonal_pilots(constellation: Constellation, m: int, pilot_index: int = 0) -> np.ndarray:
    """M x M training matrix with P P^H = M |p|^2 I.

    Uses Sylvester-Hadamard signs times the pilot symbol when M is a power
    of two (all entries stay in a sign-symmetric constellation), otherwise
    a DFT matrix scaled by the pilot.
    """
    p = complex(constellation.points[pilot_index])
    if m & (m - 1) == 0:
        had = np.ones((1, 1))
        while had.shape[0] < m:
            had = np.block([[had, had], [had, -had]])
        return had * p
    k = np.arange(m)
    return np.exp(2j * np.pi * np.outer(k, k) / m) * p


def draw_mimo_block(
    n_rx: int,
    t_coh: int,
    m_users: int,
    snr_db: float,
    constellation: Constellation,
    rng: np.random.Generator,
    pilot_index: int = 0,
) -> MimoBlock:
    if t_coh <= m_users:
        raise ValueError("coherence time must exceed the number of users")
    sigma_sq = noise_variance(constellation, snr_db)
    pilots = orthogonal_pilots(constellation, m_users, pilot_index)
    h = complex_normal(rng, (n_rx, m_users))
    data_idx = rng.integers(0, constellation.size, size=(m_users, t_coh - m_users))
    s = np.concatenate([pilots, constellation.points[data_idx]], axis=1)
    s_idx = np.concatenate([np.full((m_users, m_users), -1), data_idx], axis=1)
    w = complex_normal(rng, (n_rx, t_coh), sigma_sq)
    return MimoBlock(x=h @ s + w, pilots=pilots, s_true=s, s_idx=s_idx, h_true=h, sigma_w_sq=sigma_sq)


def _regularized_solve(gram, rhs, reg):
    """Solve (gram + reg I) Z = rhs, escalating reg if the system is singular."""
    m = gram.shape[0]
    lam = reg
    for _ in range(8):
        a = gram + lam * np.eye(m)
        if np.linalg.cond(a) < 1e12:
            return np.linalg.solve(a, rhs)
        lam = max(2.0 * lam, reg if reg > 0 else 1e-12)
    return np.linalg.lstsq(a, rhs, rcond=None)[0]


def mimo_channel_estimate(x, s, sigma_w_sq: float) -> np.ndarray:
    """LMMSE estimate of H (unit-variance prior) from X = H S + W with known S."""
    s = np.asarray(s, dtype=complex)
    # H_hat = X S^H (S S^H + sigma^2 I)^-1, solved from the right
    z = _regularized_solve(s @ s.conj().T, s @ np.asarray(x).conj().T, sigma_w_sq)
    return z.conj().T


def mimo_mmse_detect(x, h_hat, sigma_w_sq: float, constellation: Constellation) -> np.ndarray:
    """Linear MMSE symbol estimates, sliced to constellation indices (M x K)."""
    h_hat = np.asarray(h_hat, dtype=complex)
    reg = sigma_w_sq / constellation.e_avg
    z = _regularized_solve(h_hat.conj().T @ h_hat, h_hat.conj().T @ np.asarray(x), reg)
    return constellation.quantize(z)


@dataclass
class MimoOutcome:
    s_idx: np.ndarray
    h_hat: np.ndarray
    per_user: list
    rounds_run: int = 0

    @property
    def visited_nodes(self) -> int:
        return int(sum(o.visited_nodes for o in self.per_user))


def _assemble(block: MimoBlock, data_idx, constellation):
    m = block.m_users
    s = np.concatenate([block.pilots, constellation.points[data_idx]], axis=1)
    s_idx = np.concatenate([np.full((m, m), -1), data_idx], axis=1)
    return s, s_idx


def mimo_baseline(block: MimoBlock, constellation: Constellation, iterations: int = 0) -> MimoOutcome:
    """Pilot MMSE estimate + MMSE detection, optionally re-estimated
    ``iterations`` times from pilots plus detected data."""
    m = block.m_users
    x = block.x
    h_hat = mimo_channel_estimate(x[:, :m], block.pilots, block.sigma_w_sq)
    data_idx = mimo_mmse_detect(x[:, m:], h_hat, block.sigma_w_sq, constellation)
    for _ in range(iterations):
        s, _ = _assemble(block, data_idx, constellation)
        h_hat = mimo_channel_estimate(x, s, block.sigma_w_sq)
        new_idx = mimo_mmse_detect(x[:, m:], h_hat, block.sigma_w_sq, constellation)
        if np.array_equal(new_idx, data_idx):
            break
        data_idx = new_idx
    _, s_idx = _assemble(block, data_idx, constellation)
    return MimoOutcome(s_idx=s_idx, h_hat=h_hat, per_user=[])


def _simo_user(xbar, pilot_row, constellation, detector):
    """Exact SIMO detection of one user on its interference-cancelled block.

    The user's sequence enters as conj(s), so the detector runs on the
    data columns followed by the pilot columns; all pilot positions are
    pinned to their known symbols.
    """
    m = pilot_row.size
    # reorder: data columns first, the user's pilot columns last
    xr = np.concatenate([xbar[:, m:], xbar[:, :m]], axis=1)
    known = [constellation.index_of(np.conj(p)) for p in pilot_row]
    g = prepare(xr)
    if detector == "tsa":
        out = tsa_detect(g, constellation, known)
    else:
        out = sphere_detect(g, constellation, known)
    return out


def mimo_detect(
    block: MimoBlock,
    constellation: Constellation,
    rounds: int = 10,
    detector: str = "tsa",
) -> MimoOutcome:
    """Interference-cancelling receiver around the exact SIMO detector.

    1. MMSE channel estimate from the pilots, MMSE data detection, and a
       data-aided MMSE re-estimate.
    2. For each user j, subtract the other users' reconstructed signals
       h_i s_i and solve user j's SIMO problem exactly (Gauss-Seidel: later
       users see earlier users' fresh decisions).
    3. Refresh the MMSE channel estimate from all decisions; repeat 2-3.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if detector not in ("tsa", "sphere"):
        raise ValueError("detector must be 'tsa' or 'sphere'")
    m = block.m_users
    x = block.x
    sigma_sq = block.sigma_w_sq
    pts = constellation.points
    conj_map = np.array([constellation.index_of(np.conj(p)) for p in pts])

    h_hat = mimo_channel_estimate(x[:, :m], block.pilots, sigma_sq)
    data_idx = mimo_mmse_detect(x[:, m:], h_hat, sigma_sq, constellation)
    s, _ = _assemble(block, data_idx, constellation)
    h_hat = mimo_channel_estimate(x, s, sigma_sq)

    per_user = [None] * m
    rounds_run = 0
    for _ in range(rounds):
        rounds_run += 1
        prev = data_idx.copy()
        for j in range(m):
            others = [i for i in range(m) if i != j]
            xbar = x - h_hat[:, others] @ s[others]
            out = _simo_user(xbar, block.pilots[j], constellation, detector)
            # detector returns indices of s_j = conj(row j); pilots sit at the end
            data_idx[j] = conj_map[out.s_hat[:-m]]
            s[j, m:] = pts[data_idx[j]]
            per_user[j] = out
        h_hat = mimo_channel_estimate(x, s, sigma_sq)
        # unchanged decisions reproduce the same h_hat: fixed point
        if np.array_equal(prev, data_idx):
            break
    _, s_idx = _assemble(block, data_idx, constellation)
    return MimoOutcome(s_idx=s_idx, h_hat=h_hat, per_user=per_user, rounds_run=rounds_run)
