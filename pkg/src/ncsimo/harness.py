"""Monte-Carlo experiment engine: specs, trial loop, CSV output, self-checks.

Every trial draws its block from ``default_rng((seed, grid_index,
trial_index))``, so a result depends only on the spec. Trials can be
spread over worker processes (``NCSIMO_WORKERS``); per-trial outcomes are
always reduced in trial order.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from itertools import product
from pathlib import Path

import numpy as np

from .baselines import (
    BaselineConfig,
    draw_mimo_block,
    iterative_detect,
    mimo_baseline,
    mimo_detect,
)
from .channel import ChannelConfig, complex_normal, draw_block
from .constellations import CONSTELLATIONS, get_constellation
from .detectors import (
    EXHAUSTIVE_LIMIT,
    RESTART_POLICIES,
    exhaustive_detect,
    objective,
    prepare,
    sphere_detect_cm,
    sphere_detect_ncm,
    tsa_detect,
)
from .oracles import (
    ExpectedGram,
    divergence_separation,
    expected_cholesky_diag_cm,
    expected_cholesky_diag_ncm,
    gram_entry_variance,
    lemma1_bound,
    lemma2_bound,
)

__all__ = [
    "SpecError",
    "ExperimentSpec",
    "ResultRow",
    "CSV_COLUMNS",
    "DETECTORS",
    "run",
    "run_trials",
    "emit_csv",
    "load_csv",
    "snr_at_ser",
    "CheckResult",
    "verify",
    "worker_count",
]

WORKERS_ENV = "NCSIMO_WORKERS"

SIMO_DETECTORS = ("sphere_cm", "sphere_ncm", "tsa", "exhaustive", "ls", "mmse", "ls_iter", "mmse_iter")
MIMO_DETECTORS = ("mimo_ml", "mimo_mmse_iter", "mimo_mmse")
DETECTORS = SIMO_DETECTORS + MIMO_DETECTORS

CSV_COLUMNS = (
    "name",
    "detector",
    "constellation",
    "N",
    "T",
    "snr_db",
    "trials",
    "ser",
    "ser_stderr",
    "mean_visited",
    "visited_stderr",
    "mean_restarts",
    "wall_time_s",
)

# default iteration counts when the spec leaves ``iterations`` unset
SIMO_ITERATIONS = 100
MIMO_ITERATIONS = 10


class SpecError(ValueError):
    """Invalid or inconsistent experiment specification."""


def _as_tuple(v, cast):
    if isinstance(v, (list, tuple)):
        return tuple(cast(x) for x in v)
    return (cast(v),)


@dataclass(frozen=True)
class ExperimentSpec:
    """One detector swept over a grid of (N, T, SNR).

    Attributes
    ----------
    name : str
        Label copied to every output row.
    detector : str
        One of :data:`DETECTORS`.
    constellation : str
        Constellation name ("bpsk", "qpsk", "16qam").
    n_rx, t_coh, snr_db : tuple
        Grid axes; the grid is their Cartesian product in that order.
    trials : int
        Blocks per grid point.
    seed : int
        Master seed (0 <= seed < 2**64).
    radius_override : float, optional
        Initial squared radius for the sphere decoders.
    restart_policy : str
        "double" or "modified".
    iterations : int, optional
        Baseline iterations; defaults to 100 (single user) or 10 (multi-user).
    m_users : int, optional
        Number of users; required by the multi-user detectors.
    pilot_index : int
        Constellation index of the pilot symbol.
    rounds : int
        Interference-cancellation rounds of ``mimo_ml``.
    """

    name: str
    detector: str
    constellation: str
    n_rx: tuple
    t_coh: tuple
    snr_db: tuple
    trials: int = 10_000
    seed: int = 0
    radius_override: float | None = None
    restart_policy: str = "double"
    iterations: int | None = None
    m_users: int | None = None
    pilot_index: int = 0
    rounds: int = 10

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        try:
            set_("n_rx", _as_tuple(self.n_rx, int))
            set_("t_coh", _as_tuple(self.t_coh, int))
            set_("snr_db", _as_tuple(self.snr_db, float))
        except (TypeError, ValueError) as exc:
            raise SpecError(f"bad grid value: {exc}") from None
        self._validate()

    def _validate(self):
        if self.detector not in DETECTORS:
            raise SpecError(f"unknown detector {self.detector!r}; expected one of {DETECTORS}")
        if self.constellation.lower() not in CONSTELLATIONS:
            raise SpecError(f"unknown constellation {self.constellation!r}")
        if not isinstance(self.trials, int) or self.trials < 1:
            raise SpecError("trials must be a positive integer")
        if not 0 <= int(self.seed) < 2**64:
            raise SpecError("seed must fit in 64 bits")
        if not (self.n_rx and self.t_coh and self.snr_db):
            raise SpecError("grid axes must be nonempty")
        if min(self.n_rx) < 1:
            raise SpecError("N must be >= 1")
        if min(self.t_coh) < 2:
            raise SpecError("T must be >= 2")
        if any(math.isnan(v) for v in self.snr_db):
            raise SpecError("snr_db must not be NaN")
        if self.restart_policy not in RESTART_POLICIES:
            raise SpecError(f"restart_policy must be one of {RESTART_POLICIES}")
        if self.radius_override is not None and not self.radius_override > 0:
            raise SpecError("radius_override must be positive")
        if self.iterations is not None and not 0 <= self.iterations <= 10_000:
            raise SpecError("iterations must be in [0, 10000]")
        if self.rounds < 1:
            raise SpecError("rounds must be >= 1")
        const = get_constellation(self.constellation)
        if not 0 <= self.pilot_index < const.size:
            raise SpecError("pilot_index outside the constellation")
        if self.detector == "sphere_cm" and not const.is_constant_modulus:
            raise SpecError("sphere_cm requires a constant-modulus constellation")
        if self.detector == "exhaustive":
            worst = const.size ** (max(self.t_coh) - 1)
            if worst > EXHAUSTIVE_LIMIT:
                raise SpecError(f"exhaustive search over {worst} sequences exceeds the guard")
        if self.detector in MIMO_DETECTORS:
            if self.m_users is None or self.m_users < 1:
                raise SpecError("multi-user detectors need m_users >= 1")
            if min(self.t_coh) <= self.m_users:
                raise SpecError("T must exceed m_users")

    @property
    def is_mimo(self) -> bool:
        return self.detector in MIMO_DETECTORS

    @property
    def effective_iterations(self) -> int:
        if self.iterations is not None:
            return self.iterations
        return MIMO_ITERATIONS if self.is_mimo else SIMO_ITERATIONS

    def grid(self):
        """Grid points (N, T, snr_db) in row-major order."""
        return list(product(self.n_rx, self.t_coh, self.snr_db))

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        d = dict(d)
        for short, long in (("N", "n_rx"), ("T", "t_coh"), ("snr", "snr_db")):
            if short in d:
                if long in d:
                    raise SpecError(f"both {short!r} and {long!r} given")
                d[long] = d.pop(short)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise SpecError(f"unknown spec keys: {sorted(unknown)}")
        missing = {"name", "detector", "constellation", "n_rx", "t_coh", "snr_db"} - set(d)
        if missing:
            raise SpecError(f"missing spec keys: {sorted(missing)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise SpecError(str(exc)) from None

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "ExperimentSpec":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise SpecError(f"cannot read spec file: {exc}") from None
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecError(f"spec file is not valid JSON: {exc}") from None
        if not isinstance(d, dict):
            raise SpecError("spec file must hold a JSON object")
        d.update(overrides or {})
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("n_rx", "t_coh", "snr_db"):
            d[k] = list(d[k])
        return d


@dataclass(frozen=True)
class ResultRow:
    """Aggregated statistics of one grid point."""

    name: str
    detector: str
    constellation: str
    N: int
    T: int
    snr_db: float
    trials: int
    ser: float
    ser_stderr: float
    mean_visited: float
    visited_stderr: float
    mean_restarts: float
    wall_time_s: float


# ---------------------------------------------------------------------------
# trial execution


def _simo_trial(spec: ExperimentSpec, const, n, t, snr, rng):
    cfg = ChannelConfig(n, t, snr, const, spec.pilot_index)
    block = draw_block(cfg, rng)
    det = spec.detector
    pilot = spec.pilot_index
    if det in ("ls", "mmse", "ls_iter", "mmse_iter"):
        iters = spec.effective_iterations if det.endswith("_iter") else 0
        bcfg = BaselineConfig(det.split("_")[0], iters)
        out = iterative_detect(block.x, block.sigma_w_sq, bcfg, const, pilot)
    else:
        g = prepare(block.x)
        if det == "tsa":
            out = tsa_detect(g, const, pilot)
        elif det == "sphere_cm":
            out = sphere_detect_cm(g, const, pilot, spec.radius_override, spec.restart_policy)
        elif det == "sphere_ncm":
            out = sphere_detect_ncm(g, const, pilot, spec.radius_override, spec.restart_policy)
        else:
            out = exhaustive_detect(g, const, pilot)
    errors = int(np.sum(out.s_hat[:-1] != block.s_idx[:-1]))
    return errors, t - 1, out.visited_nodes, out.radius_restarts


def _mimo_trial(spec: ExperimentSpec, const, n, t, snr, rng):
    m = spec.m_users
    block = draw_mimo_block(n, t, m, snr, const, rng, spec.pilot_index)
    if spec.detector == "mimo_ml":
        out = mimo_detect(block, const, rounds=spec.rounds)
    elif spec.detector == "mimo_mmse_iter":
        out = mimo_baseline(block, const, spec.effective_iterations)
    else:
        out = mimo_baseline(block, const, 0)
    errors = int(np.sum(out.s_idx[:, m:] != block.s_idx[:, m:]))
    return errors, m * (t - m), out.visited_nodes, 0


def _run_chunk(args):
    spec, grid_idx, point, start, stop = args
    const = get_constellation(spec.constellation)
    n, t, snr = point
    trial = _mimo_trial if spec.is_mimo else _simo_trial
    out = np.empty((stop - start, 4), dtype=np.float64)
    for k, trial_idx in enumerate(range(start, stop)):
        rng = np.random.default_rng((int(spec.seed), grid_idx, trial_idx))
        out[k] = trial(spec, const, n, t, snr, rng)
    return out


def worker_count(workers: int | None = None) -> int:
    """Explicit ``workers``, else $NCSIMO_WORKERS, else 1."""
    if workers is None:
        raw = os.environ.get(WORKERS_ENV, "1")
        try:
            workers = int(raw)
        except ValueError:
            raise SpecError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, int(workers))


def _chunks(trials: int, workers: int):
    size = max(1, math.ceil(trials / (4 * workers)))
    return [(a, min(a + size, trials)) for a in range(0, trials, size)]


def _aggregate(spec, point, stats, elapsed) -> ResultRow:
    n, t, snr = point
    errors, symbols, visited, restarts = stats.T
    ser_trial = errors / symbols
    trials = stats.shape[0]

    def stderr(v):
        return float(np.std(v, ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0

    return ResultRow(
        name=spec.name,
        detector=spec.detector,
        constellation=spec.constellation.lower(),
        N=n,
        T=t,
        snr_db=snr,
        trials=trials,
        ser=float(errors.sum() / symbols.sum()),
        ser_stderr=stderr(ser_trial),
        mean_visited=float(visited.mean()),
        visited_stderr=stderr(visited),
        mean_restarts=float(restarts.mean()),
        wall_time_s=elapsed,
    )


def run_trials(spec: ExperimentSpec, workers: int | None = None):
    """Per-trial statistics for every grid point.

    Returns a list of ``(point, stats, elapsed_s)`` where ``stats`` is a
    (trials, 4) array of (symbol errors, data symbols, visited nodes,
    radius restarts) in trial order.
    """
    workers = worker_count(workers)
    out = []
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for grid_idx, point in enumerate(spec.grid()):
            t0 = time.perf_counter()
            jobs = [(spec, grid_idx, point, a, b) for a, b in _chunks(spec.trials, workers)]
            if pool is None:
                parts = [_run_chunk(j) for j in jobs]
            else:
                parts = list(pool.map(_run_chunk, jobs))
            out.append((point, np.concatenate(parts, axis=0), time.perf_counter() - t0))
    finally:
        if pool is not None:
            pool.shutdown()
    return out


def run(spec: ExperimentSpec, workers: int | None = None) -> list[ResultRow]:
    """Run every grid point of ``spec``.

    Output statistics are identical for any ``workers`` value; only
    ``wall_time_s`` varies between runs.
    """
    return [_aggregate(spec, p, stats, dt) for p, stats, dt in run_trials(spec, workers)]


# ---------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".9g")
    return str(v)


def emit_csv(rows, path, *, record_timing: bool = True) -> Path:
    """Write rows with the fixed column order; reals get 9 significant digits.

    With ``record_timing=False`` the wall-time column is written as 0 so the
    file is a pure function of the spec.
    """
    rows = list(rows)
    if not rows:
        raise ValueError("no rows to write")
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            if not record_timing:
                r = replace(r, wall_time_s=0.0)
            w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    return path


def load_csv(path) -> list[ResultRow]:
    """Parse a file written by :func:`emit_csv`."""
    types = {f.name: f.type for f in fields(ResultRow)}
    out = []
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError("unexpected CSV header")
        for rec in reader:
            vals = {}
            for k, v in rec.items():
                vals[k] = int(v) if types[k] == "int" else float(v) if types[k] == "float" else v
            out.append(ResultRow(**vals))
    return out


def snr_at_ser(snr_db, ser, target: float = 1e-2) -> float:
    """SNR where a decreasing SER curve first crosses ``target``.

    Interpolates log10(SER) linearly between the bracketing points (linear
    SER if the upper point saw no errors). Returns NaN when the curve never
    brackets the target.
    """
    x = np.asarray(snr_db, dtype=float)
    y = np.asarray(ser, dtype=float)
    order = np.argsort(x)
    x, y = x[order], y[order]
    for k in range(len(x) - 1):
        if y[k] >= target > y[k + 1]:
            if y[k + 1] > 0:
                a, b = math.log10(y[k]), math.log10(y[k + 1])
                frac = (a - math.log10(target)) / (a - b)
            else:
                # no errors at the upper point: fall back to linear SER
                frac = (y[k] - target) / y[k]
            return float(x[k] + frac * (x[k + 1] - x[k]))
    return float("nan")


# ---------------------------------------------------------------------------
# self-checks


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: float
    threshold: float
    detail: str = ""


def _check_oracle_equivalence(n_blocks: int, seed: int = 11) -> CheckResult:
    """Exact detectors against brute force on small random blocks."""
    rng = np.random.default_rng(seed)
    cases = [("bpsk", range(3, 8)), ("qpsk", range(3, 8)), ("16qam", range(3, 5))]
    snrs = (-10.0, 0.0, 10.0)
    worst = 0.0
    count = 0
    for b in range(n_blocks):
        name, ts = cases[b % len(cases)]
        const = get_constellation(name)
        t = int(rng.choice(list(ts)))
        snr = snrs[(b // len(cases)) % len(snrs)]
        n = int(rng.integers(1, 40))
        cfg = ChannelConfig(n, t, snr, const, int(rng.integers(const.size)))
        block = draw_block(cfg, rng)
        g = prepare(block.x)
        pilot = cfg.pilot_index
        modes = ["cm", "ncm"] if const.is_constant_modulus else ["ncm"]
        for mode in modes:
            ref = exhaustive_detect(g, const, pilot, mode)
            norm = mode == "ncm"
            ref_val = objective(g.shifted, const.points[ref.s_hat], normalized=norm)
            found = [tsa_detect(g, const, pilot, mode)]
            found.append(
                sphere_detect_cm(g, const, pilot) if mode == "cm" else sphere_detect_ncm(g, const, pilot)
            )
            for out in found:
                val = objective(g.shifted, const.points[out.s_hat], normalized=norm)
                rel = (val - ref_val) / max(abs(ref_val), 1e-300)
                worst = max(worst, float(rel))
                count += 1
    return CheckResult(
        "oracle_equivalence", worst <= 1e-9, worst, 1e-9, f"{count} detector runs"
    )


def _check_cholesky_closed_form(fault: float = 0.0, seed: int = 12) -> CheckResult:
    """Numerical factor of the expected shifted Gram vs the closed forms."""
    worst = 0.0
    qam = get_constellation("16qam")
    rng = np.random.default_rng(seed)
    for t in range(2, 31):
        s = np.exp(1j * np.pi / 4 * (2 * rng.integers(0, 4, t) + 1))
        r = ExpectedGram(s, 0.5).r_factor()
        d = r.diagonal().real + fault
        worst = max(worst, float(np.max(np.abs(d - expected_cholesky_diag_cm(t)))))
        for _ in range(20):
            s = qam.points[rng.integers(0, qam.size, t)]
            r = ExpectedGram(s, 0.5).r_factor()
            d = r.diagonal().real + fault
            worst = max(worst, float(np.max(np.abs(d - expected_cholesky_diag_ncm(s)))))
    return CheckResult("cholesky_closed_form", worst <= 1e-8, worst, 1e-8)


def gram_entry_samples(sigma_w_sq: float, n_rx: int, draws: int, rng, t_coh: int = 2):
    """Off-diagonal entry (1, 2) of X^H X / N over independent draws.

    The QPSK sequence is drawn once and held fixed; channel and noise are
    redrawn for every sample.
    """
    qpsk = get_constellation("qpsk")
    s = qpsk.points[rng.integers(0, qpsk.size, t_coh)]
    out = np.empty(draws, dtype=complex)
    step = max(1, 2_000_000 // (n_rx * t_coh))
    for a in range(0, draws, step):
        k = min(step, draws - a)
        h = complex_normal(rng, (k, n_rx))
        w = complex_normal(rng, (k, n_rx, t_coh), sigma_w_sq)
        x = h[:, :, None] * s.conj()[None, None, :] + w
        out[a:a + k] = np.einsum("kn,kn->k", x[:, :, 0].conj(), x[:, :, 1]) / n_rx
    return out


def _check_variance(draws: int, seed: int = 13) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for sigma_sq in (0.25, 1.0, 4.0):
        for n in (10, 100):
            z = gram_entry_samples(sigma_sq, n, draws, rng)
            emp = float(np.mean(np.abs(z - z.mean()) ** 2))
            worst = max(worst, abs(emp / gram_entry_variance(sigma_sq, n) - 1.0))
    return CheckResult("gram_entry_variance", worst <= 0.05, worst, 0.05, f"{draws} draws")


def _check_separation() -> list[CheckResult]:
    out = []
    worst_gap = math.inf
    worst_true = 0.0
    for name, t_max in (("bpsk", 5), ("qpsk", 5)):
        const = get_constellation(name)
        for t in range(2, t_max + 1):
            rep = divergence_separation(const, t)
            worst_gap = min(worst_gap, rep.min_wrong - lemma1_bound(const, t))
            worst_true = max(worst_true, rep.max_true)
    out.append(CheckResult("cm_separation", worst_gap >= -1e-9, worst_gap, -1e-9))
    rep = divergence_separation(get_constellation("16qam"), 3)
    worst_true = max(worst_true, rep.max_true)
    out.append(
        CheckResult("qam16_separation", rep.min_wrong >= lemma2_bound() - 1e-9,
                    rep.min_wrong, lemma2_bound())
    )
    out.append(CheckResult("true_sequence_zero_metric", worst_true <= 1e-10, worst_true, 1e-10))
    return out


def verify(level: str = "quick", *, inject_fault: float = 0.0) -> list[CheckResult]:
    """Run the self-validation suite.

    Parameters
    ----------
    level : {"quick", "full"}
        "full" uses larger sample sizes and adds the brute-force
        separation checks.
    inject_fault : float
        Offset added to the numerical Cholesky diagonal before the
        closed-form comparison (used to confirm the check can fail).
    """
    if level not in ("quick", "full"):
        raise ValueError("level must be 'quick' or 'full'")
    full = level == "full"
    results = [
        _check_oracle_equivalence(510 if full else 60),
        _check_cholesky_closed_form(inject_fault),
        _check_variance(100_000 if full else 20_000),
    ]
    if full:
        results.extend(_check_separation())
    return results
