"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` (about 45 minutes on
one core). The Monte-Carlo criteria (5, 7, 8) dominate the runtime.
"""

from __future__ import annotations

import json
import math

import numpy as np
import pytest

from ncsimo.channel import ChannelConfig, draw_block
from ncsimo.cli import main as cli_main
from ncsimo.constellations import get_constellation
from ncsimo.detectors import (
    exhaustive_detect,
    objective,
    prepare,
    sphere_detect_cm,
    sphere_detect_ncm,
    tsa_detect,
)
from ncsimo.harness import ExperimentSpec, gram_entry_samples, run, run_trials, snr_at_ser
from ncsimo.oracles import (
    ExpectedGram,
    divergence_separation,
    expected_cholesky_diag_cm,
    expected_cholesky_diag_ncm,
    gram_entry_variance,
    lemma1_bound,
    lemma2_bound,
    nodes_within,
)

pytestmark = pytest.mark.slow


@pytest.fixture
def report(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {k}: {'PASS' if ok else 'FAIL'}  {detail}")

    return emit


def _spec(**kw):
    return ExperimentSpec.from_dict(kw)


# ---------------------------------------------------------------------------
# 1. exact detectors reach the brute-force optimum


def test_criterion_1_oracle_equivalence(report):
    cases = [("bpsk", t) for t in range(3, 8)] + [("qpsk", t) for t in range(3, 8)]
    cases += [("16qam", 3), ("16qam", 4)]
    snrs = (-10.0, 0.0, 10.0)
    per_case = 15
    rng = np.random.default_rng(2024)
    worst, blocks = 0.0, 0
    for name, t in cases:
        const = get_constellation(name)
        for snr in snrs:
            for _ in range(per_case):
                pilot = int(rng.integers(const.size))
                cfg = ChannelConfig(int(rng.integers(1, 50)), t, snr, const, pilot)
                g = prepare(draw_block(cfg, rng).x)
                modes = ("cm", "ncm") if const.is_constant_modulus else ("ncm",)
                for mode in modes:
                    norm = mode == "ncm"
                    ref = exhaustive_detect(g, const, pilot, mode)
                    ref_val = objective(g.shifted, const.points[ref.s_hat], normalized=norm)
                    sphere = sphere_detect_cm if mode == "cm" else sphere_detect_ncm
                    for out in (sphere(g, const, pilot), tsa_detect(g, const, pilot, mode)):
                        val = objective(g.shifted, const.points[out.s_hat], normalized=norm)
                        worst = max(worst, (val - ref_val) / max(abs(ref_val), 1e-300))
                blocks += 1
    ok = blocks >= 500 and worst <= 1e-9
    report(1, ok, f"{blocks} blocks, worst relative excess {worst:.3g} (limit 1e-9)")
    assert ok


# ---------------------------------------------------------------------------
# 2. numerical factor of the expected shifted Gram matches the closed forms


def test_criterion_2_closed_form_cholesky(report):
    rng = np.random.default_rng(7)
    qam = get_constellation("16qam")
    qpsk = get_constellation("qpsk")
    worst = 0.0
    for t in range(2, 31):
        s = qpsk.points[rng.integers(0, 4, t)]
        d = ExpectedGram(s, 1.0).r_factor().diagonal().real
        worst = max(worst, np.max(np.abs(d - expected_cholesky_diag_cm(t))))
        for _ in range(20):
            s = qam.points[rng.integers(0, 16, t)]
            d = ExpectedGram(s, 1.0).r_factor().diagonal().real
            worst = max(worst, np.max(np.abs(d - expected_cholesky_diag_ncm(s))))
    ok = worst <= 1e-8
    report(2, ok, f"max |diag error| {worst:.3g} over T=2..30 (limit 1e-8)")
    assert ok


# ---------------------------------------------------------------------------
# 3. variance of an off-diagonal Gram entry


def test_criterion_3_gram_variance(report):
    rng = np.random.default_rng(3)
    worst, parts = 0.0, []
    for sigma_sq in (0.25, 1.0, 4.0):
        for n in (10, 100):
            z = gram_entry_samples(sigma_sq, n, 100_000, rng)
            emp = float(np.mean(np.abs(z - z.mean()) ** 2))
            rel = abs(emp / gram_entry_variance(sigma_sq, n) - 1.0)
            worst = max(worst, rel)
            parts.append(f"{sigma_sq}/{n}:{rel:.3f}")
    ok = worst <= 0.05
    report(3, ok, f"worst relative deviation {worst:.4f} (limit 0.05) [{' '.join(parts)}]")
    assert ok


# ---------------------------------------------------------------------------
# 4. separation of wrong sequences under the expected Gram


def test_criterion_4_radius_bounds(report):
    gap_cm, max_true = math.inf, 0.0
    for name in ("bpsk", "qpsk"):
        const = get_constellation(name)
        for t in range(2, 6):
            rep = divergence_separation(const, t)
            gap_cm = min(gap_cm, rep.min_wrong - lemma1_bound(const, t))
            max_true = max(max_true, rep.max_true)
    rep = divergence_separation(get_constellation("16qam"), 3)
    max_true = max(max_true, rep.max_true)
    ok = gap_cm >= -1e-9 and rep.min_wrong >= lemma2_bound() - 1e-9 and max_true <= 1e-10
    report(
        4,
        ok,
        f"cm min(metric - T*dmin/2) {gap_cm:.3g}; 16qam min normalized {rep.min_wrong:.4f} "
        f">= 2/45; true-sequence max {max_true:.2g}",
    )
    assert ok


# ---------------------------------------------------------------------------
# 5 and 6. visited nodes: convergence in N and TSA dominance

QPSK_N = (10, 50, 100, 500)
QAM_SNRS = (-4.0, 0.0, 4.0)


@pytest.fixture(scope="module")
def complexity_runs():
    def both(const, sphere, n_rx, t, snr, trials, seed, radius=None):
        out = {}
        for det in (sphere, "tsa"):
            spec = _spec(name="c5", detector=det, constellation=const, N=list(n_rx), T=[t],
                         snr_db=list(snr), trials=trials, seed=seed, radius_override=radius)
            out[det] = run_trials(spec)
        return out

    qpsk = both("qpsk", "sphere_cm", QPSK_N, 20, [-4.0], 200, 5, radius=20 / 3)
    qam = both("16qam", "sphere_ncm", [500], 12, QAM_SNRS, 200, 6, radius=2 / 45)
    return qpsk, qam


def test_criterion_5_complexity(report, complexity_runs):
    qpsk, qam = complexity_runs
    sphere = [stats[:, 2].mean() for _, stats, _ in qpsk["sphere_cm"]]
    tsa = [stats[:, 2].mean() for _, stats, _ in qpsk["tsa"]]
    qam_tsa = [stats[:, 2].mean() for _, stats, _ in qam["tsa"]]
    dec = all(a > b for a, b in zip(sphere, sphere[1:])) and all(a > b for a, b in zip(tsa, tsa[1:]))
    ok = 72 <= sphere[-1] <= 80 and 72 <= tsa[-1] <= 80 and dec
    ok = ok and all(168 <= v <= 184 for v in qam_tsa)
    fmt = lambda v: "/".join(f"{x:.1f}" for x in v)  # noqa: E731
    report(
        5,
        ok,
        f"QPSK N={QPSK_N} sphere {fmt(sphere)} tsa {fmt(tsa)} (N=500 in [72,80], decreasing); "
        f"16QAM N=500 SNR={QAM_SNRS} tsa {fmt(qam_tsa)} (in [168,184])",
    )
    assert ok


def test_criterion_6_tsa_dominance(report, complexity_runs):
    qpsk, qam = complexity_runs
    violations, blocks = 0, 0
    for runs, sphere in ((qpsk, "sphere_cm"), (qam, "sphere_ncm")):
        for (_, s_stats, _), (_, t_stats, _) in zip(runs[sphere], runs["tsa"]):
            violations += int(np.sum(t_stats[:, 2] > s_stats[:, 2]))
            blocks += t_stats.shape[0]

    # (|Omega|+1) * l bound on small trees
    bound_fail, small = 0, 0
    rng = np.random.default_rng(61)
    for name, t, mode in (("bpsk", 5, "cm"), ("qpsk", 4, "cm"), ("qpsk", 5, "cm"), ("16qam", 3, "ncm")):
        const = get_constellation(name)
        for snr in (-10.0, 0.0, 10.0):
            for _ in range(10):
                cfg = ChannelConfig(int(rng.integers(1, 20)), t, snr, const, 0)
                g = prepare(draw_block(cfg, rng).x)
                out = tsa_detect(g, const, 0, mode)
                l_count = nodes_within(g.r_factor, const, 0, out.metric, normalized=mode == "ncm")
                bound_fail += out.visited_nodes > (const.size + 1) * l_count
                small += 1
    ok = violations == 0 and bound_fail == 0
    report(6, ok, f"tsa > sphere on {violations}/{blocks} blocks; "
                  f"(|Omega|+1)*l bound violated on {bound_fail}/{small} small instances")
    assert ok


# ---------------------------------------------------------------------------
# 7. SER gaps at 1e-2 for single-user QPSK and 16-QAM


def _curves(const, t, n, snrs, detectors, trials, seed, **extra):
    out = {}
    for det in detectors:
        spec = _spec(name="c7", detector=det, constellation=const, N=[n], T=[t], snr_db=list(snrs),
                     trials=trials, seed=seed, **extra)
        out[det] = run(spec)
    return out


def _ordered(curves, order):
    """Each curve at or below the next one within two standard errors."""
    for better, worse in zip(order, order[1:]):
        for a, b in zip(curves[better], curves[worse]):
            if a.ser > b.ser + 2.0 * math.hypot(a.ser_stderr, b.ser_stderr):
                return False
    return True


def _crossing(rows):
    return snr_at_ser([r.snr_db for r in rows], [r.ser for r in rows], 1e-2)


def test_criterion_7_ser_gap(report):
    qpsk = _curves("qpsk", 8, 100, np.arange(-10.0, -2.0), ["tsa", "mmse_iter", "mmse"], 20_000, 71)
    ml, it, non = (_crossing(qpsk[d]) for d in ("tsa", "mmse_iter", "mmse"))
    gap_it, gap_non = it - ml, non - ml
    qam = _curves("16qam", 12, 100, np.arange(-5.0, 4.0), ["tsa", "mmse_iter"], 20_000, 72)
    q_ml, q_it = _crossing(qam["tsa"]), _crossing(qam["mmse_iter"])
    gap_q = q_it - q_ml

    ok_qpsk = abs(gap_it - 2.0) <= 1.0 and abs(gap_non - 3.0) <= 1.0
    ok_order = _ordered(qpsk, ["tsa", "mmse_iter", "mmse"]) and _ordered(qam, ["tsa", "mmse_iter"])
    ok_qam = abs(gap_q - 5.0) <= 1.5
    ok = ok_qpsk and ok_qam and ok_order
    report(
        7,
        ok,
        f"QPSK gap vs iterative {gap_it:.2f} dB (2+-1), vs non-iterative {gap_non:.2f} dB (3+-1); "
        f"16QAM gap vs iterative MMSE {gap_q:.2f} dB (5+-1.5); ordering {'ok' if ok_order else 'violated'}",
    )
    assert ok_order
    assert ok_qpsk
    assert ok_qam


# ---------------------------------------------------------------------------
# 8. multi-user extension


def test_criterion_8_mimo(report):
    curves = _curves("qpsk", 20, 100, np.arange(-10.0, -4.0), ["mimo_ml", "mimo_mmse_iter", "mimo_mmse"],
                     10_000, 81, m_users=4)
    ml, it, non = (_crossing(curves[d]) for d in ("mimo_ml", "mimo_mmse_iter", "mimo_mmse"))
    gap_it, gap_non = it - ml, non - ml
    ok = abs(gap_it - 1.5) <= 1.0 and abs(gap_non - 2.0) <= 1.0
    report(8, ok, f"gap vs iterative MMSE {gap_it:.2f} dB (1.5+-1), "
                  f"vs non-iterative MMSE {gap_non:.2f} dB (2+-1)")
    assert ok


# ---------------------------------------------------------------------------
# 9. simulate is byte-reproducible across worker counts


def test_criterion_9_determinism(report, tmp_path):
    spec = dict(name="det", detector="sphere_cm", constellation="qpsk", N=[20, 100], T=[10],
                snr_db=[-6, -2], trials=60, seed=2**63 + 5)
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    rc_a = cli_main(["simulate", str(path), "--out", str(a), "--workers", "1"])
    rc_b = cli_main(["simulate", str(path), "--out", str(b), "--workers", "3"])
    ok = rc_a == rc_b == 0 and a.read_bytes() == b.read_bytes()
    report(9, ok, f"1 vs 3 workers: {'identical' if ok else 'different'} CSV bytes")
    assert ok


if __name__ == "__main__":  # pragma: no cover
    import sys

    sys.exit(pytest.main([__file__, "-v"]))
