"""Bundled desk-scale experiment sets, one per published figure.

Figure numbers follow the publication (figure 1 is the search-tree
illustration and has no experiment). Trial counts are small defaults
meant for a laptop; pass a larger ``trials`` for tighter error bars.
"""

from __future__ import annotations

from .harness import ExperimentSpec

__all__ = ["FIGURES", "figure_specs", "complexity_specs"]


def _snr(lo, hi, step=1.0):
    n = int(round((hi - lo) / step)) + 1
    return [lo + k * step for k in range(n)]


def _ser_set(fig, const, t, n_rx, snr, detectors, trials, seed, **extra):
    return [
        dict(name=fig, detector=d, constellation=const, n_rx=n_rx, t_coh=[t],
             snr_db=snr, trials=trials, seed=seed, **extra)
        for d in detectors
    ]


FIGURES = {
    "fig2": (
        "QPSK T=8: ML vs iterative / non-iterative LS",
        _ser_set("fig2", "qpsk", 8, [10, 50, 100], _snr(-12, -2), ["tsa", "ls_iter", "ls"], 2000, 2),
    ),
    "fig3": (
        "QPSK T=20: ML vs iterative / non-iterative LS",
        _ser_set("fig3", "qpsk", 20, [50, 100], _snr(-12, -2), ["tsa", "ls_iter", "ls"], 1000, 3),
    ),
    "fig4": (
        "QPSK T=8: ML vs iterative / non-iterative MMSE",
        _ser_set("fig4", "qpsk", 8, [10, 50, 100], _snr(-12, -2), ["tsa", "mmse_iter", "mmse"], 2000, 4),
    ),
    "fig5": (
        "QPSK T=20: ML vs iterative / non-iterative MMSE",
        _ser_set("fig5", "qpsk", 20, [50, 100], _snr(-12, -2), ["tsa", "mmse_iter", "mmse"], 1000, 5),
    ),
    "fig6": (
        "QPSK T=20: visited nodes vs SNR, sphere (r^2=T/3) and TSA",
        _ser_set("fig6", "qpsk", 20, [50, 100, 500], _snr(-8, 0, 2), ["sphere_cm", "tsa"], 200, 6),
    ),
    "fig7": (
        "16-QAM T=12: ML vs iterative MMSE",
        _ser_set("fig7", "16qam", 12, [100, 500], _snr(-6, 4), ["tsa", "mmse_iter"], 500, 7),
    ),
    "fig8": (
        "16-QAM T=12: visited nodes vs SNR, sphere (r^2=2/45) and TSA",
        _ser_set("fig8", "16qam", 12, [500], _snr(-4, 8, 2), ["sphere_ncm", "tsa"], 100, 8),
    ),
    "fig9": (
        "4-user MIMO QPSK T=20: ML-augmented vs iterative / non-iterative MMSE",
        _ser_set("fig9", "qpsk", 20, [50, 100], _snr(-12, -4), ["mimo_ml", "mimo_mmse_iter", "mimo_mmse"],
                 500, 9, m_users=4),
    ),
}


def figure_specs(fig: str, trials: int | None = None) -> list[ExperimentSpec]:
    """Experiment specs of a bundled figure, optionally with new trial counts."""
    try:
        _, dicts = FIGURES[fig]
    except KeyError:
        raise KeyError(f"unknown figure {fig!r}; expected one of {sorted(FIGURES)}") from None
    specs = []
    for d in dicts:
        d = dict(d)
        if trials is not None:
            d["trials"] = trials
        specs.append(ExperimentSpec.from_dict(d))
    return specs


def complexity_specs(
    n_values=(10, 50, 100, 500),
    snr_db=-4.0,
    t_coh=20,
    constellation="qpsk",
    trials=200,
    seed=1,
) -> list[ExperimentSpec]:
    """Node-count sweep over N for the sphere decoder and the TSA."""
    sphere = "sphere_cm" if constellation.lower() in ("bpsk", "qpsk") else "sphere_ncm"
    return [
        ExperimentSpec(
            name="complexity", detector=d, constellation=constellation,
            n_rx=tuple(n_values), t_coh=(t_coh,), snr_db=(snr_db,), trials=trials, seed=seed,
        )
        for d in (sphere, "tsa")
    ]
