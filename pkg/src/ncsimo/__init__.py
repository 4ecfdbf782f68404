"""Exact joint ML channel estimation and non-coherent detection for
single-user, many-antenna uplinks, with baselines and a simulation harness."""

from .channel import ChannelConfig, ReceivedBlock, draw_block, ml_channel_estimate, residual_metric
from .constellations import Constellation, get_constellation, make_16qam, make_bpsk, make_qpsk
from .detectors import (
    DetectionOutcome,
    GramDecomposition,
    exhaustive_detect,
    objective,
    prepare,
    sphere_detect,
    sphere_detect_cm,
    sphere_detect_ncm,
    tsa_detect,
)
from .harness import ExperimentSpec, ResultRow, emit_csv, run, verify

__version__ = "0.1.0"

__all__ = [
    "ChannelConfig",
    "ReceivedBlock",
    "draw_block",
    "ml_channel_estimate",
    "residual_metric",
    "Constellation",
    "get_constellation",
    "make_bpsk",
    "make_qpsk",
    "make_16qam",
    "DetectionOutcome",
    "GramDecomposition",
    "prepare",
    "sphere_detect",
    "sphere_detect_cm",
    "sphere_detect_ncm",
    "tsa_detect",
    "exhaustive_detect",
    "objective",
    "ExperimentSpec",
    "ResultRow",
    "run",
    "emit_csv",
    "verify",
]
