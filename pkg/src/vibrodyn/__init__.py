"""Driven exciton-vibron dynamics in the polaron eigenbasis."""

__version__ = "0.1.0"

from .fockbasis import FranckCondonTable, TruncationError, build_fc_table, franck_condon, max_overlap
from .model import PumpSchedule, SystemParams, build_basis, model_fc_table
from .liouvillian import DissipatorConfig, assemble
from .propagate import evolve_density, evolve_pure, initial_state, simulate
from .observables import detect_collapse_revival, envelope, expval, find_peaks, spectrum
from .analysis import estimate_collapse_time, sweep

__all__ = [
    "FranckCondonTable", "TruncationError", "build_fc_table", "franck_condon", "max_overlap",
    "PumpSchedule", "SystemParams", "build_basis", "model_fc_table",
    "DissipatorConfig", "assemble",
    "evolve_density", "evolve_pure", "initial_state", "simulate",
    "detect_collapse_revival", "envelope", "expval", "find_peaks", "spectrum",
    "estimate_collapse_time", "sweep",
]
