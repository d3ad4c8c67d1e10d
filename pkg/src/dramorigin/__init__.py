"""Identify the origin class of a DRAM module from reduced-latency read errors."""

__version__ = "0.1.0"

from .errors import ConvergenceError, DomainError, FormatError
from .features import FEATURE_NAMES, extract_features, feature_order_fingerprint
from .pagedata import DataPattern, FlipMap, PageDump, compute_flip_map, expected_bit
from .protocol import VerificationPolicy, VerificationReport, compute_ppr, select_threshold, verify_module
from .svdd import SvddModel, decide, train, tune

__all__ = [
    "ConvergenceError",
    "DataPattern",
    "DomainError",
    "FEATURE_NAMES",
    "FlipMap",
    "FormatError",
    "PageDump",
    "SvddModel",
    "VerificationPolicy",
    "VerificationReport",
    "compute_flip_map",
    "compute_ppr",
    "decide",
    "expected_bit",
    "extract_features",
    "feature_order_fingerprint",
    "select_threshold",
    "train",
    "tune",
    "verify_module",
]
