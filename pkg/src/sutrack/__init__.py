"""Successive-update tracking of high-dimensional AR[1] processes over
bit-limited slotted channels."""

__version__ = "0.1.0"

from .arprocess import ProcessParams, Trajectory, generate, subsample, estimate_kappa  # noqa: E402
from .quantizer import FAILURE, QuantizerProfile, make_quantizer, profile_quantizer  # noqa: E402
from .theory import converse_accuracy, eval_delta0, eval_g, eval_gamma, select_p  # noqa: E402
from .tracking import QuantizerSpec, TrackingConfig, run_tracking  # noqa: E402

__all__ = [
    "FAILURE", "ProcessParams", "QuantizerProfile", "QuantizerSpec", "TrackingConfig", "Trajectory",
    "converse_accuracy", "estimate_kappa", "eval_delta0", "eval_g", "eval_gamma", "generate",
    "make_quantizer", "profile_quantizer", "run_tracking", "select_p", "subsample",
]
