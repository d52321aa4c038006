"""Micro-location from BLE beacon advertisements.

Submodules:

    codec     advertisement payload encoding and decoding
    model     RSSI samples, traces, CSV/JSON serialization
    ranging   RSSI and time-of-flight to distance conversion
    filters   static and variance-tracking Kalman smoothing
    position  proximity, lateration, angulation, TDoA, fingerprinting
    sim       deterministic advertisement simulator
    evaluate  ranging metrics and the ten-spot evaluation report
    cli       the ``microloc`` command line tool
"""

from .errors import MicrolocError
from .model import RssiSample, Trace, load_trace, save_trace
from .ranging import PathLossModel, distance_to_rssi, rssi_to_distance
from .filters import (
    KalmanParams,
    KalmanState,
    default_params,
    smooth_trace,
    smooth_trace_dynamic,
)
from .position import (
    Anchor,
    Method,
    PositionEstimate,
    Zone,
    classify_proximity,
    fingerprint_build,
    fingerprint_locate,
    proximity_region,
    tdoa_locate,
    triangulate,
    trilaterate,
)
from .codec import BeaconFrame, decode, encode, measured_power
from .sim import Scenario, SimConfig, ranging_experiment, simulate
from .evaluate import ErrorReport, accuracy, error_histogram, precision, ranging_report

__version__ = "0.1.0"

__all__ = [
    "MicrolocError",
    "RssiSample",
    "Trace",
    "load_trace",
    "save_trace",
    "PathLossModel",
    "rssi_to_distance",
    "distance_to_rssi",
    "KalmanParams",
    "KalmanState",
    "default_params",
    "smooth_trace",
    "smooth_trace_dynamic",
    "Anchor",
    "Method",
    "Zone",
    "PositionEstimate",
    "classify_proximity",
    "proximity_region",
    "trilaterate",
    "triangulate",
    "tdoa_locate",
    "fingerprint_build",
    "fingerprint_locate",
    "BeaconFrame",
    "decode",
    "encode",
    "measured_power",
    "SimConfig",
    "Scenario",
    "simulate",
    "ranging_experiment",
    "ErrorReport",
    "accuracy",
    "precision",
    "error_histogram",
    "ranging_report",
    "__version__",
]
