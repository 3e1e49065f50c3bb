"""Stability statistics for noisy quantum devices.

Metrics (initialization/gate fidelity, duty cycle, addressability) are
computed from calibration records and readout bitstreams, then compared
across time, register locations and devices with the Hellinger distance.
"""
from devstab.distance import BinningSpec, bhattacharyya, build_histograms, hellinger, hellinger_samples
from devstab.ingest import (
    parse_calibration_file,
    parse_readout_file,
    parse_series_file,
    segment_shots,
    write_calibration_file,
    write_readout_file,
    write_series_file,
)
from devstab.metrics import (
    addressability,
    addressability_series,
    duty_cycle,
    empirical_joint,
    gate_fidelity,
    init_fidelity,
    metric_series_from_calibration,
    rb_fit,
)
from devstab.model import (
    CalibrationRecord,
    DeviceTopology,
    DistanceMatrix,
    Duration,
    Histogram,
    MetricKind,
    MetricSeries,
    PreparedState,
    RBDecayData,
    ReadoutMatrix,
    all_register_pairs,
    load_topology,
    nearest_neighbor_pairs,
)
from devstab.stability import interdevice_stability, spatial_stability, temporal_stability
from devstab.synth import DriftModel, PairCorrelationModel, ParameterDrift, generate_calibration, generate_readout

__version__ = "0.1.0"

__all__ = [
    "parse_calibration_file",
    "parse_readout_file",
    "parse_series_file",
    "segment_shots",
    "write_calibration_file",
    "write_readout_file",
    "write_series_file",
    "addressability",
    "addressability_series",
    "duty_cycle",
    "empirical_joint",
    "gate_fidelity",
    "init_fidelity",
    "metric_series_from_calibration",
    "rb_fit",
    "CalibrationRecord",
    "DeviceTopology",
    "DistanceMatrix",
    "Duration",
    "Histogram",
    "MetricKind",
    "MetricSeries",
    "PreparedState",
    "RBDecayData",
    "ReadoutMatrix",
    "all_register_pairs",
    "load_topology",
    "nearest_neighbor_pairs",
    "BinningSpec",
    "bhattacharyya",
    "build_histograms",
    "hellinger",
    "hellinger_samples",
    "interdevice_stability",
    "spatial_stability",
    "temporal_stability",
    "DriftModel",
    "PairCorrelationModel",
    "ParameterDrift",
    "generate_calibration",
    "generate_readout",
]
