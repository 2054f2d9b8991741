"""Polar codes with CRC-aided list decoding and tree pruning."""
from .channel import BEC, BIAWGN, ChannelObservation, ebn0_to_sigma, frame_streams, transmit
from .codec import (assemble_source, crc_append, crc_verify, extract_info, make_info_bits,
                    polar_encode)
from .construction import (CRC16_CCITT_FALSE, CodeSpec, CRCDef, ReliabilityKind,
                           ReliabilityProfile, construct, evaluate_reliability_bec,
                           evaluate_reliability_ga, select_information_set)
from .decoder import ComplexityCounters, DecodeOutcome, ListDecoder, Status, decode_sc, decode_scl
from .errors import CalibrationError, ConfigurationError, UnsupportedConstructionError
from .harness import SimConfig, emit_report, make_frame, run_calibration, run_fer_sweep
from .pruning import Dynamic, MaxRatioBaseline, Off, StaticTable, llr_budget

__version__ = "0.1.0"

__all__ = [
    "BEC",
    "BIAWGN",
    "ChannelObservation",
    "ebn0_to_sigma",
    "frame_streams",
    "transmit",
    "assemble_source",
    "crc_append",
    "crc_verify",
    "extract_info",
    "make_info_bits",
    "polar_encode",
    "CRC16_CCITT_FALSE",
    "CodeSpec",
    "CRCDef",
    "ReliabilityKind",
    "ReliabilityProfile",
    "construct",
    "evaluate_reliability_bec",
    "evaluate_reliability_ga",
    "select_information_set",
    "ComplexityCounters",
    "DecodeOutcome",
    "ListDecoder",
    "Status",
    "decode_sc",
    "decode_scl",
    "CalibrationError",
    "ConfigurationError",
    "UnsupportedConstructionError",
    "SimConfig",
    "emit_report",
    "make_frame",
    "run_calibration",
    "run_fer_sweep",
    "Dynamic",
    "MaxRatioBaseline",
    "Off",
    "StaticTable",
    "llr_budget",
]
