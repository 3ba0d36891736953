"""LoRa chirp-spread-spectrum simulator with soil-moisture and presence sensing."""
from .channel import (ChannelScene, HumanTrajectory, Impairments, PathSpec, SoilProfile, apply_scene,
                      human_trajectory, impair, permittivity_of_moisture, propagate, soil_phase_shift)
from .errors import (CalibrationError, ConfigError, DomainError, EstimationError, FrameAlignmentError,
                     LoraIsacError, OutOfRangeError, SamplingRateError, ScenarioError, ScheduleInfeasibleError)
from .framing import DecodedFrame, FrameLayout, SyncResult, build_frame, decode_frame, detect_preamble
from .iqfile import read_iq, write_iq
from .isac_rx import (PhaseEstimate, RatioSeries, antenna_division, estimate_interantenna_phase,
                      receive_decode)
from .isac_tx import (INDOOR, OUTDOOR, Emission, NodeConfig, duty_cycle_interval, emit_null_frame,
                      emit_switched_frame, max_window_duty_cycle, min_legal_interval, schedule_transmissions)
from .netsim import (AirtimeLedger, NetworkScenario, SensingReport, assign_channels_and_slots, run_network)
from .pipeline import presence_episode, receive_pair, room_scene, soil_packet, soil_scene
from .phy import DOWN, UP, ChirpParams, IqBuffer, dechirp, demod_symbol, gen_chirp
from .sensing import (MoistureReading, PresenceState, calibrate_threshold, detect_presence,
                      moisture_from_phase)

__version__ = "0.1.0"

__all__ = [
    "ChannelScene", "HumanTrajectory", "Impairments", "PathSpec", "SoilProfile", "apply_scene",
    "human_trajectory", "impair", "permittivity_of_moisture", "propagate", "soil_phase_shift",
    "CalibrationError", "ConfigError", "DomainError", "EstimationError", "FrameAlignmentError",
    "LoraIsacError", "OutOfRangeError", "SamplingRateError", "ScenarioError",
    "ScheduleInfeasibleError", "DecodedFrame", "FrameLayout", "SyncResult", "build_frame",
    "decode_frame", "detect_preamble", "read_iq", "write_iq", "PhaseEstimate", "RatioSeries",
    "antenna_division", "estimate_interantenna_phase", "receive_decode", "INDOOR", "OUTDOOR",
    "Emission", "NodeConfig", "duty_cycle_interval", "emit_null_frame", "emit_switched_frame",
    "max_window_duty_cycle", "min_legal_interval", "schedule_transmissions", "AirtimeLedger",
    "NetworkScenario", "SensingReport", "assign_channels_and_slots", "run_network", "DOWN", "UP",
    "ChirpParams", "IqBuffer", "dechirp", "demod_symbol", "gen_chirp", "MoistureReading",
    "PresenceState", "calibrate_threshold", "detect_presence", "moisture_from_phase",
    "presence_episode", "receive_pair", "room_scene", "soil_packet", "soil_scene",
]
