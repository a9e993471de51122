"""Event-by-event CHSH simulator for local hidden-variable apparatuses.

Shows how coincidence-window matching, as opposed to pairing detections by
their emitting bullet, changes the measured CHSH value S.
"""
from .coincidence import ComboTally, MatchResult, match, pair_by_ground_truth, tally
from .core import (
    DetectionRecord,
    NoiseParams,
    Pmap,
    RecordStream,
    Side,
    SimConfig,
    Strategy,
    TimingModel,
    spin,
    validate_config,
)
from .engine import RunOutput, replay_settings, run
from .estimator import ChshEstimate, estimate, sweep
from .reference import oracle_app1, oracle_app2, p_calibrated, p_eq3, p_eq4, qm_S

__version__ = "0.1.0"

__all__ = [
    "ChshEstimate", "ComboTally", "DetectionRecord", "MatchResult", "NoiseParams", "Pmap",
    "RecordStream", "RunOutput", "Side", "SimConfig", "Strategy", "TimingModel", "estimate",
    "match", "oracle_app1", "oracle_app2", "p_calibrated", "p_eq3", "p_eq4",
    "pair_by_ground_truth", "qm_S", "replay_settings", "run", "spin", "sweep", "tally",
    "validate_config",
]
