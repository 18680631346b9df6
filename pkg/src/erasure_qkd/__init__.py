"""Seeded simulator of erasure-based quantum key distribution and its eavesdroppers."""

__version__ = "0.1.0"

from .analysis import (
    InfoMetrics,
    ProbabilityTable,
    Verdict,
    binary_entropy,
    decide,
    empirical_probability_table,
    i_alice_bob,
    mutual_information_eq1,
    qber,
)
from .experiment import ExperimentConfig, replay, run_experiment
from .protocol import SourcePort, Transcript, alice_prepare, bob_measure, interference_alarm_rate, sift
from .quantum_core import Detector, PolTag, PureState, RotatorSetting
from .session import SessionConfig, run_session

__all__ = [
    "Detector",
    "ExperimentConfig",
    "InfoMetrics",
    "PolTag",
    "ProbabilityTable",
    "PureState",
    "RotatorSetting",
    "SessionConfig",
    "SourcePort",
    "Transcript",
    "Verdict",
    "alice_prepare",
    "binary_entropy",
    "bob_measure",
    "decide",
    "empirical_probability_table",
    "i_alice_bob",
    "interference_alarm_rate",
    "mutual_information_eq1",
    "qber",
    "replay",
    "run_experiment",
    "run_session",
    "sift",
]
