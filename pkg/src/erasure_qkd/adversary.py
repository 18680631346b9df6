"""
Eavesdropper models for the erasure protocol.

Eve copies Bob's apparatus: she picks at random whether to apply Bob's
rotators, recombines the arms on a beam splitter and sees which port fires.
In the intercept-resend attack she then forwards one of Alice's legal states
according to a :class:`ResendRule`; in the detector-blinding attack she
forwards a bright classical pulse whose mode decides which of Bob's blinded
detectors, if any, crosses threshold.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import IntEnum
from typing import Mapping, Optional

import numpy as np

from .protocol import (
    BOB_ROTATORS,
    NO_VALUE,
    STATE_NAMES,
    SourcePort,
    Transcript,
    bob_settings,
    identify_state,
    legal_states,
)
from .quantum_core import (
    Detector,
    PolTag,
    PureState,
    apply_rotators,
    detector_distribution,
    draw,
    joint_detection_distribution,
    snap_probabilities,
)

R_LABELS = ("0", "1", "0'", "1'")


class EveBasis(IntEnum):
    NO_ROTATION = 0
    ROTATION = 1


class EvePort(IntEnum):
    """Eve's beam-splitter outputs; UPPER is the analogue of Bob's D1."""

    UPPER = 0
    LOWER = 1


# r-label index for a top-source photon, keyed by (basis, port)
_TOP_LABEL = {
    (EveBasis.NO_ROTATION, EvePort.LOWER): 0,
    (EveBasis.NO_ROTATION, EvePort.UPPER): 1,
    (EveBasis.ROTATION, EvePort.UPPER): 2,
    (EveBasis.ROTATION, EvePort.LOWER): 3,
}


@dataclass(frozen=True)
class EveOutcomeLabel:
    basis: EveBasis
    port: EvePort

    def label_index(self, source: SourcePort = SourcePort.S1_TOP) -> int:
        port = self.port
        if SourcePort(source) is SourcePort.S2_BOTTOM:
            port = EvePort(1 - port)
        return _TOP_LABEL[(EveBasis(self.basis), EvePort(port))]

    def label(self, source: SourcePort = SourcePort.S1_TOP) -> str:
        """The r label (0, 1, 0', 1') once the source port is public."""
        return R_LABELS[self.label_index(source)]

    def bit(self, source: SourcePort = SourcePort.S1_TOP) -> int:
        """Eve's best guess of Alice's bit given the announced source."""
        return self.label_index(source) % 2


def label_indices(basis: np.ndarray, port: np.ndarray, source: np.ndarray) -> np.ndarray:
    """Vectorised :meth:`EveOutcomeLabel.label_index`."""
    lut = np.empty((2, 2), dtype=np.int8)
    for (b, p), k in _TOP_LABEL.items():
        lut[b, p] = k
    mirrored = np.where(np.asarray(source) == SourcePort.S2_BOTTOM, 1 - port, port)
    return lut[basis, mirrored]


def parse_eve_note(note: str) -> tuple[int, int]:
    if not note:
        return NO_VALUE, NO_VALUE
    basis, port = note.split("/")
    return int(EveBasis[basis.upper()]), int(EvePort[port.upper()])


def eve_port_distribution(state: PureState, basis: EveBasis) -> tuple[float, float]:
    """(P(upper), P(lower)) at Eve's beam splitter."""
    if EveBasis(basis) is EveBasis.ROTATION:
        state = apply_rotators(state, BOB_ROTATORS)
    return detector_distribution(state)


def eve_measure(
    state: PureState, rng: np.random.Generator, basis: Optional[EveBasis] = None
) -> EveOutcomeLabel:
    if basis is None:
        basis = EveBasis(int(rng.integers(2)))
    probs = snap_probabilities(eve_port_distribution(state, basis))
    return EveOutcomeLabel(EveBasis(basis), EvePort(draw(probs, rng.random())))


@dataclass(frozen=True)
class ResendRule:
    """Which legal state Eve forwards for each of her four outcomes."""

    table: Mapping[tuple[EveBasis, EvePort], PureState]

    def __post_init__(self):
        keys = {(EveBasis(b), EvePort(p)) for b, p in self.table}
        if len(self.table) != 4 or len(keys) != 4:
            raise ValueError("a resend rule needs exactly one entry per (basis, port)")
        for state in self.table.values():
            identify_state(state)

    @classmethod
    def default(cls) -> "ResendRule":
        s = legal_states()
        return cls(
            {
                (EveBasis.NO_ROTATION, EvePort.LOWER): s["unentangled_top"],
                (EveBasis.NO_ROTATION, EvePort.UPPER): s["unentangled_bottom"],
                (EveBasis.ROTATION, EvePort.LOWER): s["entangled_top"],
                (EveBasis.ROTATION, EvePort.UPPER): s["entangled_bottom"],
            }
        )

    def resend(self, outcome: EveOutcomeLabel) -> PureState:
        return self.table[(EveBasis(outcome.basis), EvePort(outcome.port))]

    def guess(self, outcome: EveOutcomeLabel) -> tuple[int, SourcePort]:
        """(bit, source) of the legal state Eve believes Alice sent."""
        k = identify_state(self.resend(outcome))
        return k % 2, SourcePort(k // 2)

    def index_table(self) -> np.ndarray:
        """``[basis, port] -> legal state index``."""
        out = np.empty((2, 2), dtype=np.int8)
        for (b, p), state in self.table.items():
            out[b, p] = identify_state(state)
        return out

    @classmethod
    def from_file(cls, path) -> "ResendRule":
        """Read a ``basis,port,state`` delimited table (state given by legal-state name)."""
        s = legal_states()
        table = {}
        with open(path, newline="") as fh:
            rows = (line for line in fh if not line.startswith("#"))
            for lineno, row in enumerate(csv.DictReader(rows), start=2):
                try:
                    key = (EveBasis[row["basis"].upper()], EvePort[row["port"].upper()])
                    table[key] = s[row["state"]]
                except (KeyError, AttributeError) as exc:
                    raise ValueError(f"{path}: bad resend rule row {lineno}: {row}") from exc
        return cls(table)

    def to_file(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("# erasure-qkd resend-rule v1\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["basis", "port", "state"])
            for (b, p), state in sorted(self.table.items()):
                w.writerow([EveBasis(b).name.lower(), EvePort(p).name.lower(), STATE_NAMES[identify_state(state)]])


def intercept_resend(
    state: PureState,
    rng: np.random.Generator,
    rule: Optional[ResendRule] = None,
    basis: Optional[EveBasis] = None,
) -> PureState:
    rule = rule or ResendRule.default()
    return rule.resend(eve_measure(state, rng, basis=basis))


# (guessed bit, guessed source) -> mode of the faked pulse
BLINDING_MODES = {
    (0, SourcePort.S1_TOP): "entangled_bottom",
    (0, SourcePort.S2_BOTTOM): "entangled_top",
    (1, SourcePort.S1_TOP): "unentangled_bottom",
    (1, SourcePort.S2_BOTTOM): "unentangled_top",
}


@dataclass(frozen=True)
class BlindingPulse:
    """A bright classical pulse; ``mode`` fixes how its intensity is routed at Bob."""

    mode: PureState
    intensity: float = 1.0

    def routing(self, bob_bit: int, check_mode: bool = False) -> np.ndarray:
        """Intensity fractions at Bob's detectors: (D1, D2), or the four (D, +-45) in check mode."""
        joint = joint_detection_distribution(apply_rotators(self.mode, bob_settings(bob_bit)))
        joint = snap_probabilities(joint)
        return joint if check_mode else joint.reshape(2, 2).sum(axis=1)


def eve_blinding_pulse(outcome: EveOutcomeLabel, rule: Optional[ResendRule] = None) -> BlindingPulse:
    rule = rule or ResendRule.default()
    return BlindingPulse(legal_states()[BLINDING_MODES[rule.guess(outcome)]])


@dataclass(frozen=True)
class BlindedDetectorModel:
    """Blinded detectors click only on intensity fractions at or above ``threshold``."""

    threshold: float = 0.9

    def __post_init__(self):
        if not 0.5 < self.threshold <= 1.0:
            raise ValueError(f"blinding threshold must lie in (0.5, 1], got {self.threshold}")

    def fire(self, fractions: np.ndarray) -> Optional[int]:
        over = np.flatnonzero(np.asarray(fractions) >= self.threshold)
        if len(over) > 1:
            raise AssertionError(f"double click at fractions {fractions}")
        return int(over[0]) if len(over) else None


def blinded_response(
    pulse: BlindingPulse,
    bob_bit: int,
    model: Optional[BlindedDetectorModel] = None,
    check_mode: bool = False,
):
    """Which blinded detector fires (``None`` for no click)."""
    model = model or BlindedDetectorModel()
    k = model.fire(pulse.routing(bob_bit, check_mode=check_mode))
    if k is None:
        return None
    if check_mode:
        return Detector(k // 2), PolTag(k % 2)
    return Detector(k)


@dataclass
class EveKeyEstimate:
    bits: np.ndarray
    agreement: float
    agreement_bob: float


def eve_key_estimate(transcript: Transcript) -> Optional[EveKeyEstimate]:
    """
    Eve's guess of the sifted key from her outcomes and the public announcements.

    Returns ``None`` for a transcript without Eve.
    """
    kept = np.flatnonzero(transcript.kept)
    if np.all(transcript.eve_basis == NO_VALUE):
        return None
    bits = (
        label_indices(transcript.eve_basis[kept], transcript.eve_port[kept], transcript.source[kept]) % 2
    ).astype(np.uint8)
    if len(kept) == 0:
        return EveKeyEstimate(bits, float("nan"), float("nan"))
    return EveKeyEstimate(
        bits,
        float(np.mean(bits == transcript.alice_bit[kept])),
        float(np.mean(bits == transcript.bob_bit[kept])),
    )


__all__ = [
    "BLINDING_MODES",
    "BlindedDetectorModel",
    "BlindingPulse",
    "EveBasis",
    "EveKeyEstimate",
    "EveOutcomeLabel",
    "EvePort",
    "R_LABELS",
    "ResendRule",
    "blinded_response",
    "eve_blinding_pulse",
    "eve_key_estimate",
    "eve_measure",
    "eve_port_distribution",
    "intercept_resend",
    "label_indices",
]
