"""
Alice and Bob for the erasure protocol: state preparation, Bob's measurement,
public announcements, sifting and the +-45 interference check.

Round-level data is kept column-wise in a :class:`Transcript` (numpy arrays)
so sessions of 10^6 rounds stay cheap; :class:`ProtocolRecord` is the
per-round view of the same data.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from enum import IntEnum
from math import pi
from typing import Iterable, Iterator, Optional

import numpy as np

from .quantum_core import (
    KET_LOWER,
    KET_PLUS45,
    KET_UPPER,
    Detector,
    Path,
    PolTag,
    PureState,
    RotatorSetting,
    apply_beam_splitter,
    apply_rotators,
    sample_detection,
)

NO_VALUE = -1  # column sentinel: no click / no tag / no Eve


class SourcePort(IntEnum):
    S1_TOP = 0
    S2_BOTTOM = 1


# physical rotation angles; the +-pi/2 labels in the optics literature denote the same elements
ALICE_ROTATORS = (RotatorSetting(Path.UPPER, -pi / 4), RotatorSetting(Path.LOWER, pi / 4))
BOB_ROTATORS = (RotatorSetting(Path.UPPER, pi / 4), RotatorSetting(Path.LOWER, -pi / 4))

STATE_NAMES = ("unentangled_top", "entangled_top", "unentangled_bottom", "entangled_bottom")


def state_index(source: int, bit: int) -> int:
    return 2 * int(source) + int(bit)


def alice_prepare(source: SourcePort, bit: int) -> PureState:
    """One of the four legal states: source port, beam splitter, then Alice's rotators iff bit=1."""
    if bit not in (0, 1):
        raise ValueError(f"bit must be 0 or 1, got {bit!r}")
    path = KET_UPPER if SourcePort(source) is SourcePort.S1_TOP else KET_LOWER
    state = apply_beam_splitter(PureState.product(path, KET_PLUS45))
    if bit == 1:
        state = apply_rotators(state, ALICE_ROTATORS)
    return state


def legal_states() -> dict[str, PureState]:
    return {
        name: alice_prepare(SourcePort(k // 2), k % 2) for k, name in enumerate(STATE_NAMES)
    }


def identify_state(state: PureState) -> int:
    """Index (``2*source + bit``) of the legal state equal to ``state`` up to phase."""
    for k, candidate in enumerate(legal_states().values()):
        if candidate.equals(state):
            return k
    raise ValueError("state is not one of Alice's four legal states")


def bob_settings(bit: int) -> tuple[RotatorSetting, ...]:
    return BOB_ROTATORS if bit == 0 else ()


def bob_measure(state: PureState, bit: int, rng: np.random.Generator, check_mode: bool = False):
    """Bob's rotators iff ``bit == 0``, then a detector click (with +-45 tag in check mode)."""
    return sample_detection(apply_rotators(state, bob_settings(bit)), rng, check_mode=check_mode)


def keep_detector(source: SourcePort) -> Detector:
    return Detector.D1 if SourcePort(source) is SourcePort.S1_TOP else Detector.D2


@dataclass(frozen=True)
class ProtocolRecord:
    round_id: int
    source: SourcePort
    alice_bit: int
    bob_bit: int
    detector: Optional[Detector]
    pol_tag: Optional[PolTag] = None
    kept: bool = False
    eve_note: str = ""


@dataclass
class Transcript:
    """
    Column-wise ground truth of an erasure-protocol session.

    Integer columns use ``NO_VALUE`` (-1) for "absent": no click, no
    polarization tag, no eavesdropper action.
    """

    source: np.ndarray
    alice_bit: np.ndarray
    bob_bit: np.ndarray
    detector: np.ndarray
    pol_tag: np.ndarray
    kept: np.ndarray
    eve_basis: np.ndarray
    eve_port: np.ndarray
    sampled: np.ndarray = None
    clicks: np.ndarray = None

    def __post_init__(self):
        n = len(self.source)
        if self.sampled is None:
            self.sampled = np.zeros(n, dtype=bool)
        if self.clicks is None:
            self.clicks = (np.asarray(self.detector) != NO_VALUE).astype(np.int8)
        for f in fields(self):
            col = np.asarray(getattr(self, f.name))
            if col.shape != (n,):
                raise ValueError(f"column {f.name} has shape {col.shape}, expected ({n},)")
            dtype = bool if f.name in ("kept", "sampled") else np.int8
            setattr(self, f.name, col.astype(dtype, copy=False))

    def __len__(self) -> int:
        return len(self.source)

    @property
    def round_id(self) -> np.ndarray:
        return np.arange(len(self))

    @property
    def check_mode(self) -> bool:
        return bool(np.any(self.pol_tag != NO_VALUE))

    def eve_note(self, i: int) -> str:
        if self.eve_basis[i] == NO_VALUE:
            return ""
        from .adversary import EveBasis, EvePort

        return f"{EveBasis(self.eve_basis[i]).name.lower()}/{EvePort(self.eve_port[i]).name.lower()}"

    def record(self, i: int) -> ProtocolRecord:
        det = None if self.detector[i] == NO_VALUE else Detector(self.detector[i])
        tag = None if self.pol_tag[i] == NO_VALUE else PolTag(self.pol_tag[i])
        return ProtocolRecord(
            round_id=i,
            source=SourcePort(self.source[i]),
            alice_bit=int(self.alice_bit[i]),
            bob_bit=int(self.bob_bit[i]),
            detector=det,
            pol_tag=tag,
            kept=bool(self.kept[i]),
            eve_note=self.eve_note(i),
        )

    def records(self) -> Iterator[ProtocolRecord]:
        for i in range(len(self)):
            yield self.record(i)

    @classmethod
    def from_records(cls, records: Iterable[ProtocolRecord]) -> "Transcript":
        from .adversary import parse_eve_note

        records = list(records)
        eve = [parse_eve_note(r.eve_note) for r in records]
        return cls(
            source=np.array([r.source for r in records], dtype=np.int8),
            alice_bit=np.array([r.alice_bit for r in records], dtype=np.int8),
            bob_bit=np.array([r.bob_bit for r in records], dtype=np.int8),
            detector=np.array(
                [NO_VALUE if r.detector is None else r.detector for r in records], dtype=np.int8
            ),
            pol_tag=np.array(
                [NO_VALUE if r.pol_tag is None else r.pol_tag for r in records], dtype=np.int8
            ),
            kept=np.array([r.kept for r in records], dtype=bool),
            eve_basis=np.array([e[0] for e in eve], dtype=np.int8),
            eve_port=np.array([e[1] for e in eve], dtype=np.int8),
        )


def keep_mask(source: np.ndarray, detector: np.ndarray) -> np.ndarray:
    """Kept iff (S1 and D1) or (S2 and D2); no-click rounds are never kept."""
    source = np.asarray(source)
    detector = np.asarray(detector)
    return (detector != NO_VALUE) & (detector == np.where(source == SourcePort.S1_TOP, 0, 1))


@dataclass
class KeyMaterial:
    """
    Bit strings at each pipeline stage.

    ``sifted_rounds`` maps sifted positions back to round ids and
    ``sample_indices`` are positions in the sifted key that were disclosed.
    """

    raw_alice: np.ndarray
    raw_bob: np.ndarray
    sifted_alice: np.ndarray
    sifted_bob: np.ndarray
    sifted_rounds: np.ndarray
    sample_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    corrected: Optional[np.ndarray] = None
    amplified_alice: Optional[np.ndarray] = None
    amplified_bob: Optional[np.ndarray] = None

    def __post_init__(self):
        if len(self.sifted_alice) != len(self.sifted_bob):
            raise ValueError("sifted keys differ in length")

    def _unsampled(self) -> np.ndarray:
        mask = np.ones(len(self.sifted_alice), dtype=bool)
        mask[self.sample_indices] = False
        return mask

    @property
    def remaining_alice(self) -> np.ndarray:
        """Alice's sifted key with the disclosed sample removed."""
        return self.sifted_alice[self._unsampled()]

    @property
    def remaining_bob(self) -> np.ndarray:
        return self.sifted_bob[self._unsampled()]


def sift(transcript) -> KeyMaterial:
    """
    Apply the public announcements: mark kept rounds and build both sifted keys.

    Accepts a :class:`Transcript` or any iterable of :class:`ProtocolRecord`.
    Each party builds its sifted key from its own bit choices only.
    """
    if not isinstance(transcript, Transcript):
        transcript = Transcript.from_records(transcript)
    transcript.kept = keep_mask(transcript.source, transcript.detector)
    rounds = np.flatnonzero(transcript.kept)
    return KeyMaterial(
        raw_alice=transcript.alice_bit.astype(np.uint8),
        raw_bob=transcript.bob_bit.astype(np.uint8),
        sifted_alice=transcript.alice_bit[rounds].astype(np.uint8),
        sifted_bob=transcript.bob_bit[rounds].astype(np.uint8),
        sifted_rounds=rounds,
    )


def interference_alarm_rate(transcript) -> Optional[float]:
    """
    Fraction of -45 tags among fired rounds where Alice and Bob chose opposite bits.

    Returns ``None`` when there is no such round (or check mode was off).
    """
    if not isinstance(transcript, Transcript):
        transcript = Transcript.from_records(transcript)
    qualifying = (
        (transcript.alice_bit != transcript.bob_bit)
        & (transcript.detector != NO_VALUE)
        & (transcript.pol_tag != NO_VALUE)
    )
    n = int(np.count_nonzero(qualifying))
    if n == 0:
        return None
    return float(np.count_nonzero(transcript.pol_tag[qualifying] == PolTag.MINUS45)) / n
