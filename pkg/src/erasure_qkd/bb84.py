"""
Polarization BB84 on the same photon model, with intercept-resend and
faked-state (blinding) eavesdroppers, for side-by-side comparison.

The photon stays in the upper arm; only its polarization carries the key.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from enum import IntEnum
from functools import lru_cache
from math import pi
from typing import Iterator, Optional

import numpy as np

from .adversary import BlindedDetectorModel
from .analysis import InfoMetrics, ProbabilityTable, decide, i_alice_bob, mutual_information_eq1
from .protocol import NO_VALUE, KeyMaterial
from .quantum_core import (
    KET_H,
    KET_MINUS45,
    KET_PLUS45,
    KET_UPPER,
    KET_V,
    Path,
    PureState,
    RotatorSetting,
    apply_rotators,
    draw,
    polarization_distribution,
    snap_probabilities,
)
from .session import SessionConfig, SessionStats, draw_sample, key_statistics, streams


class Basis(IntEnum):
    RECTILINEAR = 0
    DIAGONAL = 1


_POLS = {(0, 0): KET_H, (0, 1): KET_V, (1, 0): KET_PLUS45, (1, 1): KET_MINUS45}
# maps +45 -> H so that a diagonal measurement reads as an H/V one
_DIAGONAL_ANALYZER = (RotatorSetting(Path.UPPER, -pi / 4),)


def bb84_prepare(basis: Basis, bit: int) -> PureState:
    return PureState.product(KET_UPPER, _POLS[(int(basis), int(bit))])


def bb84_distribution(state: PureState, basis: Basis) -> tuple[float, float]:
    """(P(bit 0), P(bit 1)) for a measurement in ``basis``."""
    if Basis(basis) is Basis.DIAGONAL:
        state = apply_rotators(state, _DIAGONAL_ANALYZER)
    return polarization_distribution(state)


def bb84_measure(state: PureState, basis: Basis, rng: np.random.Generator) -> int:
    return draw(snap_probabilities(bb84_distribution(state, basis)), rng.random())


@lru_cache(maxsize=None)
def outcome_table() -> np.ndarray:
    """``[prepared basis, prepared bit, measured basis] -> (P(0), P(1))``."""
    out = np.empty((2, 2, 2, 2))
    for b in Basis:
        for bit in (0, 1):
            for m in Basis:
                out[b, bit, m] = bb84_distribution(bb84_prepare(b, bit), m)
    return snap_probabilities(out)


@lru_cache(maxsize=None)
def blinded_table(threshold: float) -> np.ndarray:
    """``[pulse basis, pulse bit, Bob basis] -> bit that clicks, or -1``."""
    model = BlindedDetectorModel(threshold)
    out = np.full((2, 2, 2), NO_VALUE, dtype=np.int8)
    for b in Basis:
        for bit in (0, 1):
            for m in Basis:
                fired = model.fire(outcome_table()[b, bit, m])
                if fired is not None:
                    out[b, bit, m] = fired
    return out


@dataclass(frozen=True)
class BB84Round:
    round_id: int
    alice_bit: int
    alice_basis: Basis
    bob_basis: Basis
    bob_bit: Optional[int]
    kept: bool


@dataclass
class BB84Transcript:
    alice_basis: np.ndarray
    alice_bit: np.ndarray
    bob_basis: np.ndarray
    bob_bit: np.ndarray
    kept: np.ndarray
    eve_basis: np.ndarray
    eve_bit: np.ndarray
    sampled: np.ndarray = None
    clicks: np.ndarray = None

    def __post_init__(self):
        n = len(self.alice_bit)
        if self.sampled is None:
            self.sampled = np.zeros(n, dtype=bool)
        if self.clicks is None:
            self.clicks = (np.asarray(self.bob_bit) != NO_VALUE).astype(np.int8)
        for f in fields(self):
            col = np.asarray(getattr(self, f.name))
            if col.shape != (n,):
                raise ValueError(f"column {f.name} has shape {col.shape}, expected ({n},)")
            setattr(self, f.name, col.astype(bool if f.name in ("kept", "sampled") else np.int8, copy=False))

    def __len__(self) -> int:
        return len(self.alice_bit)

    def records(self) -> Iterator[BB84Round]:
        for i in range(len(self)):
            yield BB84Round(
                round_id=i,
                alice_bit=int(self.alice_bit[i]),
                alice_basis=Basis(self.alice_basis[i]),
                bob_basis=Basis(self.bob_basis[i]),
                bob_bit=None if self.bob_bit[i] == NO_VALUE else int(self.bob_bit[i]),
                kept=bool(self.kept[i]),
            )


def bb84_keep_mask(alice_basis, bob_basis, bob_bit) -> np.ndarray:
    return (np.asarray(alice_basis) == np.asarray(bob_basis)) & (np.asarray(bob_bit) != NO_VALUE)


def bb84_probability_table(attack: str = "intercept_resend") -> ProbabilityTable:
    """
    Eve's outcome table for kept rounds with a rectilinear announcement.

    Outcome labels are (Eve basis, Eve bit). Under blinding a round is only
    kept when Bob's basis matches Eve's, so the table becomes diagonal.
    """
    cond = np.zeros((2, 4))
    for bit in (0, 1):
        for eb in Basis:
            for ebit in (0, 1):
                p = 0.5 * outcome_table()[Basis.RECTILINEAR, bit, eb, ebit]
                if attack == "blinding" and eb is not Basis.RECTILINEAR:
                    p = 0.0
                cond[bit, 2 * eb + ebit] += p
    cond /= cond.sum(axis=1, keepdims=True)
    return ProbabilityTable([0.5, 0.5], snap_probabilities(cond), labels=("+0", "+1", "x0", "x1"))


def bb84_eve_information(attack: str) -> float:
    if attack == "none":
        return 0.0
    return mutual_information_eq1(bb84_probability_table(attack))


def bb84_stats(transcript: BB84Transcript, config: SessionConfig) -> SessionStats:
    n = len(transcript)
    ks = key_statistics(transcript.kept, transcript.alice_bit, transcript.bob_bit, transcript.sampled)
    i_ab = i_alice_bob(ks["sample_qber"]) if ks["sample_size"] else float("nan")
    i_ae = bb84_eve_information(config.attack)
    kept = transcript.kept
    eve_agreement = None
    if config.attack != "none" and np.any(kept):
        eve_agreement = float(np.mean(transcript.eve_bit[kept] == transcript.alice_bit[kept]))
    return SessionStats(
        protocol="bb84",
        rounds=n,
        keep_rate=ks["kept"] / n,
        no_click=int(np.count_nonzero(transcript.bob_bit == NO_VALUE)),
        i_alice_bob=i_ab,
        i_alice_eve=i_ae,
        alarm_rate=None,
        eve_agreement=eve_agreement,
        verdict=decide(InfoMetrics(i_ae, i_ab, ks["sample_qber"]), config.qber_threshold, config.info_threshold),
        **ks,
    )


def bb84_run(config: SessionConfig, rng: Optional[np.random.Generator] = None):
    """
    Run a BB84 session; returns ``(transcript, keys, stats)`` like :func:`run_session`.

    ``config.attack`` selects no Eve, intercept-resend (Eve measures in a
    random basis and resends her result) or blinding (Eve's result is sent as
    a bright pulse that only crosses threshold when Bob's basis equals hers).
    """
    gens = streams(config.seed)
    if rng is not None:
        gens["quantum"] = gens["sample"] = rng
    q = gens["quantum"]
    n = int(config.rounds)
    a_basis = q.integers(0, 2, n, dtype=np.int8)
    a_bit = q.integers(0, 2, n, dtype=np.int8)
    b_basis = q.integers(0, 2, n, dtype=np.int8)
    e_basis = q.integers(0, 2, n, dtype=np.int8)
    e_u = q.random(n)
    b_u = q.random(n)

    table = outcome_table()
    if config.attack == "none":
        e_basis[:] = NO_VALUE
        e_bit = np.full(n, NO_VALUE, dtype=np.int8)
        b_bit = (table[a_basis, a_bit, b_basis, 0] <= b_u).astype(np.int8)
    else:
        e_bit = (table[a_basis, a_bit, e_basis, 0] <= e_u).astype(np.int8)
        if config.attack == "intercept_resend":
            b_bit = (table[e_basis, e_bit, b_basis, 0] <= b_u).astype(np.int8)
        else:
            b_bit = blinded_table(config.blinding_threshold)[e_basis, e_bit, b_basis]

    transcript = BB84Transcript(
        alice_basis=a_basis,
        alice_bit=a_bit,
        bob_basis=b_basis,
        bob_bit=b_bit,
        kept=bb84_keep_mask(a_basis, b_basis, b_bit),
        eve_basis=e_basis,
        eve_bit=e_bit,
    )
    rounds = np.flatnonzero(transcript.kept)
    sample = draw_sample(len(rounds), config.sample_fraction, gens["sample"])
    transcript.sampled[rounds[sample]] = True
    keys = KeyMaterial(
        raw_alice=transcript.alice_bit,
        raw_bob=transcript.bob_bit,
        sifted_alice=transcript.alice_bit[rounds].astype(np.uint8),
        sifted_bob=transcript.bob_bit[rounds].astype(np.uint8),
        sifted_rounds=rounds,
        sample_indices=sample,
    )
    return transcript, keys, bb84_stats(transcript, config)


def bb84_blinding(config: SessionConfig, rng: Optional[np.random.Generator] = None):
    """Blinding session; returns ``(transcript, stats, eve_key_agreement)``."""
    if config.attack != "blinding":
        config = replace(config, attack="blinding")
    transcript, _, stats = bb84_run(config, rng)
    return transcript, stats, stats.eve_agreement

