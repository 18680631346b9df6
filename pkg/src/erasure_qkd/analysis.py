"""
Information-theoretic bookkeeping: Eve's mutual information from her outcome
table, error-rate and entropy helpers, and the proceed/abort rule.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from math import log2
from typing import Optional, Sequence

import numpy as np

from .protocol import NO_VALUE, SourcePort, Transcript, alice_prepare
from .quantum_core import snap_probabilities

TABLE_TOL = 1e-9
DEFAULT_QBER_THRESHOLD = 1 / 3
DEFAULT_INFO_THRESHOLD = 0.311


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class ProbabilityTable:
    """
    Alice's bit prior ``p_i`` and Eve's outcome likelihoods ``p_r_given_i``.

    ``p_r_given_i`` has shape ``(2, k)``: one row per Alice bit, one column
    per Eve outcome label.
    """

    p_i: np.ndarray
    p_r_given_i: np.ndarray
    labels: tuple[str, ...] = ("0", "1", "0'", "1'")

    def __post_init__(self):
        p_i = np.asarray(self.p_i, dtype=float)
        cond = np.asarray(self.p_r_given_i, dtype=float)
        object.__setattr__(self, "p_i", p_i)
        object.__setattr__(self, "p_r_given_i", cond)
        if p_i.shape != (2,) or cond.ndim != 2 or cond.shape[0] != 2:
            raise ValueError(f"bad table shapes {p_i.shape}, {cond.shape}")
        if len(self.labels) != cond.shape[1]:
            raise ValueError("one label per outcome column required")
        if np.any(p_i < 0) or np.any(cond < 0):
            raise ValueError("negative probability in table")
        if abs(p_i.sum() - 1) > TABLE_TOL or np.any(np.abs(cond.sum(axis=1) - 1) > TABLE_TOL):
            raise ValueError("table rows must sum to 1")

    @property
    def joint(self) -> np.ndarray:
        """P(i, r)."""
        return self.p_i[:, None] * self.p_r_given_i

    @property
    def p_r(self) -> np.ndarray:
        return self.joint.sum(axis=0)


def reference_table() -> ProbabilityTable:
    """The intercept-resend outcome table for top-source photons, written out by hand."""
    return ProbabilityTable(
        p_i=[1 / 2, 1 / 2],
        p_r_given_i=[[1 / 2, 0, 1 / 4, 1 / 4], [1 / 4, 1 / 4, 0, 1 / 2]],
    )


def mutual_information_eq1(table: ProbabilityTable) -> float:
    """
    I(alpha, epsilon) = 1 + sum_r P(r) sum_i P(i|r) log2 P(i|r), with 0 log 0 = 0.

    Here P(i|r) = P(r|i) P(i) / P(r). The leading 1 is H(i) for a uniform
    bit; for a general prior it is replaced by H(i) so the result is always
    the mutual information.
    """
    if not isinstance(table, ProbabilityTable):
        raise TypeError("expected a ProbabilityTable")
    h_i = -sum(p * log2(p) for p in table.p_i if p > 0)
    total = h_i
    for r, p_r in enumerate(table.p_r):
        if p_r <= 0:
            continue
        inner = 0.0
        for i in range(2):
            post = table.p_r_given_i[i, r] * table.p_i[i] / p_r
            if post > 0:
                inner += post * log2(post)
        total += p_r * inner
    return float(total)


def analytic_probability_table(source: SourcePort = SourcePort.S1_TOP) -> ProbabilityTable:
    """Enumerate Eve's measurement on the two states of ``source`` (uniform basis choice)."""
    from .adversary import EveBasis, EveOutcomeLabel, EvePort, eve_port_distribution

    cond = np.zeros((2, 4))
    for bit in (0, 1):
        state = alice_prepare(source, bit)
        for basis in EveBasis:
            ports = eve_port_distribution(state, basis)
            for port in EvePort:
                r = EveOutcomeLabel(basis, port).label_index(source)
                cond[bit, r] += 0.5 * ports[port]
    return ProbabilityTable([0.5, 0.5], snap_probabilities(cond))


def empirical_probability_table(
    transcript: Transcript, source: SourcePort = SourcePort.S1_TOP, min_count: int = 100
) -> ProbabilityTable:
    """Count (Alice bit, Eve label) pairs over rounds with the given announced source."""
    from .adversary import label_indices

    mask = (transcript.source == source) & (transcript.eve_basis != NO_VALUE)
    if not np.any(transcript.eve_basis != NO_VALUE):
        raise ValueError("transcript carries no eavesdropper outcomes")
    n = int(np.count_nonzero(mask))
    if n < min_count:
        raise InsufficientDataError(f"only {n} rounds with Eve outcomes (need {min_count})")
    r = label_indices(transcript.eve_basis[mask], transcript.eve_port[mask], transcript.source[mask])
    i = transcript.alice_bit[mask]
    counts = np.zeros((2, 4))
    np.add.at(counts, (i, r), 1)
    row = counts.sum(axis=1)
    if np.any(row == 0):
        raise InsufficientDataError("one of Alice's bit values never occurs")
    return ProbabilityTable(row / n, counts / row[:, None])


def total_variation(a: ProbabilityTable, b: ProbabilityTable) -> float:
    return float(0.5 * np.abs(a.joint - b.joint).sum())


def qber(errors: int, total: int) -> float:
    if total <= 0:
        raise ValueError("QBER needs at least one compared bit")
    if not 0 <= errors <= total:
        raise ValueError(f"error count {errors} outside [0, {total}]")
    return errors / total


def binary_entropy(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p} outside [0, 1]")
    if p in (0.0, 1.0):
        return 0.0
    return -p * log2(p) - (1 - p) * log2(1 - p)


def i_alice_bob(error_rate: float) -> float:
    """Alice-Bob information per bit for a binary symmetric channel."""
    return 1.0 - binary_entropy(error_rate)


class Verdict(str, Enum):
    PROCEED = "proceed"
    ABORT = "abort"


@dataclass(frozen=True)
class InfoMetrics:
    i_alice_eve: float
    i_alice_bob: float
    qber: float
    verdict: Optional[Verdict] = None


def decide(
    metrics: InfoMetrics,
    qber_threshold: float = DEFAULT_QBER_THRESHOLD,
    info_threshold: float = DEFAULT_INFO_THRESHOLD,
) -> Verdict:
    """Proceed iff QBER < qber_threshold and I(alpha, beta) > info_threshold."""
    q, i_ab = metrics.qber, metrics.i_alice_bob
    if q != q or i_ab != i_ab:  # nan: nothing was compared
        return Verdict.ABORT
    if q < qber_threshold and i_ab > info_threshold:
        return Verdict.PROCEED
    return Verdict.ABORT


def entropy(probs: Sequence[float]) -> float:
    return float(-sum(p * log2(p) for p in probs if p > 0))
