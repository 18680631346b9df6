"""
State-vector model of a single photon in a two-arm interferometer.

The photon carries two qubits: which arm it is in (upper ``|0>`` or lower
``|1>``) and its polarization (``|H>``/``|V>``). Amplitudes are stored in the
basis order ``(upper,H), (upper,V), (lower,H), (lower,V)`` so that reshaping
to ``(2, 2)`` gives the path x polarization amplitude matrix.

Every optical element is a pure function ``PureState -> PureState``; nothing
here owns randomness.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from fractions import Fraction
from math import cos, sin, sqrt
from typing import Iterable, Sequence

import numpy as np

NORM_TOL = 1e-9
_INV_SQRT2 = 1 / sqrt(2)


class Path(IntEnum):
    UPPER = 0
    LOWER = 1


class Detector(IntEnum):
    """Output ports of the final beam splitter (port 0 feeds D1)."""

    D1 = 0
    D2 = 1


class PolTag(IntEnum):
    PLUS45 = 0
    MINUS45 = 1


# single-qubit kets
KET_UPPER = np.array([1, 0], dtype=complex)
KET_LOWER = np.array([0, 1], dtype=complex)
KET_H = np.array([1, 0], dtype=complex)
KET_V = np.array([0, 1], dtype=complex)
KET_PLUS45 = np.array([_INV_SQRT2, _INV_SQRT2], dtype=complex)
KET_MINUS45 = np.array([_INV_SQRT2, -_INV_SQRT2], dtype=complex)

#: 50-50 beam splitter acting on the path qubit: |0> -> (|0>+|1>)/sqrt2, |1> -> (|1>-|0>)/sqrt2
BEAM_SPLITTER = _INV_SQRT2 * np.array([[1, -1], [1, 1]], dtype=complex)


class NormalizationError(ValueError):
    pass


@dataclass(frozen=True)
class PureState:
    """Four complex amplitudes over path x polarization."""

    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(4)
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def product(cls, path: Sequence[complex], pol: Sequence[complex]) -> "PureState":
        return cls(np.kron(np.asarray(path, dtype=complex), np.asarray(pol, dtype=complex)))

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "PureState":
        return cls(np.asarray(matrix, dtype=complex).reshape(4))

    @property
    def matrix(self) -> np.ndarray:
        """2x2 amplitude matrix, rows = path, columns = polarization."""
        return self.amplitudes.reshape(2, 2)

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))

    def is_normalized(self, tol: float = NORM_TOL) -> bool:
        return abs(self.norm - 1.0) <= tol

    def inner(self, other: "PureState") -> complex:
        """<self|other>."""
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def equals(self, other: "PureState", tol: float = NORM_TOL) -> bool:
        """Equality up to a global phase, per-amplitude tolerance ``tol``."""
        a, b = self.amplitudes, other.amplitudes
        k = int(np.argmax(np.abs(b)))
        if abs(b[k]) <= tol:
            return bool(np.all(np.abs(a) <= tol))
        if abs(a[k]) <= tol:
            return False
        phase = a[k] / b[k]
        phase /= abs(phase)
        return bool(np.all(np.abs(a - phase * b) <= tol))

    def __array__(self, dtype=None, copy=None):
        return np.array(self.amplitudes, dtype=dtype)


def _check_normalized(state: PureState) -> None:
    if not state.is_normalized():
        raise NormalizationError(f"state is not normalized (norm={state.norm:.12g})")


@dataclass(frozen=True)
class RotatorSetting:
    """A polarization rotator on one arm; ``angle`` is the physical rotation in radians."""

    path: Path
    angle: float


def rotation_matrix(angle: float) -> np.ndarray:
    """H -> cos a H + sin a V, V -> -sin a H + cos a V."""
    c, s = cos(angle), sin(angle)
    return np.array([[c, -s], [s, c]], dtype=complex)


def apply_beam_splitter(state: PureState) -> PureState:
    _check_normalized(state)
    return PureState.from_matrix(BEAM_SPLITTER @ state.matrix)


def apply_rotators(state: PureState, settings: Iterable[RotatorSetting]) -> PureState:
    settings = list(settings)
    paths = [Path(s.path) for s in settings]
    if len(set(paths)) != len(paths):
        raise ValueError(f"more than one rotator setting on a path: {paths}")
    _check_normalized(state)
    m = state.matrix.copy()
    for s in settings:
        m[s.path] = rotation_matrix(s.angle) @ m[s.path]
    return PureState.from_matrix(m)


def output_field(state: PureState) -> np.ndarray:
    """Amplitude matrix after the final beam splitter (rows = output ports)."""
    return apply_beam_splitter(state).matrix


def detector_distribution(state: PureState) -> tuple[float, float]:
    """(P(D1), P(D2)) for a state arriving at the final beam splitter."""
    out = output_field(state)
    p = np.sum(np.abs(out) ** 2, axis=1)
    return float(p[0]), float(p[1])


def diagonal_components(pol_amplitudes: np.ndarray) -> np.ndarray:
    """Project polarization amplitudes (H, V) onto (+45, -45)."""
    return np.array([np.vdot(KET_PLUS45, pol_amplitudes), np.vdot(KET_MINUS45, pol_amplitudes)])


def joint_detection_distribution(state: PureState) -> np.ndarray:
    """
    Probabilities of (D1,+45), (D1,-45), (D2,+45), (D2,-45).

    The +-45 measurement at the firing port stands in for the 45 degree
    rotator followed by a polarizing beam splitter in front of each detector.
    """
    out = output_field(state)
    probs = np.concatenate([np.abs(diagonal_components(out[port])) ** 2 for port in Detector])
    return probs


def polarization_distribution(state: PureState) -> tuple[float, float]:
    """(P(H), P(V)) with the path traced out."""
    _check_normalized(state)
    p = np.sum(np.abs(state.matrix) ** 2, axis=0)
    return float(p[0]), float(p[1])


def draw(probs: Sequence[float], u: float) -> int:
    """Inverse-CDF pick of an outcome index for a uniform ``u`` in [0, 1)."""
    cdf = np.cumsum(probs)[:-1]
    return int(np.count_nonzero(cdf <= u))


def sample_detection(state: PureState, rng: np.random.Generator, check_mode: bool = False):
    """
    Born-rule sample of which detector fires.

    Returns a ``Detector``, or ``(Detector, PolTag)`` when ``check_mode`` is set.
    A single uniform is consumed either way and the firing detector does not
    depend on ``check_mode``.
    """
    k = draw(joint_detection_distribution(state), rng.random())
    detector = Detector(k // 2)
    if check_mode:
        return detector, PolTag(k % 2)
    return detector


def concurrence(state: PureState) -> float:
    _check_normalized(state)
    return float(min(1.0, 2 * abs(np.linalg.det(state.matrix))))


def random_state(rng: np.random.Generator) -> PureState:
    v = rng.normal(size=4) + 1j * rng.normal(size=4)
    return PureState(v / np.linalg.norm(v))


def snap_probabilities(probs, max_denominator: int = 1024, tol: float = 1e-12) -> np.ndarray:
    """
    Replace entries within ``tol`` of a small-denominator rational by that rational.

    Keeps structurally zero outcomes at exactly zero (so they can never be
    sampled) and makes table-derived quantities such as 1/2 exact.
    """
    p = np.array(probs, dtype=float)
    flat = p.reshape(-1)
    for j, x in enumerate(flat):
        f = float(Fraction(float(x)).limit_denominator(max_denominator))
        if abs(f - x) < tol:
            flat[j] = f
    return p
