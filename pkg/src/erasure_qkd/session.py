"""
Seeded end-to-end sessions of the erasure protocol (preparation through the
sample-based abort decision).

Every round falls in one of finitely many branches (source, Alice bit, Bob
bit, Eve basis, Eve port), so the optics are evaluated once per branch with
:mod:`erasure_qkd.quantum_core` and rounds are then sampled column-wise from
those tables with one uniform per random event.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .adversary import (
    BLINDING_MODES,
    BlindedDetectorModel,
    BlindingPulse,
    EveBasis,
    EveOutcomeLabel,
    EvePort,
    ResendRule,
    eve_key_estimate,
    eve_port_distribution,
)
from .analysis import (
    DEFAULT_INFO_THRESHOLD,
    DEFAULT_QBER_THRESHOLD,
    InfoMetrics,
    Verdict,
    analytic_probability_table,
    decide,
    i_alice_bob,
    mutual_information_eq1,
)
from .protocol import (
    NO_VALUE,
    STATE_NAMES,
    KeyMaterial,
    SourcePort,
    Transcript,
    bob_settings,
    interference_alarm_rate,
    keep_mask,
    legal_states,
    sift,
)
from .quantum_core import apply_rotators, joint_detection_distribution, snap_probabilities

ATTACKS = ("none", "intercept_resend", "blinding")
STREAMS = ("quantum", "sample", "reconcile", "amplify")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SessionConfig:
    rounds: int
    attack: str = "none"
    check_mode: bool = False
    sample_fraction: float = 0.1
    qber_threshold: float = DEFAULT_QBER_THRESHOLD
    info_threshold: float = DEFAULT_INFO_THRESHOLD
    blinding_threshold: float = 0.9
    seed: int = 0
    resend_rule: Optional[ResendRule] = field(default=None, compare=False)

    def __post_init__(self):
        if isinstance(self.rounds, bool) or not isinstance(self.rounds, (int, np.integer)) or self.rounds < 1:
            raise ConfigError(f"rounds must be a positive integer, got {self.rounds!r}")
        if self.attack not in ATTACKS:
            raise ConfigError(f"attack must be one of {ATTACKS}, got {self.attack!r}")
        if not 0 < self.sample_fraction < 1:
            raise ConfigError(f"sample_fraction must lie in (0, 1), got {self.sample_fraction}")
        if not 0 < self.qber_threshold <= 1:
            raise ConfigError(f"qber_threshold must lie in (0, 1], got {self.qber_threshold}")
        if not 0 <= self.info_threshold <= 1:
            raise ConfigError(f"info_threshold must lie in [0, 1], got {self.info_threshold}")
        if not 0.5 < self.blinding_threshold <= 1:
            raise ConfigError(f"blinding_threshold must lie in (0.5, 1], got {self.blinding_threshold}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    @property
    def rule(self) -> ResendRule:
        return self.resend_rule or ResendRule.default()


def streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent generators for each consumer of randomness in a session."""
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(child) for name, child in zip(STREAMS, children)}


# ---------------------------------------------------------------------------
# branch tables


@lru_cache(maxsize=None)
def bob_joint_table() -> np.ndarray:
    """``[state index, bob bit] -> P((D1,+45), (D1,-45), (D2,+45), (D2,-45))``."""
    states = list(legal_states().values())
    out = np.empty((4, 2, 4))
    for k, state in enumerate(states):
        for bit in (0, 1):
            out[k, bit] = joint_detection_distribution(apply_rotators(state, bob_settings(bit)))
    return snap_probabilities(out)


@lru_cache(maxsize=None)
def eve_port_table() -> np.ndarray:
    """``[state index, eve basis] -> (P(upper), P(lower))``."""
    states = list(legal_states().values())
    out = np.empty((4, 2, 2))
    for k, state in enumerate(states):
        for basis in EveBasis:
            out[k, basis] = eve_port_distribution(state, basis)
    return snap_probabilities(out)


def blinding_mode_table(rule: ResendRule) -> np.ndarray:
    """``[eve basis, eve port] -> legal-state index of the pulse mode``."""
    names = list(STATE_NAMES)
    out = np.empty((2, 2), dtype=np.int8)
    for basis in EveBasis:
        for port in EvePort:
            out[basis, port] = names.index(BLINDING_MODES[rule.guess(EveOutcomeLabel(basis, port))])
    return out


@lru_cache(maxsize=None)
def blinded_outcome_table(threshold: float, check_mode: bool) -> np.ndarray:
    """``[mode index, bob bit] -> joint outcome index (D*2 + pol) or -1 for no click``."""
    model = BlindedDetectorModel(threshold)
    states = list(legal_states().values())
    out = np.full((4, 2), NO_VALUE, dtype=np.int8)
    for k, mode in enumerate(states):
        pulse = BlindingPulse(mode)
        for bit in (0, 1):
            fired = model.fire(pulse.routing(bit, check_mode=check_mode))
            if fired is not None:
                out[k, bit] = fired if check_mode else 2 * fired
    return out


def _draw_rows(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Row-wise inverse-CDF sampling, matching :func:`quantum_core.draw`."""
    cdf = np.cumsum(probs, axis=1)[:, :-1]
    return np.count_nonzero(cdf <= u[:, None], axis=1)


# ---------------------------------------------------------------------------
# sessions


@dataclass
class SessionStats:
    protocol: str
    rounds: int
    kept: int
    keep_rate: float
    no_click: int
    sifted_errors: int
    sifted_qber: float
    sample_size: int
    sample_errors: int
    sample_qber: float
    i_alice_bob: float
    i_alice_eve: float
    alarm_rate: Optional[float]
    eve_agreement: Optional[float]
    verdict: Verdict

    def as_dict(self) -> dict:
        d = asdict(self)
        d["verdict"] = self.verdict.value
        return d


def draw_sample(n_sifted: int, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Sorted positions of the disclosed sample (at least one bit when any exist)."""
    if n_sifted == 0:
        return np.zeros(0, dtype=np.int64)
    k = min(n_sifted, max(1, int(round(fraction * n_sifted))))
    return np.sort(rng.choice(n_sifted, size=k, replace=False)).astype(np.int64)


def key_statistics(kept, alice_bits, bob_bits, sampled):
    """Counts shared by both protocols, from per-round columns."""
    kept = np.asarray(kept, dtype=bool)
    errors = np.asarray(alice_bits) != np.asarray(bob_bits)
    n_kept = int(np.count_nonzero(kept))
    sample = kept & np.asarray(sampled, dtype=bool)
    n_sample = int(np.count_nonzero(sample))
    sifted_errors = int(np.count_nonzero(errors & kept))
    sample_errors = int(np.count_nonzero(errors & sample))
    return {
        "kept": n_kept,
        "sifted_errors": sifted_errors,
        "sifted_qber": sifted_errors / n_kept if n_kept else float("nan"),
        "sample_size": n_sample,
        "sample_errors": sample_errors,
        "sample_qber": sample_errors / n_sample if n_sample else float("nan"),
    }


@lru_cache(maxsize=None)
def _intercept_information() -> float:
    return mutual_information_eq1(analytic_probability_table())


def eve_information(attack: str) -> float:
    """I(alpha, epsilon) for the active attack; both attacks share Eve's measurement."""
    if attack == "none":
        return 0.0
    return _intercept_information()


def session_stats(transcript: Transcript, config: SessionConfig) -> SessionStats:
    """All session statistics, recomputed from the transcript columns alone."""
    n = len(transcript)
    ks = key_statistics(transcript.kept, transcript.alice_bit, transcript.bob_bit, transcript.sampled)
    i_ab = i_alice_bob(ks["sample_qber"]) if ks["sample_size"] else float("nan")
    i_ae = eve_information(config.attack)
    verdict = decide(
        InfoMetrics(i_ae, i_ab, ks["sample_qber"]), config.qber_threshold, config.info_threshold
    )
    eve = eve_key_estimate(transcript)
    return SessionStats(
        protocol="erasure",
        rounds=n,
        keep_rate=ks["kept"] / n,
        no_click=int(np.count_nonzero(transcript.detector == NO_VALUE)),
        i_alice_bob=i_ab,
        i_alice_eve=i_ae,
        alarm_rate=interference_alarm_rate(transcript) if config.check_mode else None,
        eve_agreement=None if eve is None else eve.agreement,
        verdict=verdict,
        **ks,
    )


def simulate_rounds(config: SessionConfig, rng: np.random.Generator) -> Transcript:
    """Quantum part of a session: preparation, channel (with Eve) and Bob's detection."""
    n = int(config.rounds)
    source = rng.integers(0, 2, n, dtype=np.int8)
    alice = rng.integers(0, 2, n, dtype=np.int8)
    bob = rng.integers(0, 2, n, dtype=np.int8)
    eve_basis = rng.integers(0, 2, n, dtype=np.int8)
    eve_u = rng.random(n)
    bob_u = rng.random(n)

    sent = 2 * source + alice
    clicks = np.ones(n, dtype=np.int8)
    if config.attack == "none":
        eve_basis[:] = NO_VALUE
        eve_port = np.full(n, NO_VALUE, dtype=np.int8)
        outcome = _draw_rows(bob_joint_table()[sent, bob], bob_u)
    else:
        p_upper = eve_port_table()[sent, eve_basis, EvePort.UPPER]
        eve_port = (p_upper <= eve_u).astype(np.int8)
        if config.attack == "intercept_resend":
            arriving = config.rule.index_table()[eve_basis, eve_port]
            outcome = _draw_rows(bob_joint_table()[arriving, bob], bob_u)
        else:
            mode = blinding_mode_table(config.rule)[eve_basis, eve_port]
            outcome = blinded_outcome_table(config.blinding_threshold, config.check_mode)[mode, bob]
            clicks = (outcome != NO_VALUE).astype(np.int8)

    fired = outcome != NO_VALUE
    detector = np.where(fired, outcome // 2, NO_VALUE).astype(np.int8)
    if config.check_mode:
        pol_tag = np.where(fired, outcome % 2, NO_VALUE).astype(np.int8)
    else:
        pol_tag = np.full(n, NO_VALUE, dtype=np.int8)
    return Transcript(
        source=source,
        alice_bit=alice,
        bob_bit=bob,
        detector=detector,
        pol_tag=pol_tag,
        kept=keep_mask(source, detector),
        eve_basis=eve_basis,
        eve_port=eve_port,
        clicks=clicks,
    )


def run_session(
    config: SessionConfig, rng: Optional[np.random.Generator] = None
) -> tuple[Transcript, KeyMaterial, SessionStats]:
    """
    Run every round, sift, disclose a random sample and decide.

    With ``rng`` omitted, all randomness derives from ``config.seed``; the
    result is then a pure function of the config.
    """
    gens = streams(config.seed)
    if rng is not None:
        gens["quantum"] = gens["sample"] = rng
    transcript = simulate_rounds(config, gens["quantum"])
    keys = sift(transcript)
    keys.sample_indices = draw_sample(len(keys.sifted_alice), config.sample_fraction, gens["sample"])
    transcript.sampled[keys.sifted_rounds[keys.sample_indices]] = True
    return transcript, keys, session_stats(transcript, config)


def expected_statistics(
    attack: str,
    blinding_threshold: float = 0.9,
    rule: Optional[ResendRule] = None,
) -> dict[str, float]:
    """
    Long-run rates by weighting every branch with its probability.

    Uses the same branch tables as :func:`simulate_rounds`, so it checks the
    sampling, not the optics.
    """
    rule = rule or ResendRule.default()
    kept = err = alarm = disagree_fired = no_click = 0.0
    for k in range(4):
        source = SourcePort(k // 2)
        keep_det = 0 if source is SourcePort.S1_TOP else 1
        for bob in (0, 1):
            w0 = 1 / 8
            branches = []  # (weight, joint outcome probabilities or a fixed outcome)
            if attack == "none":
                branches.append((w0, bob_joint_table()[k, bob]))
            else:
                for basis in EveBasis:
                    for port in EvePort:
                        w = w0 * 0.5 * eve_port_table()[k, basis, port]
                        if w == 0:
                            continue
                        if attack == "intercept_resend":
                            arriving = rule.index_table()[basis, port]
                            branches.append((w, bob_joint_table()[arriving, bob]))
                        else:
                            mode = blinding_mode_table(rule)[basis, port]
                            o = blinded_outcome_table(blinding_threshold, True)[mode, bob]
                            p = np.zeros(4)
                            if o != NO_VALUE:
                                p[o] = 1.0
                            branches.append((w, p))
            for w, p in branches:
                p_keep = p[2 * keep_det] + p[2 * keep_det + 1]
                kept += w * p_keep
                if (k % 2) != bob:
                    err += w * p_keep
                    disagree_fired += w * p.sum()
                    alarm += w * (p[1] + p[3])
                no_click += w * (1 - p.sum())
    return {
        "keep_rate": kept,
        "qber": err / kept,
        "alarm_rate": alarm / disagree_fired if disagree_fired else float("nan"),
        "no_click_rate": no_click,
    }

