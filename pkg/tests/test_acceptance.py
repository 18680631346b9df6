"""
Acceptance criteria, each at its stated tolerance.

Tests carry a ``criterion`` marker; the terminal summary prints one PASS/FAIL
line per criterion (see conftest.py).
"""
from fractions import Fraction

import numpy as np
import pytest

import oracle
from erasure_qkd.adversary import BlindingPulse, EveBasis, EvePort, ResendRule, blinded_response
from erasure_qkd.analysis import (
    analytic_probability_table,
    empirical_probability_table,
    mutual_information_eq1,
    reference_table,
)
from erasure_qkd.bb84 import bb84_blinding, bb84_eve_information, bb84_run
from erasure_qkd.experiment import ExperimentConfig, run_experiment
from erasure_qkd.postprocess import secure_length
from erasure_qkd.protocol import BOB_ROTATORS, SourcePort, alice_prepare, interference_alarm_rate, legal_states
from erasure_qkd.quantum_core import (
    Detector,
    Path,
    RotatorSetting,
    apply_beam_splitter,
    apply_rotators,
    concurrence,
    random_state,
)
from erasure_qkd.session import (
    SessionConfig,
    blinding_mode_table,
    bob_joint_table,
    eve_port_table,
    expected_statistics,
    run_session,
)

N = 100_000
ATTACKS = ("none", "intercept_resend", "blinding")


def criterion(n, title):
    return pytest.mark.criterion(n, title)


@pytest.fixture(scope="module")
def sessions():
    return {
        a: run_session(SessionConfig(rounds=N, attack=a, check_mode=True, seed=2024))
        for a in ATTACKS
    }


@criterion(1, "detector table exactness (honest, 1e5 rounds)")
def test_c1_table1(sessions):
    t, _, _ = sessions["none"]
    s1 = t.source == SourcePort.S1_TOP
    disagree = s1 & (t.alice_bit != t.bob_bit)
    assert disagree.sum() > 0
    assert np.count_nonzero(t.detector[disagree] == Detector.D1) == 0
    for bit in (0, 1):
        row = s1 & (t.alice_bit == bit) & (t.bob_bit == bit)
        n = int(row.sum())
        freq = np.count_nonzero(t.detector[row] == Detector.D1) / n
        assert abs(freq - 0.5) <= 4 * np.sqrt(0.25 / n), (bit, freq)


@criterion(2, "honest keep rate 0.25 +- 0.01, sifted QBER 0 exactly")
def test_c2_honest(sessions):
    _, keys, stats = sessions["none"]
    assert abs(stats.keep_rate - 0.25) <= 0.01
    assert stats.sifted_qber == 0.0 and stats.sifted_errors == 0
    assert np.array_equal(keys.sifted_alice, keys.sifted_bob)


@criterion(3, "intercept-resend QBER 1/3, keep 3/8, P(r) marginals")
def test_c3_intercept_resend(sessions):
    t, _, stats = sessions["intercept_resend"]
    assert abs(stats.sifted_qber - 1 / 3) <= 0.01
    assert abs(stats.keep_rate - 3 / 8) <= 0.01
    p_r = empirical_probability_table(t).p_r
    assert np.all(np.abs(p_r - np.array([3, 1, 1, 3]) / 8) <= 0.01), p_r


@criterion(4, "I(alice, eve) = 0.311 analytic and from a 1e6-round run")
def test_c4_eve_information():
    analytic = mutual_information_eq1(reference_table())
    assert abs(analytic - 0.311) < 0.001
    assert mutual_information_eq1(analytic_probability_table()) == pytest.approx(analytic, abs=1e-12)
    t, _, _ = run_session(SessionConfig(rounds=1_000_000, attack="intercept_resend", seed=4))
    assert abs(mutual_information_eq1(empirical_probability_table(t)) - analytic) < 0.005


@criterion(5, "-45 alarm rate: honest 0 exactly, intercept-resend 0.25 +- 0.01")
def test_c5_alarm(sessions):
    assert interference_alarm_rate(sessions["none"][0]) == 0.0
    assert abs(interference_alarm_rate(sessions["intercept_resend"][0]) - 0.25) <= 0.01


@criterion(6, "blinding on erasure: QBER 1/3 +- 0.01, never a double click")
def test_c6_blinding(sessions):
    t, _, stats = sessions["blinding"]
    assert abs(stats.sifted_qber - 1 / 3) <= 0.01
    assert np.all(t.clicks <= 1)
    # recompute every round's response with the per-round detector model
    modes = list(legal_states().values())
    mode_idx = blinding_mode_table(ResendRule.default())[t.eve_basis, t.eve_port]
    over = np.zeros((4, 2), dtype=int)
    expected = np.full((4, 2), -1)
    for k, mode in enumerate(modes):
        for bob in (0, 1):
            pulse = BlindingPulse(mode)
            over[k, bob] = max(
                np.count_nonzero(pulse.routing(bob, check) >= 0.9) for check in (False, True)
            )
            fired = blinded_response(pulse, bob)
            expected[k, bob] = -1 if fired is None else int(fired)
    assert over[mode_idx, t.bob_bit].max() <= 1
    assert np.array_equal(expected[mode_idx, t.bob_bit], t.detector)


@criterion(7, "BB84: keep 0.5, IR QBER 0.25 with I=0.5 exactly, blinding QBER 0 and agreement 1")
def test_c7_bb84():
    _, _, honest = bb84_run(SessionConfig(rounds=N, seed=7))
    assert abs(honest.keep_rate - 0.5) <= 0.01
    _, _, ir = bb84_run(SessionConfig(rounds=N, attack="intercept_resend", seed=7))
    assert abs(ir.sifted_qber - 0.25) <= 0.01
    assert bb84_eve_information("intercept_resend") == 0.5 == ir.i_alice_eve
    _, blind, agreement = bb84_blinding(SessionConfig(rounds=N, seed=7))
    assert blind.sifted_qber == 0.0
    assert agreement == 1.0


@criterion(8, "decision rule and honest postprocess")
@pytest.mark.parametrize("attack", ATTACKS)
def test_c8_decision(attack):
    result = run_experiment(ExperimentConfig(rounds=N, attack=attack, seed=8))
    if attack != "none":
        assert result.verdict.value == "abort"
        assert result.post is None
        return
    assert result.verdict.value == "proceed"
    keys, rec = result.keys, result.post.reconciliation
    predicted = secure_length(len(keys.remaining_alice), rec.total_leaked, 0.0, 64)
    assert predicted > 0
    assert rec.success
    assert len(keys.amplified_alice) == predicted == result.post.final_length
    assert np.array_equal(keys.amplified_alice, keys.amplified_bob)


@criterion(9, "properties: unitarity, concurrence, erasure, determinism, exact oracle")
def test_c9_unitarity():
    rng = np.random.default_rng(9)
    settings = [RotatorSetting(Path.UPPER, 0.3), RotatorSetting(Path.LOWER, -1.1)]
    for _ in range(200):
        a, b = random_state(rng), random_state(rng)
        for op in (apply_beam_splitter, lambda s: apply_rotators(s, settings)):
            ua, ub = op(a), op(b)
            assert abs(ua.norm - 1) < 1e-9
            assert abs(ua.inner(ub) - a.inner(b)) < 1e-9


@criterion(9, "properties: unitarity, concurrence, erasure, determinism, exact oracle")
def test_c9_concurrence_and_erasure():
    s = legal_states()
    order = ("unentangled_top", "unentangled_bottom", "entangled_top", "entangled_bottom")
    assert [round(concurrence(s[k]), 9) for k in order] == [0, 0, 1, 1]
    for source in SourcePort:
        restored = apply_rotators(alice_prepare(source, 1), BOB_ROTATORS)
        assert concurrence(restored) < 1e-9


@criterion(9, "properties: unitarity, concurrence, erasure, determinism, exact oracle")
def test_c9_determinism():
    cfg = ExperimentConfig(rounds=20_000, attack="intercept_resend", check_mode=True, seed=99)
    a, b = run_experiment(cfg).artifacts(), run_experiment(cfg).artifacts()
    assert a.keys() == b.keys()
    assert all(a[k].encode() == b[k].encode() for k in a)


def _frac(x):
    f = Fraction(x).limit_denominator(1 << 20)
    assert abs(float(f) - x) < 1e-12
    return f


@criterion(9, "properties: unitarity, concurrence, erasure, determinism, exact oracle")
def test_c9_oracle_branch_tables():
    """Every per-branch probability the session engine samples from, against exact enumeration."""
    joint = bob_joint_table()
    ports = eve_port_table()
    for (source, bit) in oracle.ALICE_STATES:
        k = 2 * source + bit
        for bob in (0, 1):
            expected = oracle.joint_probs(oracle.bob_rotate(oracle.prepare(source, bit), bob))
            assert [_frac(x) for x in joint[k, bob]] == expected
        for basis in EveBasis:
            expected = oracle.port_probs(oracle.bob_rotate(oracle.prepare(source, bit), 0 if basis else 1))
            assert [_frac(x) for x in ports[k, basis]] == expected
    modes = blinding_mode_table(ResendRule.default())
    rule = ResendRule.default().index_table()
    for basis in EveBasis:
        for port in EvePort:
            src, bit = oracle.RESEND[(int(basis), int(port))]
            assert rule[basis, port] == 2 * src + bit
            m_src, m_bit = oracle.blinding_mode(bit, src)
            assert modes[basis, port] == 2 * m_src + m_bit


@criterion(9, "properties: unitarity, concurrence, erasure, determinism, exact oracle")
def test_c9_oracle_rates(sessions):
    """Criteria 2, 3, 5, 6: exact rationals from the oracle, the engine's branch weighting, and the runs."""
    claimed = {
        "none": {"keep_rate": Fraction(1, 4), "qber": Fraction(0), "alarm_rate": Fraction(0)},
        "intercept_resend": {"keep_rate": Fraction(3, 8), "qber": Fraction(1, 3), "alarm_rate": Fraction(1, 4)},
        "blinding": {"qber": Fraction(1, 3)},
    }
    for attack in ATTACKS:
        exact = oracle.erasure_rates(attack)
        engine = expected_statistics(attack)
        for key, value in claimed[attack].items():
            assert exact[key] == value, (attack, key)
        for key in ("keep_rate", "qber", "alarm_rate", "no_click_rate"):
            assert _frac(engine[key]) == exact[key], (attack, key)
        _, _, stats = sessions[attack]
        p = float(exact["keep_rate"])
        assert abs(stats.keep_rate - p) <= 4 * np.sqrt(p * (1 - p) / N)
        q = float(exact["qber"])
        assert abs(stats.sifted_qber - q) <= 4 * np.sqrt(q * (1 - q) / stats.kept) + 1e-15
    assert oracle.erasure_rates("none")["p_s1_d1_disagree"] == 0
    p_r, cond = oracle.eve_table_top()
    assert p_r == [Fraction(3, 8), Fraction(1, 8), Fraction(1, 8), Fraction(3, 8)]
    assert [[_frac(x) for x in row] for row in analytic_probability_table().p_r_given_i] == cond
