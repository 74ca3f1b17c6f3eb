import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from qsum3.adversary import (
    AttackKind,
    AttackStrategy,
    EveUnitaryParams,
    InvalidAttackParams,
    alice_fake_publish,
    alice_flood_summation,
    bob_guess_rate,
    bob_intercept_charlie,
    closed_form_detection,
    entangle_measure,
    entangle_measure_detection,
    entangle_measure_leakage,
    fake_publish_check_pair_detection,
    intercept_resend,
    measure_resend,
    probe_trace_distance,
    random_params,
    unit_detection,
)
from qsum3.harness import RunSpec, monte_carlo
from qsum3.protocol import SUMMATION_ANNOUNCEMENT, AbortReason, Announcement, ProtocolConfig, run_protocol
from qsum3.quantum_core import BellOutcome, InFlight, RngStream, SingleState, StateVector, bell_decompose

S = SingleState
E = [StateVector(np.eye(4)[i]) for i in range(4)]


def oracle_detection(p: EveUnitaryParams, s: SingleState) -> float:
    """Apply E to |s>|eps> as an explicit map on C^2 (x) C^d, then project on the state orthogonal to |s>."""
    d = p.dim
    img = {0: np.kron([1, 0], p.alpha1 * p.eps00.amplitudes) + np.kron([0, 1], p.beta1 * p.eps01.amplitudes),
           1: np.kron([1, 0], p.beta2 * p.eps10.amplitudes) + np.kron([0, 1], p.alpha2 * p.eps11.amplitudes)}
    r = 1 / math.sqrt(2)
    amps = {S.Z0: (1, 0), S.Z1: (0, 1), S.XPlus: (r, r), S.XMinus: (r, -r)}
    flipped = {S.Z0: S.Z1, S.Z1: S.Z0, S.XPlus: S.XMinus, S.XMinus: S.XPlus}
    a = amps[s]
    joint = a[0] * img[0] + a[1] * img[1]
    proj = np.kron(np.conj(amps[flipped[s]]), np.eye(d))
    v = proj @ joint
    return float(np.vdot(v, v).real)


def _params(a1=1, b1=0, a2=1, b2=0, e=(0, 1, 2, 3)):
    return EveUnitaryParams(a1, b1, a2, b2, *(E[i] for i in e))


# --- measure-resend / intercept-resend ---------------------------------------------------

def test_measure_resend_leaves_z_states():
    out = measure_resend(np.array([S.Z0, S.Z1] * 100, dtype=np.int8), RngStream(1))
    np.testing.assert_array_equal(out.states, [S.Z0, S.Z1] * 100)


def _decoy_error(flight_in, flight_out, rng):
    states = flight_in.astype(np.int8)
    bits = flight_out.measure(np.arange(states.size), states >> 1, rng.uniforms(states.size))
    return bits != (states & 1)


def test_measure_resend_detection_rates():
    n = 200_000
    rng = RngStream(2)
    states = rng.states(n)
    err = _decoy_error(states, measure_resend(states, rng.child("eve")), rng.child("alice"))
    x = states >= 2
    assert np.all(~err[~x])
    assert abs(err[x].mean() - 0.5) < 0.01
    assert abs(err.mean() - 0.25) < 0.01


def test_intercept_resend_detection_and_determinism():
    n = 200_000
    rng = RngStream(3)
    states = rng.states(n)
    err = _decoy_error(states, intercept_resend(states, rng.child("eve")), rng.child("alice"))
    assert abs(err.mean() - 0.5) < 0.01
    assert abs(err[states < 2].mean() - 0.5) < 0.01 and abs(err[states >= 2].mean() - 0.5) < 0.01
    a = intercept_resend(states[:50], RngStream(9)).states
    b = intercept_resend(states[:50], RngStream(9)).states
    np.testing.assert_array_equal(a, b)
    assert set(np.unique(a)) <= {0, 1}


@pytest.mark.parametrize("kind, k, expected", [
    (AttackKind.MEASURE_RESEND, 1, 0.25),
    (AttackKind.INTERCEPT_RESEND, 0, 0.0),
    (AttackKind.INTERCEPT_RESEND, 1, 0.5),
    (AttackKind.BOB_INTERCEPT_CHARLIE, 1, 0.25),
    (AttackKind.ALICE_FAKE_PUBLISH, 1, 0.25),
    (AttackKind.MEASURE_RESEND, 20, 1 - 0.75 ** 20),
])
def test_closed_form_detection(kind, k, expected):
    assert closed_form_detection(kind, k) == pytest.approx(expected, abs=1e-15)


def test_closed_form_measure_resend_20():
    assert closed_form_detection("measure-resend", 20) == pytest.approx(0.99683, abs=5e-6)


def test_closed_form_unsupported():
    with pytest.raises(ValueError):
        closed_form_detection(AttackKind.ALICE_FLOOD, 3)
    with pytest.raises(ValueError):
        closed_form_detection(AttackKind.MEASURE_RESEND, -1)


# --- entangle-measure ----------------------------------------------------------------------

def test_zero_detection_parameters():
    p = _params(e=(0, 1, 2, 0))
    assert all(v == pytest.approx(0, abs=1e-15) for v in entangle_measure_detection(p).values())
    assert entangle_measure_leakage(p) == pytest.approx(0, abs=1e-12)


def test_beta1_one_always_flips_zero():
    p = EveUnitaryParams(0, 1, 1, 0, E[0], E[1], E[2], E[3])
    assert entangle_measure_detection(p)[S.Z0] == pytest.approx(1)


def test_orthogonal_probes_half_detection_on_x():
    det = entangle_measure_detection(_params(e=(0, 1, 2, 3)))
    assert det[S.XPlus] == pytest.approx(0.5) and det[S.XMinus] == pytest.approx(0.5)
    assert det[S.Z0] == 0 and det[S.Z1] == 0
    assert entangle_measure_leakage(_params(e=(0, 1, 2, 3))) == pytest.approx(1.0)


def test_detection_matches_explicit_unitary_oracle():
    gen = np.random.default_rng(0)
    for _ in range(200):
        p = random_params(gen)
        det = entangle_measure_detection(p)
        for s in S:
            assert det[s] == pytest.approx(oracle_detection(p, s), abs=1e-12)


def test_leakage_pure_formula_agrees_with_reduced_states_when_unflipped():
    gen = np.random.default_rng(1)
    for _ in range(100):
        e00, e11 = (StateVector(v / np.linalg.norm(v)) for v in gen.normal(size=(2, 4)) + 1j * gen.normal(size=(2, 4)))
        p = EveUnitaryParams(1, 0, 1j, 0, e00, E[1], E[2], e11)
        assert entangle_measure_leakage(p) == pytest.approx(probe_trace_distance(p), abs=1e-9)


def test_leakage_zero_norm_branch():
    p = EveUnitaryParams(0, 1, 0, 1, E[0], E[1], E[2], E[3])
    with pytest.raises(InvalidAttackParams):
        entangle_measure_leakage(p)


def test_params_validation():
    with pytest.raises(InvalidAttackParams):
        EveUnitaryParams(1, 1, 1, 0, *E)  # |a1|^2 + |b1|^2 = 2
    with pytest.raises(InvalidAttackParams):
        EveUnitaryParams(1, 0, 1, 0, E[0], E[1], E[2], StateVector([1, 0]))
    r = 1 / math.sqrt(2)
    with pytest.raises(InvalidAttackParams):
        # images overlap: conj(a1) b2 <e00|e10> = 1/2
        EveUnitaryParams(r, r, r, r, E[0], E[1], E[0], E[3])


def test_params_document_roundtrip():
    p = random_params(np.random.default_rng(5))
    q = EveUnitaryParams.from_dict(p.to_dict())
    assert q.to_dict() == p.to_dict()
    with pytest.raises(InvalidAttackParams):
        EveUnitaryParams.from_dict({"alpha1": [1, 0]})


def test_entangle_measure_monte_carlo_matches_analytic():
    gen = np.random.default_rng(3)
    p = random_params(gen, dim=2)
    det = entangle_measure_detection(p)
    n = 40_000
    rng = RngStream(4)
    for s in S:
        states = np.full(n, s, dtype=np.int8)
        flight = entangle_measure(states, p)
        bits = flight.measure(np.arange(n), states >> 1, rng.child(int(s)).uniforms(n))
        freq = np.mean(bits != (states & 1))
        sigma = math.sqrt(max(det[s] * (1 - det[s]), 1e-12) / n)
        assert abs(freq - det[s]) <= 4 * sigma + 1e-12


def test_entangle_measure_in_protocol():
    p = random_params(np.random.default_rng(8))
    spec = RunSpec(ProtocolConfig(2, 1, 16, 4, seed=5), AttackStrategy(AttackKind.ENTANGLE_MEASURE, params=p), 300)
    rep = monte_carlo(spec)
    per = rep.detection.per_unit_rate
    expected = rep.detection.per_unit_analytic
    assert abs(per - expected) < 4 * math.sqrt(expected * (1 - expected) / rep.detection.units_total)


def test_undetectable_entangle_attack_passes_checks():
    p = _params(e=(0, 1, 2, 0))
    for s in range(30):
        t = run_protocol(ProtocolConfig(4, 2, 8, 8, seed=s), [0] * 4, [1] * 4, [0] * 4,
                         AttackStrategy(AttackKind.ENTANGLE_MEASURE, params=p))
        assert t.channels["bob"].decoy_check.passed and t.honesty.passed


def test_zero_detection_theorem_property():
    gen = np.random.default_rng(11)
    for _ in range(1000):
        p = random_params(gen, zero_detection=True)
        assert max(entangle_measure_detection(p).values()) < 1e-9
        assert entangle_measure_leakage(p) < 1e-6
        assert probe_trace_distance(p) < 1e-6


# --- participant attacks -------------------------------------------------------------------

def test_fake_publish_announcements():
    rng = RngStream(6)
    seen_equal = {alice_fake_publish((0, 0), rng) for _ in range(200)} | {alice_fake_publish((1, 1), rng) for _ in range(200)}
    assert seen_equal == {Announcement(BellOutcome.PhiPlus), SUMMATION_ANNOUNCEMENT}
    seen_diff = {alice_fake_publish((0, 1), rng) for _ in range(200)}
    assert seen_diff == {Announcement(BellOutcome.PsiMinus), SUMMATION_ANNOUNCEMENT}


def test_fake_publish_exact_enumeration():
    assert fake_publish_check_pair_detection() == Fraction(1, 4)
    # independent recount straight from the Bell decomposition of each X(x)X pair
    total = Fraction(0)
    for b, c in itertools.product((S.XPlus, S.XMinus), repeat=2):
        for z1, z2 in itertools.product((0, 1), repeat=2):
            claim = BellOutcome.PhiPlus if z1 == z2 else BellOutcome.PsiMinus
            total += Fraction(1, 32) * (bell_decompose(b, c)[claim] == 0)
    assert total == Fraction(1, 4)


def test_flood_is_always_summation():
    assert alice_flood_summation() == SUMMATION_ANNOUNCEMENT


def test_flood_binomial_tail_below_alpha():
    # all 96 of 96 check pairs announced 'summation'
    assert 2 * stats.binom.sf(95, 96, 0.5) < 1e-6


def test_bob_intercept_without_decoys_is_silent():
    flight = InFlight(np.array([S.XPlus, S.Z0, S.XMinus, S.Z1], dtype=np.int8))
    out, touched = bob_intercept_charlie(flight, [1, 1, 1, 1], RngStream(1))
    assert touched.size == 0
    np.testing.assert_array_equal(out.states, flight.states)
    out, touched = bob_intercept_charlie(flight, [0, 1, 0, 0, 0, 0], RngStream(1))
    assert touched.tolist() == [0, 2, 3]
    assert out.states[1] == S.Z0 and out.states[3] == S.Z1 and out.states[0] in (0, 1)


def test_bob_intercept_per_measured_decoy():
    spec = RunSpec(ProtocolConfig(2, 1, 4, 64, seed=21), AttackStrategy(AttackKind.BOB_INTERCEPT_CHARLIE), 2000)
    rep = monte_carlo(spec)
    det = rep.detection
    assert det.units_total > 10_000
    assert abs(det.per_unit_rate - 0.25) < 4 * math.sqrt(0.25 * 0.75 / det.units_total)
    assert abs(det.run_rate - det.run_analytic_realized) < 4 * math.sqrt(0.25 / det.trials)


def test_strategy_sees_no_decoy_positions():
    seen = []

    class Spy(AttackStrategy):
        def tamper(self, owner, flight, rng, insider=None):
            seen.append((owner, type(flight).__name__, insider))
            return super().tamper(owner, flight, rng, insider)

    run_protocol(ProtocolConfig(2, 1, 2, 2, seed=1), [0, 1], [1, 1], [0, 0], Spy(AttackKind.MEASURE_RESEND))
    assert [s[0] for s in seen] == ["bob", "charlie"]
    assert all(s[1] == "InFlight" and s[2] is None for s in seen)


def test_bob_cannot_guess_alice_key():
    ts = [run_protocol(ProtocolConfig(16, 8, 2, 2, seed=s), *np.random.default_rng(s).integers(0, 2, (3, 16)))
          for s in range(400)]
    hits, total = bob_guess_rate(ts)
    assert abs(hits / total - 0.5) < 4 * math.sqrt(0.25 / total)


def test_unit_detection_honest_is_zero():
    t = run_protocol(ProtocolConfig(4, 2, 8, 8, seed=3), [0] * 4, [0] * 4, [0] * 4)
    assert unit_detection(t, AttackStrategy()) == (0, 16)


def test_fake_publish_caught_in_protocol():
    spec = RunSpec(ProtocolConfig(32, 16, 4, 4, seed=9), AttackStrategy(AttackKind.ALICE_FAKE_PUBLISH), 200)
    rep = monte_carlo(spec)
    assert rep.aborts[AbortReason.HonestyEq9to12.value] == 200
    assert abs(rep.detection.per_unit_rate - 0.25) < 4 * math.sqrt(0.25 * 0.75 / rep.detection.units_total)


def test_unknown_channel_rejected():
    with pytest.raises(InvalidAttackParams):
        AttackStrategy(AttackKind.MEASURE_RESEND, channels=("dave",))
    with pytest.raises(InvalidAttackParams):
        AttackStrategy(AttackKind.ENTANGLE_MEASURE)
