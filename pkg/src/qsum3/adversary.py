"""Outside and participant attacks, plus their closed-form detection rates.

An :class:`AttackStrategy` plugs into :func:`qsum3.protocol.run_protocol`
through two hooks:

``tamper(owner, flight, rng, insider)``
    Sees one sequence in transit (decoys and carriers interleaved, no
    positions) and returns the sequence Alice receives plus the positions it
    handled. ``insider`` is Bob's own carrier list, passed only when Bob is
    the attacker.
``publish(mb, mc, rng)``
    Replaces Alice's announcements when Alice cheats by measuring each pair
    in the Z(x)Z basis.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Mapping, Sequence

import numpy as np

from ._tables import BELL_QUARTERS, SUMMATION
from .protocol import (
    SUMMATION_ANNOUNCEMENT,
    AbortReason,
    Announcement,
    Transcript,
    summation_count_pvalue,
)
from .quantum_core import (
    BellOutcome,
    InFlight,
    ProbeEntangled,
    RngStream,
    SingleState,
    StateVector,
    state_vector_of,
    vec_combine,
)

PARAM_TOL = 1e-9


class AttackKind(str, enum.Enum):
    NONE = "none"
    MEASURE_RESEND = "measure-resend"
    INTERCEPT_RESEND = "intercept-resend"
    ENTANGLE_MEASURE = "entangle-measure"
    ALICE_FAKE_PUBLISH = "alice-fake-publish"
    ALICE_FLOOD = "alice-flood"
    BOB_INTERCEPT_CHARLIE = "bob-intercept-charlie"


EVE_KINDS = (AttackKind.MEASURE_RESEND, AttackKind.INTERCEPT_RESEND, AttackKind.ENTANGLE_MEASURE)


class InvalidAttackParams(ValueError):
    pass


# --- entangle-measure probe algebra ---------------------------------------------------

@dataclass(frozen=True)
class EveUnitaryParams:
    """Eve's coupling E|0>|e> = a1|0>|e00> + b1|1>|e01>, E|1>|e> = b2|0>|e10> + a2|1>|e11>.

    Besides unit-norm coefficient pairs and probes, the two images must be
    orthogonal so that E is an isometry on span{|0>|e>, |1>|e>}.
    """

    alpha1: complex
    beta1: complex
    alpha2: complex
    beta2: complex
    eps00: StateVector
    eps01: StateVector
    eps10: StateVector
    eps11: StateVector

    def __post_init__(self):
        for a, b, i in ((self.alpha1, self.beta1, 1), (self.alpha2, self.beta2, 2)):
            if abs(abs(a) ** 2 + abs(b) ** 2 - 1.0) > PARAM_TOL:
                raise InvalidAttackParams(f"|alpha{i}|^2 + |beta{i}|^2 = {abs(a) ** 2 + abs(b) ** 2:.12g}, expected 1")
        dims = {v.dim for v in self.probes}
        if len(dims) != 1:
            raise InvalidAttackParams(f"probe states have mixed dimensions {sorted(dims)}")
        for name, v in zip(("eps00", "eps01", "eps10", "eps11"), self.probes):
            if abs(v.norm2() - 1.0) > PARAM_TOL:
                raise InvalidAttackParams(f"{name} is not unit norm")
        overlap = (np.conj(self.alpha1) * self.beta2 * self.eps00.inner(self.eps10)
                   + np.conj(self.beta1) * self.alpha2 * self.eps01.inner(self.eps11))
        if abs(overlap) > PARAM_TOL:
            raise InvalidAttackParams(f"images of |0> and |1> are not orthogonal (overlap {abs(overlap):.3g})")

    @property
    def probes(self) -> tuple[StateVector, ...]:
        return (self.eps00, self.eps01, self.eps10, self.eps11)

    @property
    def dim(self) -> int:
        return self.eps00.dim

    def apply(self, s: SingleState) -> ProbeEntangled:
        """Joint carrier/probe state after Eve couples her probe to |s>."""
        a0, a1 = state_vector_of(s).amplitudes
        phi0 = a0 * self.alpha1 * self.eps00.amplitudes + a1 * self.beta2 * self.eps10.amplitudes
        phi1 = a0 * self.beta1 * self.eps01.amplitudes + a1 * self.alpha2 * self.eps11.amplitudes
        return ProbeEntangled(phi0, phi1)

    def to_dict(self) -> dict[str, Any]:
        def c(z):
            return [float(complex(z).real), float(complex(z).imag)]

        out = {k: c(getattr(self, k)) for k in ("alpha1", "beta1", "alpha2", "beta2")}
        for k in ("eps00", "eps01", "eps10", "eps11"):
            out[k] = [c(a) for a in getattr(self, k).amplitudes]
        return out

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> EveUnitaryParams:
        """Parse ``{"alpha1": [re, im], ..., "eps00": [[re, im], ...], ...}``."""
        def c(v):
            if isinstance(v, (int, float)):
                return complex(v)
            re, im = v
            return complex(float(re), float(im))

        try:
            coeffs = {k: c(doc[k]) for k in ("alpha1", "beta1", "alpha2", "beta2")}
            probes = {}
            for k in ("eps00", "eps01", "eps10", "eps11"):
                probes[k] = StateVector([c(a) for a in doc[k]], normalized=False)
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidAttackParams(f"malformed attack parameter document: {exc}") from exc
        return cls(**coeffs, **probes)


def entangle_measure_detection(p: EveUnitaryParams) -> dict[SingleState, float]:
    """Probability that a decoy in each state fails Alice's check after Eve's coupling."""
    e00, e01, e10, e11 = p.probes
    plus_err = vec_combine([p.alpha1, p.beta2, -p.beta1, -p.alpha2], [e00, e10, e01, e11])
    minus_err = vec_combine([p.alpha1, -p.beta2, p.beta1, -p.alpha2], [e00, e10, e01, e11])
    return {
        SingleState.Z0: abs(p.beta1) ** 2,
        SingleState.Z1: abs(p.beta2) ** 2,
        SingleState.XPlus: 0.25 * plus_err.norm2(),
        SingleState.XMinus: 0.25 * minus_err.norm2(),
    }


def entangle_measure_leakage(p: EveUnitaryParams) -> float:
    """Trace distance between Eve's probe states conditioned on carrier |0> and |1>.

    Uses the unflipped branches a1|e00> and a2|e11>, normalised; both are pure
    so the distance is sqrt(1 - |<e0|e1>|^2).
    """
    c0 = vec_combine([p.alpha1], [p.eps00])
    c1 = vec_combine([p.alpha2], [p.eps11])
    if c0.norm2() < 1e-24 or c1.norm2() < 1e-24:
        raise InvalidAttackParams("conditional probe state has zero norm (alpha1 or alpha2 is 0)")
    ov = c0.normalized().inner(c1.normalized())
    return math.sqrt(max(0.0, 1.0 - abs(ov) ** 2))


def probe_trace_distance(p: EveUnitaryParams) -> float:
    """Trace distance between Eve's full reduced probe states for carrier |0> vs |1>.

    Includes the flipped branches, so it also covers beta != 0.
    """
    def rho(a, ea, b, eb):
        va, vb = ea.amplitudes, eb.amplitudes
        return abs(a) ** 2 * np.outer(va, va.conj()) + abs(b) ** 2 * np.outer(vb, vb.conj())

    diff = rho(p.alpha1, p.eps00, p.beta1, p.eps01) - rho(p.alpha2, p.eps11, p.beta2, p.eps10)
    return float(0.5 * np.abs(np.linalg.eigvalsh(diff)).sum())


def _random_unit(gen: np.random.Generator, dim: int) -> np.ndarray:
    v = gen.normal(size=dim) + 1j * gen.normal(size=dim)
    return v / np.linalg.norm(v)


def random_params(gen: np.random.Generator, dim: int = 4, zero_detection: bool = False) -> EveUnitaryParams:
    """Draw valid parameters; ``zero_detection`` projects onto beta = 0, a1|e00> = a2|e11>."""
    if zero_detection:
        a1 = np.exp(2j * np.pi * gen.random())
        a2 = np.exp(2j * np.pi * gen.random())
        e00 = _random_unit(gen, dim)
        e11 = (a1 / a2) * e00
        return EveUnitaryParams(a1, 0j, a2, 0j, StateVector(e00), StateVector(_random_unit(gen, dim)),
                                StateVector(_random_unit(gen, dim)), StateVector(e11))
    while True:
        t1, t2 = gen.random(2) * (np.pi / 2)
        p1, p2, p3, p4 = np.exp(2j * np.pi * gen.random(4))
        a1, b1 = np.cos(t1) * p1, np.sin(t1) * p2
        a2, b2 = np.cos(t2) * p3, np.sin(t2) * p4
        e00, e01, e11 = (_random_unit(gen, dim) for _ in range(3))
        # pick e10 so the two images are orthogonal: conj(a1) b2 <e00|e10> = -conj(b1) a2 <e01|e11>
        rhs = -np.conj(b1) * a2 * np.vdot(e01, e11)
        lead = np.conj(a1) * b2
        if abs(lead) < 1e-12:
            if abs(rhs) > 1e-12:
                continue
            e10 = _random_unit(gen, dim)
        else:
            c = rhs / lead  # required <e00|e10>
            if abs(c) > 1.0:
                continue
            w = _random_unit(gen, dim)
            w = w - np.vdot(e00, w) * e00
            w /= np.linalg.norm(w)
            e10 = c * e00 + math.sqrt(max(0.0, 1.0 - abs(c) ** 2)) * w
        return EveUnitaryParams(a1, b1, a2, b2, StateVector(e00), StateVector(e01),
                                StateVector(e10), StateVector(e11))


# --- channel attacks ------------------------------------------------------------------

def _as_flight(seq) -> InFlight:
    return seq if isinstance(seq, InFlight) else InFlight(seq)


def measure_resend(seq, rng: RngStream) -> InFlight:
    """Measure every particle in Z and resend the result."""
    flight = _as_flight(seq)
    size = len(flight)
    bits = flight.measure(np.arange(size), np.zeros(size, dtype=np.int8), rng.uniforms(size))
    return InFlight(bits)


def intercept_resend(seq, rng: RngStream) -> InFlight:
    """Keep the originals and send fresh uniformly random Z-basis particles instead."""
    return InFlight(rng.bits(len(_as_flight(seq))))


def entangle_measure(seq, params: EveUnitaryParams) -> InFlight:
    flight = _as_flight(seq)
    if not flight.is_pure:
        raise ValueError("sequence already carries entangled particles")
    coupled = {i: params.apply(SingleState(int(s))) for i, s in enumerate(flight.states)}
    return InFlight(np.full(len(flight), -1, dtype=np.int8), coupled)


def bob_intercept_charlie(seq, bob_bases: Sequence[int], rng: RngStream) -> tuple[InFlight, np.ndarray]:
    """Bob Z-measures position k of Charlie's sequence whenever his own k-th carrier is Z-basis.

    Bob does not know where Charlie's decoys sit, so his index alignment is
    shifted by them and some decoys get measured.
    """
    flight = _as_flight(seq)
    bases = np.asarray(bob_bases, dtype=np.int8)
    limit = min(len(flight), bases.size)
    touched = np.flatnonzero(bases[:limit] == 0)
    bits = flight.measure(touched, np.zeros(touched.size, dtype=np.int8), rng.uniforms(touched.size))
    states = flight.states.copy()
    states[touched] = bits
    return InFlight(states, {k: v for k, v in flight.entangled.items() if k not in set(touched.tolist())}), touched


# --- Alice cheating ---------------------------------------------------------------------

def fake_publish_many(mb: np.ndarray, mc: np.ndarray, coins: np.ndarray) -> np.ndarray:
    """Vectorised fake publication: coin 1 publishes a direct result, coin 0 'summation'."""
    direct = np.where(mb == mc, BellOutcome.PhiPlus, BellOutcome.PsiMinus).astype(np.int8)
    return np.where(coins == 1, direct, SUMMATION).astype(np.int8)


def alice_fake_publish(outcome_zbasis: tuple[int, int], rng: RngStream) -> Announcement:
    b1, b2 = outcome_zbasis
    code = fake_publish_many(np.array([b1], dtype=np.int8), np.array([b2], dtype=np.int8), rng.bits(1))
    return Announcement.from_code(int(code[0]))


def alice_flood_summation() -> Announcement:
    return SUMMATION_ANNOUNCEMENT


def fake_publish_check_pair_detection() -> Fraction:
    """Exact per-pair detection of fake publication by enumerating every X(x)X case.

    For each preparation, Alice's Z(x)Z result is uniform over four bit pairs
    and her coin is fair; a direct claim is caught when it has zero amplitude
    in the prepared product state.
    """
    total = Fraction(0)
    for bob in (SingleState.XPlus, SingleState.XMinus):
        for charlie in (SingleState.XPlus, SingleState.XMinus):
            row = BELL_QUARTERS[4 * bob + charlie]
            for b1 in (0, 1):
                for b2 in (0, 1):
                    claim = BellOutcome.PhiPlus if b1 == b2 else BellOutcome.PsiMinus
                    caught = row[claim] == 0
                    total += Fraction(1, 4) * Fraction(1, 4) * Fraction(1, 2) * caught
    return total


# --- strategies ------------------------------------------------------------------------------

@dataclass(frozen=True)
class AttackStrategy:
    kind: AttackKind = AttackKind.NONE
    channels: tuple[str, ...] = ("bob",)  # sequences Eve intercepts
    params: EveUnitaryParams | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", AttackKind(self.kind))
        if self.kind is AttackKind.ENTANGLE_MEASURE and self.params is None:
            raise InvalidAttackParams("entangle-measure needs EveUnitaryParams")
        bad = set(self.channels) - {"bob", "charlie"}
        if bad:
            raise InvalidAttackParams(f"unknown channel(s) {sorted(bad)}")

    @property
    def name(self) -> str:
        return self.kind.value

    @property
    def party(self) -> str | None:
        if self.kind in EVE_KINDS:
            return "eve"
        if self.kind is AttackKind.BOB_INTERCEPT_CHARLIE:
            return "bob"
        if self.kind in (AttackKind.ALICE_FAKE_PUBLISH, AttackKind.ALICE_FLOOD):
            return "alice"
        return None

    @property
    def alice_mode(self) -> str:
        return {AttackKind.ALICE_FAKE_PUBLISH: "fake_publish", AttackKind.ALICE_FLOOD: "flood"}.get(self.kind, "honest")

    @property
    def attacked_channels(self) -> tuple[str, ...]:
        if self.kind in EVE_KINDS:
            return self.channels
        if self.kind is AttackKind.BOB_INTERCEPT_CHARLIE:
            return ("charlie",)
        return ()

    def tamper(self, owner: str, flight: InFlight, rng: RngStream, insider=None):
        everything = np.arange(len(flight))
        if self.kind in EVE_KINDS and owner in self.channels:
            if self.kind is AttackKind.MEASURE_RESEND:
                return measure_resend(flight, rng), everything
            if self.kind is AttackKind.INTERCEPT_RESEND:
                return intercept_resend(flight, rng), everything
            return entangle_measure(flight, self.params), everything
        if self.kind is AttackKind.BOB_INTERCEPT_CHARLIE and owner == "charlie":
            return bob_intercept_charlie(flight, np.asarray(insider) >> 1, rng)
        return flight, np.zeros(0, dtype=np.int64)

    def publish(self, mb: np.ndarray, mc: np.ndarray, rng: RngStream) -> np.ndarray:
        if self.kind is AttackKind.ALICE_FAKE_PUBLISH:
            return fake_publish_many(mb, mc, rng.bits(mb.size))
        if self.kind is AttackKind.ALICE_FLOOD:
            return np.full(mb.size, SUMMATION, dtype=np.int8)
        raise ValueError(f"{self.name} does not replace Alice's announcements")


NO_ATTACK = AttackStrategy()


# --- analytics ---------------------------------------------------------------------------------

def closed_form_detection(kind: AttackKind | str, k: int) -> float:
    """Probability that k independent units (decoys or check pairs) reveal the attack."""
    kind = AttackKind(kind)
    if k < 0:
        raise ValueError("unit count must be >= 0")
    survive = {
        AttackKind.MEASURE_RESEND: Fraction(3, 4),
        AttackKind.BOB_INTERCEPT_CHARLIE: Fraction(3, 4),
        AttackKind.ALICE_FAKE_PUBLISH: Fraction(3, 4),
        AttackKind.INTERCEPT_RESEND: Fraction(1, 2),
    }.get(kind)
    if survive is None:
        raise ValueError(f"no closed form for {kind.value}")
    return float(1 - survive ** k)


def entangle_measure_run_detection(p: EveUnitaryParams, gamma: int) -> float:
    """Decoy states are uniform, so each decoy catches Eve with the mean of the four rates."""
    per_decoy = float(np.mean(list(entangle_measure_detection(p).values())))
    return 1.0 - (1.0 - per_decoy) ** gamma


def flood_rejected(check_pairs: int, alpha: float) -> bool:
    """Whether an all-'summation' audit over ``check_pairs`` X(x)X pairs is rejected."""
    return check_pairs > 0 and summation_count_pvalue(check_pairs, check_pairs) < alpha


def unit_detection(t: Transcript, strategy: AttackStrategy) -> tuple[int, int]:
    """(detected, examined) attack-revealing units in one transcript.

    Units are attacked decoys for channel attacks, X(x)X check pairs for fake
    publication, and the run itself for flooding.
    """
    kind = strategy.kind
    if kind in (AttackKind.ALICE_FAKE_PUBLISH,):
        if t.honesty is None:
            return 0, 0
        return t.honesty.violations, t.honesty.check_pairs
    if kind is AttackKind.ALICE_FLOOD:
        if t.honesty is None:
            return 0, 0
        return int(t.honesty.reason is AbortReason.HonestySummationCount), 1
    channels = strategy.attacked_channels or ("bob", "charlie")
    detected = total = 0
    for owner in channels:
        seq = t.bob if owner == "bob" else t.charlie
        log = t.channels[owner]
        mismatched = log.decoy_measured != (seq.decoy_states & 1)
        mask = log.touched_decoys(seq) if strategy.attacked_channels else np.ones(seq.decoy_states.size, bool)
        detected += int(np.count_nonzero(mismatched & mask))
        total += int(np.count_nonzero(mask))
    return detected, total


def run_detected(t: Transcript, strategy: AttackStrategy) -> bool:
    """Whether this run aborted at the check aimed at ``strategy``."""
    reason = getattr(t.outcome, "reason", None)
    kind = strategy.kind
    if kind is AttackKind.ALICE_FAKE_PUBLISH:
        return reason is AbortReason.HonestyEq9to12
    if kind is AttackKind.ALICE_FLOOD:
        return reason is AbortReason.HonestySummationCount
    if kind is AttackKind.NONE:
        return reason in (AbortReason.DecoyCheckBob, AbortReason.DecoyCheckCharlie)
    targets = {"bob": AbortReason.DecoyCheckBob, "charlie": AbortReason.DecoyCheckCharlie}
    return reason in {targets[c] for c in strategy.attacked_channels}


def realized_run_detection(t: Transcript, strategy: AttackStrategy) -> float | None:
    """Closed-form detection evaluated at this run's realised unit count (tau, check pairs)."""
    kind = strategy.kind
    if kind is AttackKind.BOB_INTERCEPT_CHARLIE:
        return closed_form_detection(kind, unit_detection(t, strategy)[1])
    if kind is AttackKind.ALICE_FAKE_PUBLISH and t.honesty is not None:
        return closed_form_detection(kind, t.honesty.check_pairs)
    return None


def bob_guess_rate(transcripts: Sequence[Transcript]) -> tuple[int, int]:
    """How often Bob's best guess of Alice's key bit (ka = kb) is right, over completed runs.

    Since ka = kb ^ kc and kc is uniform and unknown to Bob, this should sit at 1/2.
    """
    hits = total = 0
    for t in transcripts:
        if t.keys is None:
            continue
        ka, kb, _ = t.keys
        hits += int(np.count_nonzero(ka == kb))
        total += int(ka.size)
    return hits, total


@dataclass
class AttackReport:
    kind: str
    trials: int
    unit: str
    units_detected: int
    units_total: int
    runs_detected: int
    per_unit_analytic: float | None
    run_analytic: float | None
    run_analytic_realized: float | None = None
    leakage: float | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.trials <= 0:
            raise ValueError("trials must be positive")

    @property
    def per_unit_rate(self) -> float | None:
        return self.units_detected / self.units_total if self.units_total else None

    @property
    def run_rate(self) -> float:
        return self.runs_detected / self.trials
