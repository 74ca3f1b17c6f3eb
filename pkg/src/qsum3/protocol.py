"""The five-step three-user summation protocol as a sequential state machine.

Alice receives Bob's and Charlie's decoy-padded sequences, checks both
channels with the decoys, Bell-measures the carrier pairs, is audited on the
X-basis pairs, and the first n Z-basis "summation" pairs become one-time pads
that cancel in the public sum.

Per-pair data in a :class:`Transcript` is stored column-wise as int8 arrays;
:attr:`Transcript.records` materialises :class:`PairRecord` objects on demand.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Sequence

import numpy as np
from scipy.stats import binomtest

from . import kernels
from ._tables import BELL_QUARTERS, NO_OUTCOME, SUMMATION
from .quantum_core import (
    Basis,
    BellOutcome,
    InFlight,
    RngStream,
    SingleState,
    bell_measure_flights,
)


class MalformedTranscriptError(ValueError):
    pass


class SelectionError(RuntimeError):
    """A record reached a stage it should have been filtered out of."""


@dataclass(frozen=True)
class ProtocolConfig:
    n: int
    delta: int
    gamma_b: int
    gamma_c: int
    seed: int = 0
    decoy_error_tolerance: float = 0.0
    summation_count_alpha: float = 1e-6
    # extend the announcement-consistency audit to every pair, not only X(x)X
    strict_consistency: bool = False

    def __post_init__(self):
        for name in ("n", "delta", "gamma_b", "gamma_c"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer, got {getattr(self, name)}")
        if not 0.0 <= self.decoy_error_tolerance < 1.0:
            raise ValueError("decoy_error_tolerance must lie in [0, 1)")
        if not 0.0 < self.summation_count_alpha < 1.0:
            raise ValueError("summation_count_alpha must lie in (0, 1)")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def pair_count(self) -> int:
        return 8 * (self.n + self.delta)

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "delta": self.delta,
            "gamma_b": self.gamma_b,
            "gamma_c": self.gamma_c,
            "seed": self.seed,
            "decoy_error_tolerance": self.decoy_error_tolerance,
            "summation_count_alpha": self.summation_count_alpha,
            "strict_consistency": self.strict_consistency,
        }


@dataclass(frozen=True, eq=False)
class PreparedSequence:
    """Carriers plus decoys. ``decoy_positions`` are 0-based, sorted, in the interleaved order."""

    carriers: np.ndarray
    decoy_positions: np.ndarray
    decoy_states: np.ndarray
    owner: str

    @property
    def length(self) -> int:
        return self.carriers.size + self.decoy_states.size

    def interleaved(self) -> np.ndarray:
        seq = np.empty(self.length, dtype=np.int8)
        mask = np.ones(self.length, dtype=bool)
        mask[self.decoy_positions] = False
        seq[self.decoy_positions] = self.decoy_states
        seq[mask] = self.carriers
        return seq

    def carrier_positions(self) -> np.ndarray:
        mask = np.ones(self.length, dtype=bool)
        mask[self.decoy_positions] = False
        return np.flatnonzero(mask)

    def __eq__(self, other):
        if not isinstance(other, PreparedSequence):
            return NotImplemented
        return (self.owner == other.owner
                and np.array_equal(self.carriers, other.carriers)
                and np.array_equal(self.decoy_positions, other.decoy_positions)
                and np.array_equal(self.decoy_states, other.decoy_states))


def prepare_sequence(carrier_count: int, decoy_count: int, rng: RngStream, owner: str = "") -> PreparedSequence:
    if carrier_count < 1 or decoy_count < 1:
        raise ValueError("carrier_count and decoy_count must be >= 1")
    carriers = rng.states(carrier_count)
    decoys = rng.states(decoy_count)
    positions = rng.sample_positions(carrier_count + decoy_count, decoy_count)
    return PreparedSequence(carriers, positions.astype(np.int64), decoys, owner)


# --- announcements ----------------------------------------------------------------

@dataclass(frozen=True)
class Announcement:
    """Alice's public word for one pair: a direct Bell result or 'summation'.

    Only phi+ and psi- can be published directly, so a public record can never
    tell phi- from psi+.
    """

    direct: BellOutcome | None = None

    def __post_init__(self):
        if self.direct is not None and self.direct not in (BellOutcome.PhiPlus, BellOutcome.PsiMinus):
            raise ValueError(f"{self.direct!r} may not be published directly")

    @property
    def is_summation(self) -> bool:
        return self.direct is None

    @property
    def code(self) -> int:
        return SUMMATION if self.direct is None else int(self.direct)

    @classmethod
    def from_code(cls, code: int) -> Announcement:
        return SUMMATION_ANNOUNCEMENT if code == SUMMATION else cls(BellOutcome(code))

    def __str__(self):
        return "summation" if self.direct is None else self.direct.name


SUMMATION_ANNOUNCEMENT = Announcement()


def alice_announce(outcome: BellOutcome) -> Announcement:
    return Announcement.from_code(int(kernels.announce(np.array([outcome], dtype=np.int8))[0]))


# --- checks -----------------------------------------------------------------------

@dataclass(frozen=True)
class DecoyCheckResult:
    passed: bool
    mismatches: int
    total: int

    @property
    def error_rate(self) -> float:
        return self.mismatches / self.total


def decoy_check(prepared: Sequence[tuple[Basis, int]], measured: Sequence[int], tolerance: float = 0.0) -> DecoyCheckResult:
    if len(prepared) != len(measured):
        raise MalformedTranscriptError(f"{len(prepared)} decoys prepared but {len(measured)} outcomes reported")
    if not prepared:
        raise MalformedTranscriptError("decoy check needs at least one decoy")
    expected = np.fromiter((bit for _, bit in prepared), dtype=np.int8, count=len(prepared))
    return _decoy_check_arrays(expected, np.asarray(measured, dtype=np.int8), tolerance)


def _decoy_check_arrays(expected_bits: np.ndarray, measured: np.ndarray, tolerance: float) -> DecoyCheckResult:
    bad = int(np.count_nonzero(expected_bits != measured))
    return DecoyCheckResult(bad / expected_bits.size <= tolerance, bad, int(expected_bits.size))


@lru_cache(maxsize=4096)
def summation_count_pvalue(count: int, trials: int) -> float:
    """Two-sided exact binomial(trials, 1/2) p-value of observing ``count``."""
    if trials == 0:
        return 1.0
    return float(binomtest(count, trials, 0.5, alternative="two-sided").pvalue)


@dataclass(frozen=True)
class HonestyResult:
    passed: bool
    check_pairs: int
    summation_count: int
    violations: int
    first_violation: int  # pair index, -1 if none
    pvalue: float
    reason: AbortReason | None = None


def _audit(bob: np.ndarray, charlie: np.ndarray, ann: np.ndarray, alpha: float, strict: bool = False) -> HonestyResult:
    xx, summ, bad, first = kernels.audit_xx(bob, charlie, ann)
    if strict:
        direct = ann != SUMMATION
        legal = _QUARTERS[4 * bob.astype(np.intp) + charlie, np.where(direct, ann, 0)] > 0
        offenders = np.flatnonzero(direct & ~legal)
        bad = int(offenders.size)
        first = int(offenders[0]) if bad else -1
    pvalue = summation_count_pvalue(summ, xx)
    if bad:
        reason = AbortReason.HonestyEq9to12
    elif pvalue < alpha:
        reason = AbortReason.HonestySummationCount
    else:
        reason = None
    return HonestyResult(reason is None, xx, summ, bad, first, pvalue, reason)


_QUARTERS = np.array(BELL_QUARTERS, dtype=np.int8)


def honesty_check(records: Sequence[PairRecord], alpha: float = 1e-6) -> HonestyResult:
    """Audit Alice on X(x)X pairs: legal direct announcements and a plausible summation count."""
    for r in records:
        if r.bob_prepared.basis is not Basis.X or r.charlie_prepared.basis is not Basis.X:
            raise SelectionError(f"pair {r.index} is not an X(x)X check pair")
    bob, charlie, ann = _record_columns(records)
    result = _audit(bob, charlie, ann, alpha)
    if result.first_violation >= 0:
        result = _replace_first(result, records[result.first_violation].index)
    return result


def _replace_first(result: HonestyResult, index: int) -> HonestyResult:
    return HonestyResult(result.passed, result.check_pairs, result.summation_count,
                         result.violations, index, result.pvalue, result.reason)


# --- message pairs and keys -------------------------------------------------------

@dataclass(frozen=True)
class PairRecord:
    index: int
    bob_prepared: SingleState
    charlie_prepared: SingleState
    alice_outcome: BellOutcome | None  # None when Alice did not Bell-measure
    announcement: Announcement
    alice_zbits: tuple[int, int] | None = None


def _record_columns(records: Sequence[PairRecord]):
    bob = np.fromiter((r.bob_prepared for r in records), dtype=np.int8, count=len(records))
    charlie = np.fromiter((r.charlie_prepared for r in records), dtype=np.int8, count=len(records))
    ann = np.fromiter((r.announcement.code for r in records), dtype=np.int8, count=len(records))
    return bob, charlie, ann


def select_message_pairs(records: Sequence[PairRecord], n: int) -> list[int] | None:
    """Indices of the first n message pairs, or None when fewer than n exist (Step 4 abort)."""
    bob, charlie, ann = _record_columns(records)
    picked = kernels.message_indices(bob, charlie, ann)
    if picked.size < n:
        return None
    return [records[int(i)].index for i in picked[:n]]


def derive_keys(selected: Sequence[PairRecord]) -> tuple[list[int], list[int], list[int]]:
    ka, kb, kc = [], [], []
    for r in selected:
        if r.bob_prepared.basis is not Basis.Z or r.charlie_prepared.basis is not Basis.Z or not r.announcement.is_summation:
            raise SelectionError(f"pair {r.index} is not a message pair")
        if r.alice_outcome is None:
            if r.alice_zbits is None:
                raise SelectionError(f"pair {r.index} has no measurement by Alice")
            ka.append(r.alice_zbits[0] ^ r.alice_zbits[1])
        elif r.alice_outcome is BellOutcome.PhiMinus:
            ka.append(0)
        elif r.alice_outcome is BellOutcome.PsiPlus:
            ka.append(1)
        else:
            raise SelectionError(f"pair {r.index}: outcome {r.alice_outcome.name} cannot yield a key bit")
        kb.append(r.bob_prepared.bit)
        kc.append(r.charlie_prepared.bit)
    return ka, kb, kc


def compute_summation(x, y, z, ka, kb, kc):
    """Published strings SA, SB, SC and the sum SA ^ SB ^ SC."""
    arrays = [np.asarray(v, dtype=np.int8) for v in (x, y, z, ka, kb, kc)]
    if len({a.size for a in arrays}) != 1:
        raise ValueError("inputs and keys must all have length n")
    x, y, z, ka, kb, kc = arrays
    sa, sb, sc = ka ^ x, kb ^ y, kc ^ z
    return sa, sb, sc, sa ^ sb ^ sc


# --- orchestration ------------------------------------------------------------------

class AbortReason(enum.Enum):
    DecoyCheckBob = "DecoyCheckBob"
    DecoyCheckCharlie = "DecoyCheckCharlie"
    HonestyEq9to12 = "HonestyEq9to12"
    HonestySummationCount = "HonestySummationCount"
    InsufficientMessagePairs = "InsufficientMessagePairs"


ABORT_STEP = {
    AbortReason.DecoyCheckBob: 2,
    AbortReason.DecoyCheckCharlie: 2,
    AbortReason.HonestyEq9to12: 3,
    AbortReason.HonestySummationCount: 3,
    AbortReason.InsufficientMessagePairs: 4,
}


@dataclass(frozen=True)
class Completed:
    sum: tuple[int, ...]


@dataclass(frozen=True)
class Aborted:
    step: int
    reason: AbortReason


@dataclass
class ChannelLog:
    """What happened to one quantum sequence in transit and at its decoy check."""

    owner: str
    crossings: int = 1
    touched: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    decoy_measured: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))
    decoy_check: DecoyCheckResult | None = None

    def touched_decoys(self, seq: PreparedSequence) -> np.ndarray:
        """Mask over decoys: True where the attacker handled that decoy."""
        return np.isin(seq.decoy_positions, self.touched)


@dataclass
class Transcript:
    config: ProtocolConfig
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    bob: PreparedSequence
    charlie: PreparedSequence
    channels: dict[str, ChannelLog]
    attack: str = "none"
    alice_outcomes: np.ndarray | None = None
    alice_zbits: np.ndarray | None = None  # (2, pairs) when Alice measured in Z(x)Z
    announcements: np.ndarray | None = None
    honesty: HonestyResult | None = None
    selected: np.ndarray | None = None
    keys: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None
    published: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None
    outcome: Completed | Aborted | None = None

    @property
    def completed(self) -> bool:
        return isinstance(self.outcome, Completed)

    @property
    def records(self) -> list[PairRecord]:
        if self.announcements is None:
            return []
        out = []
        for j in range(self.announcements.size):
            outcome = None
            if self.alice_outcomes is not None and self.alice_outcomes[j] != NO_OUTCOME:
                outcome = BellOutcome(int(self.alice_outcomes[j]))
            zbits = None
            if self.alice_zbits is not None:
                zbits = (int(self.alice_zbits[0, j]), int(self.alice_zbits[1, j]))
            out.append(PairRecord(j, SingleState(int(self.bob.carriers[j])),
                                  SingleState(int(self.charlie.carriers[j])), outcome,
                                  Announcement.from_code(int(self.announcements[j])), zbits))
        return out

    def message_pair_count(self) -> int:
        if self.announcements is None:
            return 0
        return int(kernels.message_indices(self.bob.carriers, self.charlie.carriers, self.announcements).size)

    def to_dict(self) -> dict[str, Any]:
        def bits(a):
            return None if a is None else [int(v) for v in a]

        out = {
            "config": self.config.to_dict(),
            "attack": self.attack,
            "inputs": {"x": bits(self.x), "y": bits(self.y), "z": bits(self.z)},
            "sequences": {
                seq.owner: {
                    "carriers": bits(seq.carriers),
                    "decoy_positions": bits(seq.decoy_positions),
                    "decoy_states": bits(seq.decoy_states),
                }
                for seq in (self.bob, self.charlie)
            },
            "channels": {
                name: {
                    "crossings": log.crossings,
                    "touched": len(log.touched),
                    "decoy_measured": bits(log.decoy_measured),
                    "decoy_mismatches": None if log.decoy_check is None else log.decoy_check.mismatches,
                    "decoy_passed": None if log.decoy_check is None else log.decoy_check.passed,
                }
                for name, log in self.channels.items()
            },
            "alice_outcomes": bits(self.alice_outcomes),
            "announcements": None if self.announcements is None else [str(Announcement.from_code(int(a))) for a in self.announcements],
            "honesty": None,
            "selected": bits(self.selected),
            "keys": None if self.keys is None else dict(zip(("KA", "KB", "KC"), map(bits, self.keys))),
            "published": None if self.published is None else dict(zip(("SA", "SB", "SC"), map(bits, self.published))),
        }
        if self.honesty is not None:
            h = self.honesty
            out["honesty"] = {"passed": h.passed, "check_pairs": h.check_pairs, "summation_count": h.summation_count,
                              "violations": h.violations, "pvalue": h.pvalue}
        if isinstance(self.outcome, Completed):
            out["outcome"] = {"status": "completed", "sum": list(self.outcome.sum)}
        elif isinstance(self.outcome, Aborted):
            out["outcome"] = {"status": "aborted", "step": self.outcome.step, "reason": self.outcome.reason.value}
        return out


def _abort(t: Transcript, reason: AbortReason) -> Transcript:
    t.outcome = Aborted(ABORT_STEP[reason], reason)
    return t


def _bits(v, n: int, name: str) -> np.ndarray:
    a = np.asarray(v, dtype=np.int8).reshape(-1)
    if a.size != n or np.any((a != 0) & (a != 1)):
        raise ValueError(f"{name} must be a list of {n} bits")
    return a


def run_protocol(config: ProtocolConfig, x, y, z, adversary=None) -> Transcript:
    """Run Steps 1-5 once. Every failure path ends in an ``Aborted`` outcome.

    ``adversary`` is an :class:`qsum3.adversary.AttackStrategy` or None for an
    honest run.
    """
    n = config.n
    x, y, z = _bits(x, n, "X"), _bits(y, n, "Y"), _bits(z, n, "Z")
    root = RngStream(config.seed)
    alice_rng = root.child("alice")
    attacker_rng = root.child("adversary")

    # Step 1
    seqs = {
        "bob": prepare_sequence(config.pair_count, config.gamma_b, root.child("bob"), "bob"),
        "charlie": prepare_sequence(config.pair_count, config.gamma_c, root.child("charlie"), "charlie"),
    }
    t = Transcript(config, x, y, z, seqs["bob"], seqs["charlie"],
                   channels={k: ChannelLog(k) for k in seqs},
                   attack="none" if adversary is None else adversary.name)

    flights = {}
    for owner, seq in seqs.items():
        flight = InFlight(seq.interleaved())
        if adversary is not None:
            insider = seqs["bob"].carriers.copy() if adversary.party == "bob" else None
            flight, touched = adversary.tamper(owner, flight, attacker_rng.child(owner), insider)
            t.channels[owner].touched = np.asarray(touched, dtype=np.int64)
        flights[owner] = flight

    # Step 2
    for owner, seq in seqs.items():
        log = t.channels[owner]
        bases = seq.decoy_states >> 1
        log.decoy_measured = flights[owner].measure(
            seq.decoy_positions, bases, alice_rng.child("decoy-" + owner).uniforms(seq.decoy_states.size))
        log.decoy_check = _decoy_check_arrays(seq.decoy_states & 1, log.decoy_measured, config.decoy_error_tolerance)
    if not t.channels["bob"].decoy_check.passed:
        return _abort(t, AbortReason.DecoyCheckBob)
    if not t.channels["charlie"].decoy_check.passed:
        return _abort(t, AbortReason.DecoyCheckCharlie)

    # Step 3
    fb = flights["bob"].take(seqs["bob"].carrier_positions())
    fc = flights["charlie"].take(seqs["charlie"].carrier_positions())
    pair_rng = alice_rng.child("pairs")
    alice_mode = "honest" if adversary is None else adversary.alice_mode
    if alice_mode == "honest":
        t.alice_outcomes = bell_measure_flights(fb, fc, pair_rng)
        t.announcements = kernels.announce(t.alice_outcomes)
    else:
        zeros = np.zeros(len(fb), dtype=np.int8)
        mb = fb.measure(np.arange(len(fb)), zeros, pair_rng.uniforms(len(fb)))
        mc = fc.measure(np.arange(len(fc)), zeros, pair_rng.uniforms(len(fc)))
        t.alice_zbits = np.vstack([mb, mc])
        t.alice_outcomes = np.full(len(fb), NO_OUTCOME, dtype=np.int8)
        t.announcements = adversary.publish(mb, mc, attacker_rng.child("publish"))

    bob_c, charlie_c = seqs["bob"].carriers, seqs["charlie"].carriers
    t.honesty = _audit(bob_c, charlie_c, t.announcements, config.summation_count_alpha, config.strict_consistency)
    if not t.honesty.passed:
        return _abort(t, t.honesty.reason)

    # Step 4
    picked = kernels.message_indices(bob_c, charlie_c, t.announcements)
    if picked.size < n:
        return _abort(t, AbortReason.InsufficientMessagePairs)

    # Step 5
    sel = picked[:n]
    t.selected = sel
    if t.alice_zbits is None:
        ka = (t.alice_outcomes[sel] == BellOutcome.PsiPlus).astype(np.int8)
    else:
        ka = t.alice_zbits[0, sel] ^ t.alice_zbits[1, sel]
    kb = bob_c[sel] & 1
    kc = charlie_c[sel] & 1
    t.keys = (ka, kb, kc)
    sa, sb, sc, total = compute_summation(x, y, z, ka, kb, kc)
    t.published = (sa, sb, sc)
    t.outcome = Completed(tuple(int(v) for v in total))
    return t
