"""Single-particle states, the Bell basis, and measurement sampling.

Every amplitude on the protocol path is a multiple of 1/2 or 1/sqrt(2), so
Bell-measurement statistics come from an exact table of quarters rather than
from floating-point amplitudes. Floating point is used only by
:class:`StateVector` (probe algebra for the entangle-measure attack).
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass
from enum import IntEnum
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import kernels
from ._tables import BELL_QUARTERS

SQRT1_2 = 1.0 / np.sqrt(2.0)
NORM_TOL = 1e-9
_MASK64 = (1 << 64) - 1


class Basis(IntEnum):
    Z = 0
    X = 1


class SingleState(IntEnum):
    Z0 = 0
    Z1 = 1
    XPlus = 2
    XMinus = 3

    @property
    def basis(self) -> Basis:
        return Basis(self >> 1)

    @property
    def bit(self) -> int:
        """0 for |0>/|+>, 1 for |1>/|->."""
        return int(self) & 1

    @classmethod
    def from_basis_bit(cls, basis: Basis, bit: int) -> SingleState:
        return cls(2 * int(basis) + (bit & 1))


class BellOutcome(IntEnum):
    PhiPlus = 0
    PhiMinus = 1
    PsiPlus = 2
    PsiMinus = 3


def basis_of(s: SingleState) -> Basis:
    return SingleState(s).basis


class MalformedVectorError(ValueError):
    """Vectors of incompatible dimension or invalid normalisation."""


@dataclass(frozen=True, eq=False)
class StateVector:
    """Complex amplitude vector. Unit norm unless built with ``normalized=False``."""

    amplitudes: np.ndarray

    def __init__(self, amplitudes, normalized: bool = True):
        amps = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
        if amps.size < 1:
            raise MalformedVectorError("state vector needs dimension >= 1")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        if normalized and abs(self.norm2() - 1.0) > NORM_TOL:
            raise MalformedVectorError(f"state vector is not unit norm (|v|^2 = {self.norm2():.12g})")

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def norm2(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def norm(self) -> float:
        return float(np.sqrt(self.norm2()))

    def inner(self, other: StateVector) -> complex:
        """<self|other>, conjugate-linear in ``self``."""
        if other.dim != self.dim:
            raise MalformedVectorError(f"dimension mismatch: {self.dim} vs {other.dim}")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def normalized(self) -> StateVector:
        nrm = self.norm()
        if nrm == 0.0:
            raise MalformedVectorError("cannot normalise the zero vector")
        return StateVector(self.amplitudes / nrm)

    def __eq__(self, other):
        if not isinstance(other, StateVector):
            return NotImplemented
        return self.dim == other.dim and bool(np.allclose(self.amplitudes, other.amplitudes, atol=1e-12))

    def __hash__(self):
        return hash(tuple(np.round(self.amplitudes, 12)))


def vec_combine(coeffs: Sequence[complex], vectors: Sequence[StateVector]) -> StateVector:
    """Return sum(coeffs[k] * vectors[k]) as an unnormalised vector."""
    if len(coeffs) != len(vectors):
        raise MalformedVectorError(f"{len(coeffs)} coefficients for {len(vectors)} vectors")
    if not vectors:
        raise MalformedVectorError("need at least one vector")
    dims = {v.dim for v in vectors}
    if len(dims) != 1:
        raise MalformedVectorError(f"dimension mismatch among vectors: {sorted(dims)}")
    acc = np.zeros(vectors[0].dim, dtype=np.complex128)
    for c, v in zip(coeffs, vectors):
        acc = acc + complex(c) * v.amplitudes
    return StateVector(acc, normalized=False)


_STATE_AMPS = {
    SingleState.Z0: (1.0, 0.0),
    SingleState.Z1: (0.0, 1.0),
    SingleState.XPlus: (SQRT1_2, SQRT1_2),
    SingleState.XMinus: (SQRT1_2, -SQRT1_2),
}


def state_vector_of(s: SingleState) -> StateVector:
    return StateVector(_STATE_AMPS[SingleState(s)])


# Bell states in the computational basis |00>,|01>,|10>,|11>.
BELL_VECTORS = {
    BellOutcome.PhiPlus: np.array([1, 0, 0, 1]) * SQRT1_2,
    BellOutcome.PhiMinus: np.array([1, 0, 0, -1]) * SQRT1_2,
    BellOutcome.PsiPlus: np.array([0, 1, 1, 0]) * SQRT1_2,
    BellOutcome.PsiMinus: np.array([0, 1, -1, 0]) * SQRT1_2,
}


def bell_decompose(s1: SingleState, s2: SingleState) -> dict[BellOutcome, Fraction]:
    """Exact Bell-measurement distribution for the product state s1 (x) s2."""
    row = BELL_QUARTERS[4 * int(s1) + int(s2)]
    return {k: Fraction(row[k], 4) for k in BellOutcome}


class RngStream:
    """Seeded counter-based random stream (Philox) with named substreams.

    A stream is identified by its master seed and a path of integer keys;
    ``child`` extends the path, so substreams are independent of the order
    in which they are created or consumed.
    """

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        seed = int(seed)
        if not 0 <= seed <= _MASK64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self.path = tuple(int(k) for k in path)
        ss = np.random.SeedSequence(seed, spawn_key=self.path)
        self._gen = np.random.Generator(np.random.Philox(ss))
        self.draws = 0

    def child(self, key: int | str) -> RngStream:
        if isinstance(key, str):
            key = zlib.crc32(key.encode())
        return RngStream(self.seed, self.path + (key,))

    def uniform(self) -> float:
        self.draws += 1
        return float(self._gen.random())

    def uniforms(self, size: int) -> np.ndarray:
        self.draws += size
        return self._gen.random(size)

    def states(self, size: int) -> np.ndarray:
        """``size`` i.i.d. uniform state codes (int8 in 0..3)."""
        self.draws += size
        return self._gen.integers(0, 4, size=size, dtype=np.int8)

    def word(self) -> int:
        """One non-negative 63-bit integer (used to derive per-trial seeds)."""
        self.draws += 1
        return int(self._gen.integers(0, 2**63))

    def bits(self, size: int) -> np.ndarray:
        self.draws += size
        return self._gen.integers(0, 2, size=size, dtype=np.int8)

    def sample_positions(self, total: int, k: int) -> np.ndarray:
        """Sorted k-subset of range(total), uniform over all C(total, k) subsets."""
        self.draws += 1
        return np.sort(self._gen.choice(total, size=k, replace=False))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, path={self.path}, draws={self.draws})"


def _as_codes(states) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(states, dtype=np.int8))


def bell_measure(s1: SingleState, s2: SingleState, rng: RngStream) -> BellOutcome:
    u = np.array([rng.uniform()])
    out = kernels.bell_sample(_as_codes([s1]), _as_codes([s2]), u)
    return BellOutcome(int(out[0]))


def bell_measure_many(s1, s2, rng: RngStream) -> np.ndarray:
    """Vectorised ``bell_measure``: one uniform per pair, outcome codes as int8."""
    s1 = _as_codes(s1)
    s2 = _as_codes(s2)
    return kernels.bell_sample(s1, s2, rng.uniforms(s1.size))


def projective_measure(s: SingleState, b: Basis, rng: RngStream) -> tuple[int, SingleState]:
    bits, post = kernels.measure_bases(_as_codes([s]), _as_codes([b]), np.array([rng.uniform()]))
    return int(bits[0]), SingleState(int(post[0]))


def projective_measure_many(states, bases, rng: RngStream) -> tuple[np.ndarray, np.ndarray]:
    states = _as_codes(states)
    return kernels.measure_bases(states, _as_codes(bases), rng.uniforms(states.size))


# --- particles entangled with an outside probe --------------------------------

_BASIS_ROWS = {
    Basis.Z: np.array([[1.0, 0.0], [0.0, 1.0]]),
    Basis.X: np.array([[SQRT1_2, SQRT1_2], [SQRT1_2, -SQRT1_2]]),
}
_BELL_MATRIX = np.array([BELL_VECTORS[k] for k in BellOutcome])  # (4 outcomes, 4 basis kets)


@dataclass(frozen=True, eq=False)
class ProbeEntangled:
    """A carrier qubit jointly held with a probe: |0>|phi0> + |1>|phi1>."""

    phi0: np.ndarray
    phi1: np.ndarray

    @classmethod
    def from_state(cls, s: SingleState) -> ProbeEntangled:
        a0, a1 = _STATE_AMPS[SingleState(s)]
        return cls(np.array([a0], dtype=complex), np.array([a1], dtype=complex))

    def basis_probs(self, basis: Basis) -> np.ndarray:
        rows = _BASIS_ROWS[Basis(basis)]
        out = np.empty(2)
        for m in range(2):
            v = rows[m, 0] * self.phi0 + rows[m, 1] * self.phi1
            out[m] = np.vdot(v, v).real
        return out


def bell_probs_general(p: ProbeEntangled, q: ProbeEntangled) -> np.ndarray:
    """Bell outcome distribution for two carriers each entangled with its own probe."""
    parts = {(b, c): np.kron(pb, qc) for b, pb in enumerate((p.phi0, p.phi1))
             for c, qc in enumerate((q.phi0, q.phi1))}
    out = np.empty(4)
    for k in range(4):
        v = sum(_BELL_MATRIX[k, 2 * b + c] * parts[b, c] for b in range(2) for c in range(2))
        out[k] = np.vdot(v, v).real
    return out


def _pick(probs: np.ndarray, u: float) -> int:
    cum = np.cumsum(probs)
    cum /= cum[-1]
    return int(min(np.searchsorted(cum, u, side="right"), probs.size - 1))


class InFlight:
    """A particle sequence in transit.

    ``states`` holds state codes; positions where a particle has become
    entangled with an outside probe carry -1 and an entry in ``entangled``.
    """

    def __init__(self, states, entangled: dict[int, ProbeEntangled] | None = None):
        self.states = np.array(states, dtype=np.int8)
        self.entangled = dict(entangled or {})

    def __len__(self):
        return self.states.size

    @property
    def is_pure(self) -> bool:
        return not self.entangled

    def particle(self, i: int) -> ProbeEntangled:
        if i in self.entangled:
            return self.entangled[i]
        return ProbeEntangled.from_state(int(self.states[i]))

    def take(self, positions) -> InFlight:
        positions = np.asarray(positions, dtype=np.intp)
        if not self.entangled:
            return InFlight(self.states[positions])
        sub = {j: self.entangled[int(p)] for j, p in enumerate(positions) if int(p) in self.entangled}
        return InFlight(self.states[positions], sub)

    def measure(self, positions, bases, u: np.ndarray) -> np.ndarray:
        """Measure the given positions in the given bases; returns outcome bits."""
        positions = np.asarray(positions, dtype=np.intp)
        bases = _as_codes(bases)
        bits, _ = kernels.measure_bases(
            np.ascontiguousarray(np.maximum(self.states[positions], 0)), bases, u)
        for j, p in enumerate(positions):
            if int(p) in self.entangled:
                bits[j] = _pick(self.entangled[int(p)].basis_probs(Basis(int(bases[j]))), u[j])
        return bits


def bell_measure_flights(fb: InFlight, fc: InFlight, rng: RngStream) -> np.ndarray:
    """Bell-measure pair j = (fb[j], fc[j]) for every j; one uniform per pair."""
    u = rng.uniforms(len(fb))
    out = kernels.bell_sample(np.maximum(fb.states, 0).astype(np.int8),
                              np.maximum(fc.states, 0).astype(np.int8), u)
    for j in sorted(set(fb.entangled) | set(fc.entangled)):
        out[j] = _pick(bell_probs_general(fb.particle(j), fc.particle(j)), u[j])
    return out
