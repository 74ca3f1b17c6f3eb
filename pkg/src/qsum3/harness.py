"""Batch runner, qubit efficiencies, and report assembly."""
from __future__ import annotations

import csv
import io
import json
import math
import time
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Sequence

import numpy as np
from scipy.stats import kstwo

from .adversary import (
    AttackKind,
    AttackReport,
    AttackStrategy,
    EVE_KINDS,
    closed_form_detection,
    entangle_measure_leakage,
    entangle_measure_run_detection,
    entangle_measure_detection,
    flood_rejected,
    realized_run_detection,
    run_detected,
    unit_detection,
)
from .protocol import AbortReason, Completed, ProtocolConfig, run_protocol
from .quantum_core import RngStream

Z95 = 1.959963984540054


@dataclass(frozen=True)
class EfficiencyInputs:
    nu: int
    q: int
    r: int

    def __post_init__(self):
        if min(self.nu, self.q, self.r) < 0:
            raise ValueError("nu, q and r must be non-negative")


def qubit_efficiency(e: EfficiencyInputs) -> Fraction:
    """Classical bits computed per qubit-plus-classical-bit consumed, as an exact fraction."""
    if e.q + e.r == 0:
        raise ZeroDivisionError("q + r must be positive")
    return Fraction(e.nu, e.q + e.r)


def efficiency_table(n: int, delta: int, L: int = 1, m: int = 1, d: int = 1) -> dict[str, Fraction]:
    """Qubit efficiency of this protocol and of the five compared three-user protocols."""
    if min(n, delta, L, m, d) < 1:
        raise ValueError("all parameters must be positive")
    return {
        "ref6": qubit_efficiency(EfficiencyInputs(L, 5 * L, 3 * L)),
        "ref8": qubit_efficiency(EfficiencyInputs(L, 6 * (-(-L // 2) + delta), 3 * L)),
        "ref9": qubit_efficiency(EfficiencyInputs(1, 3 * (1 + d), 3)),
        "ref11": qubit_efficiency(EfficiencyInputs(L, 3 * L, L)),
        "ref12": qubit_efficiency(EfficiencyInputs(m, 6 * m, 3 * m)),
        "this": qubit_efficiency(EfficiencyInputs(n, 16 * (n + delta), 3 * n)),
    }


def wilson_interval(k: int, n: int, z: float = Z95) -> tuple[float, float]:
    if n <= 0:
        raise ValueError("need at least one trial")
    p = k / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    # the bounds are exactly 0 and 1 at the edges; floating point can miss by an ulp
    lo = 0.0 if k == 0 else max(0.0, min(p, centre - half))
    hi = 1.0 if k == n else min(1.0, max(p, centre + half))
    return lo, hi


def ks_discrete(samples: Sequence[int], cdf) -> tuple[float, float]:
    """One-sample KS statistic for an integer-valued law, and its Kolmogorov p-value.

    The statistic is sup_k |ECDF(k) - F(k)| over integer k, which avoids the
    tie artefact of treating a lattice law as continuous. The continuous
    Kolmogorov p-value is conservative here.
    """
    x = np.sort(np.asarray(samples, dtype=np.int64))
    n = x.size
    support = np.arange(x[0] - 1, x[-1] + 1)
    ecdf = np.searchsorted(x, support, side="right") / n
    stat = float(np.max(np.abs(ecdf - cdf(support))))
    return stat, float(kstwo.sf(stat, n))


def _rate(k: int, n: int) -> dict[str, Any]:
    lo, hi = wilson_interval(k, n)
    return {"count": k, "trials": n, "rate": k / n, "ci95": [lo, hi]}


@dataclass
class RunSpec:
    config: ProtocolConfig
    attack: AttackStrategy = field(default_factory=AttackStrategy)
    trials: int = 1
    inputs: tuple[Sequence[int], Sequence[int], Sequence[int]] | None = None  # None: random per trial

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.inputs is not None and any(len(v) != self.config.n for v in self.inputs):
            raise ValueError("fixed inputs must each have n bits")

    def to_dict(self) -> dict[str, Any]:
        out = {"config": self.config.to_dict(), "attack": self.attack.name, "trials": self.trials,
               "inputs": "random" if self.inputs is None else [list(map(int, v)) for v in self.inputs]}
        if self.attack.kind in EVE_KINDS:
            out["channels"] = list(self.attack.channels)
        if self.attack.params is not None:
            out["params"] = self.attack.params.to_dict()
        return out


@dataclass
class Report:
    spec: RunSpec
    completed: int
    aborts: dict[str, int]
    correctness_violations: int
    key_violations: int
    detection: AttackReport
    efficiency: dict[str, Fraction]
    duration_ms: float
    message_pair_counts: list[int] = field(default_factory=list)

    def to_dict(self, timing: bool = False) -> dict[str, Any]:
        """JSON-ready dict. ``duration_ms`` is null unless ``timing``, so reports stay reproducible."""
        det = self.detection
        detection: dict[str, Any] = {"unit": det.unit, "runs": _rate(det.runs_detected, det.trials)}
        if det.units_total:
            detection["per_unit"] = _rate(det.units_detected, det.units_total)
        detection.update(det.extra)
        analytic = {"per_unit": det.per_unit_analytic, "run": det.run_analytic,
                    "run_realized": det.run_analytic_realized}
        if det.leakage is not None:
            analytic["leakage"] = det.leakage
        return {
            "spec": self.spec.to_dict(),
            "completed": self.completed,
            "aborts": dict(sorted(self.aborts.items())),
            "correctness_violations": self.correctness_violations,
            "key_violations": self.key_violations,
            "detection": detection,
            "analytic": analytic,
            "efficiency": {k: f"{v.numerator}/{v.denominator}" for k, v in self.efficiency.items()},
            "seed": self.spec.config.seed,
            "duration_ms": round(self.duration_ms, 3) if timing else None,
        }

    def to_json(self, timing: bool = False) -> str:
        return json.dumps(self.to_dict(timing), sort_keys=True, indent=2) + "\n"

    def to_csv(self, timing: bool = False) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["batch", "metric", "value"])
        batch = f"{self.spec.attack.name}:seed={self.spec.config.seed}"
        for key, value in _flatten(self.to_dict(timing)):
            w.writerow([batch, key, value])
        return buf.getvalue()


def _flatten(d: Any, prefix: str = ""):
    if isinstance(d, dict):
        for k in sorted(d):
            yield from _flatten(d[k], f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(d, list) and any(isinstance(v, (dict, list)) for v in d):
        for i, v in enumerate(d):
            yield from _flatten(v, f"{prefix}[{i}]")
    else:
        yield prefix, json.dumps(d) if isinstance(d, list) else d


def _analytic(spec: RunSpec) -> tuple[str, float | None, float | None, float | None]:
    cfg, atk = spec.config, spec.attack
    kind = atk.kind
    gamma = {"bob": cfg.gamma_b, "charlie": cfg.gamma_c}
    if kind in (AttackKind.MEASURE_RESEND, AttackKind.INTERCEPT_RESEND):
        k = sum(gamma[c] for c in atk.channels)
        return "decoy", closed_form_detection(kind, 1), closed_form_detection(kind, k), None
    if kind is AttackKind.ENTANGLE_MEASURE:
        k = sum(gamma[c] for c in atk.channels)
        per = float(np.mean(list(entangle_measure_detection(atk.params).values())))
        leak = None
        try:
            leak = entangle_measure_leakage(atk.params)
        except ValueError:
            pass
        return "decoy", per, entangle_measure_run_detection(atk.params, k), leak
    if kind is AttackKind.BOB_INTERCEPT_CHARLIE:
        return "measured-decoy", closed_form_detection(kind, 1), None, None
    if kind is AttackKind.ALICE_FAKE_PUBLISH:
        return "check-pair", closed_form_detection(kind, 1), closed_form_detection(kind, 2 * (cfg.n + cfg.delta)), None
    if kind is AttackKind.ALICE_FLOOD:
        return "run", None, float(flood_rejected(2 * (cfg.n + cfg.delta), cfg.summation_count_alpha)), None
    return "decoy", 0.0, 0.0, None


def trial_config(config: ProtocolConfig, trial: int) -> ProtocolConfig:
    """Config for one trial: its seed is drawn from the master seed's substream ``trial``."""
    seed = RngStream(config.seed).child(trial).word()
    return ProtocolConfig(config.n, config.delta, config.gamma_b, config.gamma_c, seed,
                          config.decoy_error_tolerance, config.summation_count_alpha, config.strict_consistency)


def run_trials(spec: RunSpec):
    """Yield (trial index, inputs, transcript) for each trial of ``spec``."""
    cfg = spec.config
    attack = None if spec.attack.kind is AttackKind.NONE else spec.attack
    for i in range(spec.trials):
        tcfg = trial_config(cfg, i)
        if spec.inputs is None:
            inp = RngStream(tcfg.seed).child("inputs")
            x, y, z = inp.bits(cfg.n), inp.bits(cfg.n), inp.bits(cfg.n)
        else:
            x, y, z = spec.inputs
        yield i, (x, y, z), run_protocol(tcfg, x, y, z, attack)


def monte_carlo(spec: RunSpec, keep_counts: bool = False) -> Report:
    started = time.perf_counter()
    unit, per_unit, run_analytic, leakage = _analytic(spec)
    aborts: Counter[str] = Counter()
    completed = wrong_sum = wrong_keys = 0
    units_hit = units_total = runs_hit = 0
    realized: list[float] = []
    counts: list[int] = []
    for _, (x, y, z), t in run_trials(spec):
        if isinstance(t.outcome, Completed):
            completed += 1
            expected = np.asarray(x) ^ np.asarray(y) ^ np.asarray(z)
            wrong_sum += int(not np.array_equal(np.asarray(t.outcome.sum), expected))
            ka, kb, kc = t.keys
            wrong_keys += int(np.any(ka ^ kb ^ kc))
        else:
            aborts[t.outcome.reason.value] += 1
        hit, total = unit_detection(t, spec.attack)
        units_hit += hit
        units_total += total
        runs_hit += int(run_detected(t, spec.attack))
        r = realized_run_detection(t, spec.attack)
        if r is not None:
            realized.append(r)
        if keep_counts and t.announcements is not None:
            counts.append(t.message_pair_count())
    for reason in AbortReason:
        aborts.setdefault(reason.value, 0)
    extra = {}
    if spec.attack.kind is AttackKind.BOB_INTERCEPT_CHARLIE:
        extra["mean_tau"] = units_total / spec.trials
    report = AttackReport(spec.attack.name, spec.trials, unit, units_hit, units_total, runs_hit,
                          per_unit, run_analytic,
                          float(np.mean(realized)) if realized else None, leakage, extra)
    return Report(
        spec=spec,
        completed=completed,
        aborts=dict(aborts),
        correctness_violations=wrong_sum,
        key_violations=wrong_keys,
        detection=report,
        efficiency=efficiency_table(spec.config.n, spec.config.delta),
        duration_ms=1000 * (time.perf_counter() - started),
        message_pair_counts=counts,
    )
