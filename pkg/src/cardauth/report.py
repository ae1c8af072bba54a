# report.py
"""Verdict records and the line-delimited report written after a scenario run."""

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, TextIO

from .entities import KicParams, VerifyReason

ALL_ATTACKS = "all"


@dataclass
class VerdictRecord:
    scenario: str
    attack: str
    trial: int
    clock: str
    feasible: bool
    equation_check: bool
    full_verify: VerifyReason | None  # None when the attack was infeasible
    predicted_success: bool | None = None
    infeasible_reason: str | None = None
    details: dict = field(default_factory=dict)
    params_digest: str = ""
    timings: dict = field(default_factory=dict)  # seconds per phase, not deterministic

    def to_dict(self, include_timings: bool = True) -> dict:
        d = {
            "scenario": self.scenario,
            "attack": self.attack,
            "trial": self.trial,
            "clock": self.clock,
            "feasible": self.feasible,
            "equation_check": self.equation_check,
            "full_verify": self.full_verify.value if self.full_verify else None,
            "predicted_success": self.predicted_success,
            "infeasible_reason": self.infeasible_reason,
            "details": self.details,
            "params_digest": self.params_digest,
        }
        if include_timings:
            d["timings"] = {k: round(v, 6) for k, v in self.timings.items()}
        return d


def params_digest(kic: KicParams) -> str:
    """Short SHA-256 fingerprint of the key material; the values themselves never appear."""
    material = ":".join(format(v, "x") for v in (kic.p, kic.q, kic.n, kic.e, kic.d, kic.g))
    return hashlib.sha256(material.encode()).hexdigest()[:16]


# ──────────────────────────────────────────────
#  Summary
# ──────────────────────────────────────────────

@dataclass
class AttackSummary:
    attack: str
    trials: int = 0
    feasible: int = 0
    equation_pass: int = 0
    full_verify_pass: int = 0
    predictions: int = 0
    prediction_agreement: int = 0
    cid_collisions: int = 0

    def add(self, record: VerdictRecord):
        self.trials += 1
        self.feasible += record.feasible
        self.equation_pass += record.equation_check
        self.full_verify_pass += record.full_verify is VerifyReason.OK
        if record.predicted_success is not None:
            self.predictions += 1
            self.prediction_agreement += record.predicted_success == record.equation_check
        self.cid_collisions += bool(record.details.get("cid_collision"))

    def to_dict(self) -> dict:
        d = {
            "summary": self.attack,
            "trials": self.trials,
            "feasible": self.feasible,
            "equation_pass": self.equation_pass,
            "full_verify_pass": self.full_verify_pass,
            "equation_pass_rate": round(self.equation_pass / self.trials, 4) if self.trials else 0.0,
        }
        if self.predictions:
            d["predictions"] = self.predictions
            d["prediction_agreement"] = self.prediction_agreement
        if self.attack in ("inverse-id", ALL_ATTACKS):
            d["cid_collisions"] = self.cid_collisions
        return d


def summarize(records: Iterable[VerdictRecord]) -> dict[str, AttackSummary]:
    """One summary per attack label in first-seen order, plus the 'all' total last."""
    per_attack: dict[str, AttackSummary] = {}
    total = AttackSummary(ALL_ATTACKS)
    for record in records:
        per_attack.setdefault(record.attack, AttackSummary(record.attack)).add(record)
        total.add(record)
    per_attack[ALL_ATTACKS] = total
    return per_attack


def emit_report(records: Iterable[VerdictRecord], sink: TextIO,
                include_timings: bool = True) -> dict[str, AttackSummary]:
    """One JSON line per verdict, a blank line, then one JSON line per summary."""
    records = list(records)
    for record in records:
        sink.write(json.dumps(record.to_dict(include_timings)) + "\n")
    summary = summarize(records)
    sink.write("\n")
    for block in summary.values():
        sink.write(json.dumps(block.to_dict()) + "\n")
    sink.flush()
    return summary
