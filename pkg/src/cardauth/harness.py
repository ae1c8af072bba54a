# harness.py
"""Seeded scenario runner: legitimate login, interception, forgery, verdict."""

import hashlib
import json
import logging
import math
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable

from .attacks import (
    forge_via_euclid, forge_via_inverse_timestamp, forge_via_time_factor,
    impersonate_via_inverse_registration, tamper_request,
)
from .channel import Channel, ClockMode, ClockModel
from .entities import (
    CidPolicy, ConfigError, CorruptTrial, ForgeMode, Infeasible, Intercept,
    KicParams, LoginRequest, SmartCardContents, Timestamp, UserCredentials,
    parse_enum,
)
from .protocol import (
    DEFAULT_DELTA_T, Kic, build_login_request, equation_holds, kic_setup,
    verify_login,
)
from .report import VerdictRecord, params_digest

logger = logging.getLogger(__name__)

DEFAULT_CLOCK_START = 1_700_000_000
TRIAL_SPACING = 10_000
ATTACK_LATENCY = 1
ABSTRACT_TIMESTAMP_BOUND = 1 << 40


class AttackKind(Enum):
    NONE = "none"
    EUCLID = "euclid"
    TIME_FACTOR = "time-factor"
    INVERSE_ID = "inverse-id"
    INVERSE_TS_LITERAL = "inverse-ts-literal"
    INVERSE_TS_WHITEBOX = "inverse-ts-whitebox"
    TAMPER = "tamper"


# ──────────────────────────────────────────────
#  Configuration
# ──────────────────────────────────────────────

@dataclass(frozen=True)
class ClockSettings:
    mode: ClockMode = ClockMode.ABSTRACT
    start: Timestamp = DEFAULT_CLOCK_START
    delta_t: int = DEFAULT_DELTA_T


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    prime_bits: int = 32
    cid_policy: CidPolicy = CidPolicy.SEQUENTIAL
    attack: AttackKind = AttackKind.NONE
    trials: int = 1
    clock: ClockSettings = field(default_factory=ClockSettings)
    name: str = ""
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.prime_bits < 3:
            raise ConfigError("prime_bits must be >= 3")
        if not 0 <= self.seed < 1 << 64:
            raise ConfigError("seed must be a 64-bit value")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.clock.start < 1 or self.clock.delta_t < 0:
            raise ConfigError("clock start must be >= 1 and delta_t >= 0")

    @property
    def scenario_id(self) -> str:
        return self.name or f"{self.attack.value}-{self.clock.mode.value}-{self.seed}"


_CONFIG_KEYS = {"name", "seed", "prime_bits", "cid_policy", "attack", "trials", "workers", "clock"}
_CLOCK_KEYS = {"mode", "start", "delta_t"}


def _as_int(d: dict, key: str, default: int) -> int:
    value = d.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    return value


def config_from_dict(d: dict) -> ScenarioConfig:
    if not isinstance(d, dict):
        raise ConfigError("scenario config must be a JSON object")
    unknown = set(d) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if "seed" not in d:
        raise ConfigError("config needs a seed")
    clock_d = d.get("clock", {})
    if not isinstance(clock_d, dict) or set(clock_d) - _CLOCK_KEYS:
        raise ConfigError(f"clock must be an object with keys {sorted(_CLOCK_KEYS)}")
    clock = ClockSettings(
        mode=parse_enum(ClockMode, clock_d.get("mode", "abstract")),
        start=_as_int(clock_d, "start", DEFAULT_CLOCK_START),
        delta_t=_as_int(clock_d, "delta_t", DEFAULT_DELTA_T),
    )
    return ScenarioConfig(
        seed=_as_int(d, "seed", 0),
        prime_bits=_as_int(d, "prime_bits", 32),
        cid_policy=parse_enum(CidPolicy, d.get("cid_policy", "sequential")),
        attack=parse_enum(AttackKind, d.get("attack", "none")),
        trials=_as_int(d, "trials", 1),
        clock=clock,
        name=str(d.get("name", "")),
        workers=_as_int(d, "workers", 1),
    )


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(raw)


def trial_rng(seed: int, trial: int) -> random.Random:
    """Independent sub-stream per (seed, trial)."""
    digest = hashlib.sha256(f"{seed}:{trial}".encode()).digest()
    return random.Random(int.from_bytes(digest[:16], "big"))


# ──────────────────────────────────────────────
#  Attack dispatch
# ──────────────────────────────────────────────

@dataclass
class TrialContext:
    kic: Kic
    card: SmartCardContents
    intercept: Intercept
    clock: ClockModel
    rng: random.Random

    @property
    def params(self) -> KicParams:
        return self.kic.params


@dataclass
class AttackOutcome:
    forged: LoginRequest
    server_now: Timestamp
    predicted_success: bool | None = None
    details: dict = field(default_factory=dict)


def _random_timestamp(rng: random.Random, coprime_to: int = 1) -> Timestamp:
    while True:
        t = rng.randrange(2, ABSTRACT_TIMESTAMP_BOUND)
        if math.gcd(t, coprime_to) == 1:
            return t


def _attacker_now(ctx: TrialContext) -> Timestamp:
    return ctx.clock.advance(ATTACK_LATENCY)


def _present(ctx: TrialContext, t: Timestamp) -> Timestamp:
    """Server receipt time for a forgery stamped `t`."""
    if ctx.clock.mode is ClockMode.ABSTRACT:
        return ctx.clock.set_now(t)
    return ctx.clock.now


def _attack_none(ctx: TrialContext) -> AttackOutcome:
    return AttackOutcome(forged=ctx.intercept.m, server_now=ctx.intercept.captured_at)


def _attack_tamper(ctx: TrialContext) -> AttackOutcome:
    result = tamper_request(ctx.intercept, ctx.rng)
    return AttackOutcome(forged=result.forged, server_now=ctx.intercept.captured_at,
                         details={"field": result.field_name, "bit": result.bit})


def _attack_euclid(ctx: TrialContext) -> AttackOutcome:
    e = ctx.intercept.m.e
    if ctx.clock.mode is ClockMode.ABSTRACT:
        t_a = _random_timestamp(ctx.rng, coprime_to=e)
    else:
        now = _attacker_now(ctx)
        window = range(now, max(0, now - ctx.clock.delta_t - 1), -1)
        t_a = next((t for t in window if math.gcd(t, e) == 1), None)
        if t_a is None:
            raise Infeasible("no timestamp coprime to e inside the freshness window")
    result = forge_via_euclid(ctx.intercept, t_a)
    return AttackOutcome(forged=result.forged, server_now=_present(ctx, t_a),
                         details={"t_a": t_a, "u": result.u, "v": result.v})


def _attack_time_factor(ctx: TrialContext) -> AttackOutcome:
    t = ctx.intercept.m.t
    _attacker_now(ctx)
    result = forge_via_time_factor(ctx.intercept, (2, t - 1))
    return AttackOutcome(forged=result.forged, server_now=_present(ctx, result.t_a),
                         details={"t_a": result.t_a, "w": result.w})


def _attack_inverse_id(ctx: TrialContext) -> AttackOutcome:
    if ctx.clock.mode is ClockMode.ABSTRACT:
        t_f = _random_timestamp(ctx.rng)
    else:
        t_f = _attacker_now(ctx)
    result = impersonate_via_inverse_registration(ctx.intercept, ctx.kic, ctx.rng, t_f)
    return AttackOutcome(
        forged=result.forged, server_now=_present(ctx, t_f),
        details={
            "cid_policy": ctx.kic.cids.policy.value,
            "cid_collision": result.cid_collision,
            "recovered_s_matches": result.recovered_s == ctx.card.s,
        },
    )


def _inverse_ts(mode: ForgeMode) -> Callable[[TrialContext], AttackOutcome]:
    def attack(ctx: TrialContext) -> AttackOutcome:
        n = ctx.intercept.m.n
        k = ctx.rng.randrange(2, n)
        while math.gcd(k, n) != 1:
            k = ctx.rng.randrange(2, n)
        _attacker_now(ctx)
        # the harness holds the KIC, so the order-based prediction is always exact
        result = forge_via_inverse_timestamp(ctx.intercept, mode, k, analysis=ctx.params)
        return AttackOutcome(forged=result.forged, server_now=_present(ctx, result.t_f),
                             predicted_success=result.predicted_success,
                             details={"t_f": format(result.t_f, "x")})
    return attack


_ATTACKS: dict[AttackKind, Callable[[TrialContext], AttackOutcome]] = {
    AttackKind.NONE: _attack_none,
    AttackKind.TAMPER: _attack_tamper,
    AttackKind.EUCLID: _attack_euclid,
    AttackKind.TIME_FACTOR: _attack_time_factor,
    AttackKind.INVERSE_ID: _attack_inverse_id,
    AttackKind.INVERSE_TS_LITERAL: _inverse_ts(ForgeMode.LITERAL),
    AttackKind.INVERSE_TS_WHITEBOX: _inverse_ts(ForgeMode.WHITEBOX),
}


# ──────────────────────────────────────────────
#  Trials
# ──────────────────────────────────────────────

def _random_victim(n: int, rng: random.Random) -> UserCredentials:
    while True:
        uid = rng.randrange(2, n)
        if math.gcd(uid, n) == 1:
            return UserCredentials(id=uid, pw=rng.randrange(1, n))


def run_trial(config: ScenarioConfig, trial: int) -> VerdictRecord:
    rng = trial_rng(config.seed, trial)
    timings: dict[str, float] = {}

    started = time.perf_counter()
    params = kic_setup(config.prime_bits, rng)
    timings["keygen"] = time.perf_counter() - started

    kic = Kic(params, config.cid_policy)
    victim = _random_victim(params.n, rng)
    requested = rng.randrange(2, params.n) if config.cid_policy is CidPolicy.MIRROR else None
    card = kic.register(victim, requested_cid=requested, rng=rng)

    start = config.clock.start + trial * TRIAL_SPACING + rng.randrange(TRIAL_SPACING // 2)
    clock = ClockModel(config.clock.mode, start, config.clock.delta_t)
    channel = Channel(clock)

    started = time.perf_counter()
    legit = build_login_request(card, victim.pw, clock.now, rng)
    clock.advance(rng.randint(0, config.clock.delta_t // 2))
    decision = channel.send(legit)
    timings["login"] = time.perf_counter() - started
    if not decision.accepted:
        logger.error("trial %d: legitimate login rejected (%s)", trial, decision.reason.value)
        raise CorruptTrial(f"{config.scenario_id} trial {trial}: legitimate login "
                           f"rejected with {decision.reason.value}")
    intercept = channel.drain_intercepts()[0]
    ctx = TrialContext(kic=kic, card=card, intercept=intercept, clock=clock, rng=rng)

    record = VerdictRecord(
        scenario=config.scenario_id, attack=config.attack.value, trial=trial,
        clock=config.clock.mode.value, feasible=True, equation_check=False,
        full_verify=None, params_digest=params_digest(params), timings=timings,
    )
    started = time.perf_counter()
    try:
        outcome = _ATTACKS[config.attack](ctx)
    except Infeasible as exc:
        timings["attack"] = time.perf_counter() - started
        record.feasible = False
        record.infeasible_reason = str(exc)
        return record
    timings["attack"] = time.perf_counter() - started

    started = time.perf_counter()
    record.equation_check = equation_holds(outcome.forged)
    record.full_verify = verify_login(outcome.forged, outcome.server_now,
                                      config.clock.delta_t).reason
    timings["verify"] = time.perf_counter() - started
    record.predicted_success = outcome.predicted_success
    record.details = outcome.details
    return record


def run_scenario(config: ScenarioConfig) -> list[VerdictRecord]:
    """All trials in trial order; deterministic in the config apart from timings."""
    logger.info("scenario %s: %d trial(s), %d-bit primes",
                config.scenario_id, config.trials, config.prime_bits)
    if config.workers == 1:
        records = [run_trial(config, i) for i in range(config.trials)]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(lambda i: run_trial(config, i), range(config.trials)))
    logger.info("scenario %s finished", config.scenario_id)
    return records
