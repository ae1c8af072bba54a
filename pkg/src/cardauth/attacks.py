# attacks.py
"""Forgery constructors against the scheme, built only from intercepted material.

Each constructor returns a result object holding the forged LoginRequest and a
transcript for reports. None of them reads d, p, q, a password or a login nonce,
except the WHITEBOX inverse-timestamp variant, which is analysis-only.
"""

import logging
import math
import random
from dataclasses import dataclass
from typing import Protocol

from .entities import (
    CriticalFinding, ForgeMode, Infeasible, Intercept, KicParams, LoginRequest,
    RegistrationRejected, SmartCardContents, Timestamp, UserCredentials,
    encode_request,
)
from .numtheory import (
    DESK_SCALE_MODULUS, NotInvertible, carmichael_lambda, ext_gcd,
    lambda_factorization, mod_inv, mod_pow, multiplicative_order,
)

logger = logging.getLogger(__name__)


class RegistrationEndpoint(Protocol):
    def register(self, creds: UserCredentials, requested_cid: int | None = None,
                 rng: random.Random | None = None) -> SmartCardContents: ...


def _forged(m: LoginRequest, x: int, y: int, t: Timestamp) -> LoginRequest:
    return LoginRequest(id=m.id, cid=m.cid, x=x, y=y, n=m.n, e=m.e, g=m.g, t=t)


# ──────────────────────────────────────────────
#  Result types
# ──────────────────────────────────────────────

@dataclass(frozen=True)
class EuclidForgery:
    t_a: Timestamp
    u: int
    v: int
    forged: LoginRequest

    def transcript(self) -> dict:
        return {"attack": "euclid", "t_a": self.t_a, "u": self.u, "v": self.v,
                "forged": encode_request(self.forged)}


@dataclass(frozen=True)
class TimeFactorForgery:
    w: int
    t_a: Timestamp
    forged: LoginRequest

    def transcript(self) -> dict:
        return {"attack": "time-factor", "t_a": self.t_a, "w": self.w,
                "forged": encode_request(self.forged)}


@dataclass(frozen=True)
class RogueRegistration:
    id_f: int
    pw_f: int
    rogue_card: SmartCardContents
    recovered_s: int
    y_r: int
    t_f: Timestamp
    forged: LoginRequest
    cid_collision: bool

    def transcript(self) -> dict:
        # pw_f is the attacker's own throwaway password, not a victim secret
        return {"attack": "inverse-id", "id_f": format(self.id_f, "x"),
                "cid_f": format(self.rogue_card.cid, "x"), "t_f": self.t_f,
                "cid_collision": self.cid_collision,
                "forged": encode_request(self.forged)}


@dataclass(frozen=True)
class InverseTimestampForgery:
    mode: ForgeMode
    t_f: Timestamp
    k: int
    forged: LoginRequest
    predicted_success: bool

    def transcript(self) -> dict:
        return {"attack": f"inverse-ts-{self.mode.value}", "t_f": format(self.t_f, "x"),
                "predicted_success": self.predicted_success,
                "forged": encode_request(self.forged)}


@dataclass(frozen=True)
class TamperForgery:
    """Negative control: one bit of x or y flipped."""
    field_name: str
    bit: int
    forged: LoginRequest

    def transcript(self) -> dict:
        return {"attack": "tamper", "field": self.field_name, "bit": self.bit,
                "forged": encode_request(self.forged)}


# ──────────────────────────────────────────────
#  Extended-Euclid forgery
# ──────────────────────────────────────────────

def positive_bezout(e: int, t_a: int) -> tuple[int, int]:
    """Smallest u, v > 0 with e*u - t_a*v = 1. Requires gcd(e, t_a) = 1."""
    bz = ext_gcd(e, t_a)
    if bz.gcd != 1:
        raise Infeasible("e and t_a are not coprime", gcd=bz.gcd)
    # e*u0 + t_a*v0 = 1; shifting u by t_a keeps e*u ≡ 1 (mod t_a)
    u = bz.u % t_a or t_a
    v = (e * u - 1) // t_a
    if v == 0:
        u += t_a
        v += e
    return u, v


def forge_via_euclid(intercept: Intercept, t_a: Timestamp) -> EuclidForgery:
    m = intercept.m
    if t_a < 1:
        raise Infeasible("attacker timestamp must be >= 1")
    u, v = positive_bezout(m.e, t_a)
    base = mod_pow(m.id, m.cid, m.n)
    x_f = mod_pow(base, v, m.n)
    y_f = mod_pow(base, u, m.n)
    return EuclidForgery(t_a=t_a, u=u, v=v, forged=_forged(m, x_f, y_f, t_a))


# ──────────────────────────────────────────────
#  Time-factor forgery
# ──────────────────────────────────────────────

def divisors(t: int) -> list[int]:
    small, large = [], []
    for d in range(1, math.isqrt(t) + 1):
        if t % d == 0:
            small.append(d)
            if d != t // d:
                large.append(t // d)
    return small + large[::-1]


def forge_via_time_factor(intercept: Intercept,
                          window: tuple[Timestamp, Timestamp]) -> TimeFactorForgery:
    """Reuse Y with X^w at timestamp t/w, for the latest divisor of t in `window`."""
    m = intercept.m
    lo, hi = window
    candidates = [d for d in divisors(m.t) if lo <= d <= hi]
    if not candidates:
        raise Infeasible(f"no divisor of t={m.t} in window [{lo}, {hi}]")
    t_a = candidates[-1]
    w = m.t // t_a
    x_f = mod_pow(m.x, w, m.n)
    return TimeFactorForgery(w=w, t_a=t_a, forged=_forged(m, x_f, m.y, t_a))


# ──────────────────────────────────────────────
#  Impersonation through an inverse identity
# ──────────────────────────────────────────────

def _invert_or_critical(value: int, n: int, what: str) -> int:
    try:
        return mod_inv(value, n)
    except NotInvertible as exc:
        logger.warning("%s is not invertible mod n: modulus factored", what)
        raise CriticalFinding(f"{what} shares a factor with n", factor=exc.gcd) from None


def impersonate_via_inverse_registration(intercept: Intercept, kic: RegistrationEndpoint,
                                         rng: random.Random, t_f: Timestamp,
                                         y_r: int | None = None) -> RogueRegistration:
    """Register ID^-1, invert the rogue card's S to recover the victim's S."""
    m = intercept.m
    id_f = _invert_or_critical(m.id, m.n, "victim identity")
    pw_f = rng.randrange(1, m.n)
    try:
        rogue_card = kic.register(UserCredentials(id=id_f, pw=pw_f),
                                  requested_cid=m.cid, rng=rng)
    except RegistrationRejected as exc:
        logger.debug("rogue registration refused: %s", exc)
        raise Infeasible(f"KIC rejected the rogue registration: {exc}") from None
    recovered_s = _invert_or_critical(rogue_card.s, m.n, "rogue card secret")
    if y_r is None:
        y_r = rng.randrange(2, m.n)
    x_f = mod_pow(y_r, m.e, m.n)
    y_f = recovered_s * mod_pow(y_r, t_f, m.n) % m.n
    return RogueRegistration(
        id_f=id_f, pw_f=pw_f, rogue_card=rogue_card, recovered_s=recovered_s,
        y_r=y_r, t_f=t_f, forged=_forged(m, x_f, y_f, t_f),
        cid_collision=rogue_card.cid == m.cid,
    )


# ──────────────────────────────────────────────
#  Inverse-timestamp forgery
# ──────────────────────────────────────────────

def order_condition_holds(m: LoginRequest, t_f: int,
                          analysis: KicParams | None = None) -> bool:
    """cid*t*t_f ≡ cid (mod ord(id)): the condition the forgery actually needs."""
    exponent = m.cid * (m.t * t_f - 1)
    if analysis is not None:
        order = multiplicative_order(m.id, m.n, lambda_factorization(analysis.p, analysis.q))
    elif m.n < DESK_SCALE_MODULUS:
        order = multiplicative_order(m.id, m.n)
    else:
        return pow(m.id, exponent, m.n) == 1
    return exponent % order == 0


def forge_via_inverse_timestamp(intercept: Intercept, mode: ForgeMode, k: int,
                                analysis: KicParams | None = None) -> InverseTimestampForgery:
    """LITERAL inverts t mod n; WHITEBOX inverts t mod λ(n) using KIC secrets."""
    m = intercept.m
    if mode is ForgeMode.WHITEBOX:
        if analysis is None:
            raise Infeasible("whitebox mode needs KIC analysis access")
        modulus = carmichael_lambda(analysis.p, analysis.q)
    else:
        modulus = m.n
    try:
        t_f = mod_inv(m.t, modulus)
    except NotInvertible as exc:
        logger.debug("timestamp %d has no inverse (%s)", m.t, mode.value)
        raise Infeasible(f"t has no inverse mod the {mode.value} modulus", gcd=exc.gcd) from None

    shared = math.gcd(k, m.n)
    if shared != 1:
        raise CriticalFinding("k shares a factor with n", factor=shared)
    id_inv = _invert_or_critical(m.id, m.n, "victim identity")
    y_f = mod_pow(k, t_f, m.n)
    x_f = mod_pow(id_inv, m.cid * m.t, m.n) * mod_pow(k, m.e, m.n) % m.n
    return InverseTimestampForgery(
        mode=mode, t_f=t_f, k=k, forged=_forged(m, x_f, y_f, t_f),
        predicted_success=order_condition_holds(m, t_f, analysis),
    )


# ──────────────────────────────────────────────
#  Tamper control
# ──────────────────────────────────────────────

def tamper_request(intercept: Intercept, rng: random.Random) -> TamperForgery:
    m = intercept.m
    bits = m.n.bit_length()
    while True:
        name = rng.choice(("x", "y"))
        bit = rng.randrange(bits)
        value = getattr(m, name) ^ (1 << bit)
        if value < m.n:
            break
    x, y = (value, m.y) if name == "x" else (m.x, value)
    return TamperForgery(field_name=name, bit=bit, forged=_forged(m, x, y, m.t))
