# entities.py
"""Data models for the smart-card scheme: key material, cards, requests, decisions."""

import json
from dataclasses import dataclass
from enum import Enum

from .numtheory import NumberTheoryError, decode_nat, encode_nat

# Abstract clock units; seconds since epoch on a real clock. Always >= 1.
Timestamp = int

DEFAULT_F_SLOT = "sha256"

WIRE_FIELDS = ("id", "cid", "x", "y", "n", "e", "g", "t")


# ──────────────────────────────────────────────
#  Errors
# ──────────────────────────────────────────────

class CardAuthError(Exception):
    """Base class for protocol, attack and harness errors."""


class CriticalFinding(CardAuthError):
    """A value shared a non-trivial factor with n: the modulus is factored."""

    def __init__(self, message: str, factor: int):
        super().__init__(message)
        self.factor = factor


class RegistrationRejected(CardAuthError):
    pass


class Infeasible(CardAuthError):
    """Attack preconditions do not hold for this intercept."""

    def __init__(self, reason: str, gcd: int | None = None):
        super().__init__(reason if gcd is None else f"{reason} (gcd={gcd})")
        self.reason = reason
        self.gcd = gcd


class WireFormatError(CardAuthError, ValueError):
    pass


class CorruptTrial(CardAuthError):
    """A legitimate login was rejected: always an implementation bug."""


class ConfigError(CardAuthError, ValueError):
    pass


# ──────────────────────────────────────────────
#  Enums
# ──────────────────────────────────────────────

class CidPolicy(Enum):
    SEQUENTIAL = "sequential"
    RANDOM = "random"
    MIRROR = "mirror"


class VerifyReason(Enum):
    FORMAT_ID = "FORMAT_ID"
    FORMAT_CID = "FORMAT_CID"
    STALE_TIMESTAMP = "STALE_TIMESTAMP"
    EQUATION_FAILED = "EQUATION_FAILED"
    OK = "OK"


class ForgeMode(Enum):
    LITERAL = "literal"
    WHITEBOX = "whitebox"


def parse_enum(enum_cls: type[Enum], raw: str) -> Enum:
    """Accept 'time-factor', 'TIME_FACTOR' or 'time_factor' for enum members."""
    key = str(raw).strip().replace("-", "_").upper()
    try:
        return enum_cls[key]
    except KeyError:
        choices = ", ".join(m.name.lower().replace("_", "-") for m in enum_cls)
        raise ConfigError(f"unknown {enum_cls.__name__} {raw!r} (expected one of: {choices})") from None


# ──────────────────────────────────────────────
#  Key material and cards
# ──────────────────────────────────────────────

@dataclass(frozen=True)
class PublicParams:
    n: int
    e: int
    g: int


@dataclass(frozen=True)
class KicParams:
    p: int
    q: int
    n: int
    e: int
    d: int
    g: int

    @property
    def phi(self) -> int:
        return (self.p - 1) * (self.q - 1)

    @property
    def public(self) -> PublicParams:
        return PublicParams(n=self.n, e=self.e, g=self.g)


@dataclass(frozen=True)
class UserCredentials:
    id: int
    pw: int

    @classmethod
    def from_strings(cls, identity: str, password: str, n: int) -> "UserCredentials":
        return cls(id=text_to_nat(identity, n), pw=text_to_nat(password, n))


def text_to_nat(text: str, n: int) -> int:
    """Big-endian byte value of `text`, reduced into [2, n-1]."""
    raw = int.from_bytes(text.encode("utf-8"), "big")
    return 2 + raw % (n - 2)


@dataclass(frozen=True)
class SmartCardContents:
    n: int
    e: int
    g: int
    id: int
    cid: int
    s: int
    h: int
    f_slot: str = DEFAULT_F_SLOT  # carried, never evaluated


# ──────────────────────────────────────────────
#  Login request and verdict
# ──────────────────────────────────────────────

@dataclass(frozen=True)
class LoginRequest:
    id: int
    cid: int
    x: int
    y: int
    n: int
    e: int
    g: int
    t: Timestamp


@dataclass(frozen=True)
class VerifyDecision:
    accepted: bool
    reason: VerifyReason

    @classmethod
    def ok(cls) -> "VerifyDecision":
        return cls(accepted=True, reason=VerifyReason.OK)

    @classmethod
    def reject(cls, reason: VerifyReason) -> "VerifyDecision":
        return cls(accepted=False, reason=reason)


@dataclass(frozen=True)
class Intercept:
    """A captured, accepted login request and the clock reading at capture."""
    m: LoginRequest
    captured_at: Timestamp
    wire: str = ""


# ──────────────────────────────────────────────
#  Wire codec
# ──────────────────────────────────────────────

def encode_request(m: LoginRequest) -> str:
    """Canonical single-line record: hex Nat values in fixed key order."""
    return json.dumps({name: encode_nat(getattr(m, name)) for name in WIRE_FIELDS},
                      separators=(",", ":"))


def parse_request(raw: str) -> LoginRequest:
    d = _load_hex_record(raw, WIRE_FIELDS, ordered=True)
    if d["t"] < 1:
        raise WireFormatError("timestamp must be >= 1")
    return LoginRequest(**d)


def _load_hex_record(raw: str, fields: tuple[str, ...], ordered: bool = False) -> dict:
    try:
        obj = json.loads(raw)
    except (json.JSONDecodeError, TypeError) as exc:
        raise WireFormatError(f"not a JSON record: {exc}") from None
    if not isinstance(obj, dict):
        raise WireFormatError("record must be a JSON object")
    keys = list(obj)
    if ordered and keys != list(fields):
        raise WireFormatError(f"expected keys {list(fields)} in order, got {keys}")
    missing = [f for f in fields if f not in obj]
    if missing:
        raise WireFormatError(f"missing fields: {', '.join(missing)}")
    out = {}
    for name in fields:
        try:
            out[name] = decode_nat(obj[name])
        except NumberTheoryError as exc:
            raise WireFormatError(f"field {name!r}: {exc}") from None
    return out


# ──────────────────────────────────────────────
#  Key and card files
# ──────────────────────────────────────────────

_PUBLIC_FIELDS = ("n", "e", "g")
_SECRET_FIELDS = ("p", "q", "n", "e", "d", "g")
_CARD_FIELDS = ("n", "e", "g", "id", "cid", "s", "h")


def dump_public(params: PublicParams) -> str:
    return json.dumps({f: encode_nat(getattr(params, f)) for f in _PUBLIC_FIELDS}, indent=2)


def load_public(raw: str) -> PublicParams:
    return PublicParams(**_load_hex_record(raw, _PUBLIC_FIELDS))


def dump_secret(kic: KicParams) -> str:
    return json.dumps({f: encode_nat(getattr(kic, f)) for f in _SECRET_FIELDS}, indent=2)


def load_secret(raw: str) -> KicParams:
    kic = KicParams(**_load_hex_record(raw, _SECRET_FIELDS))
    if kic.p * kic.q != kic.n:
        raise WireFormatError("secret file is inconsistent: n != p*q")
    return kic


def dump_card(card: SmartCardContents) -> str:
    d = {f: encode_nat(getattr(card, f)) for f in _CARD_FIELDS}
    d["f_slot"] = card.f_slot
    return json.dumps(d, indent=2)


def load_card(raw: str) -> SmartCardContents:
    d = _load_hex_record(raw, _CARD_FIELDS)
    f_slot = json.loads(raw).get("f_slot", DEFAULT_F_SLOT)
    return SmartCardContents(**d, f_slot=str(f_slot))
