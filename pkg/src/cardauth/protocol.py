# protocol.py
"""The timestamp-based smart-card scheme: KIC setup, card issuance, login, verification."""

import logging
import math
import random
import threading
from dataclasses import dataclass

from .entities import (
    CidPolicy, CriticalFinding, KicParams, LoginRequest, PublicParams,
    RegistrationRejected, SmartCardContents, Timestamp, UserCredentials,
    VerifyDecision, VerifyReason,
)
from .numtheory import (
    NotFound, NumberTheoryError, common_primitive_element, gen_prime,
    gen_safe_prime, mod_inv, mod_pow,
)

logger = logging.getLogger(__name__)

DEFAULT_E = 65537
DEFAULT_DELTA_T = 60
KIC_RETRIES = 8
SAFE_PRIME_MIN_BITS = 21  # below this, p - 1 is factored by trial division
SEQUENTIAL_CID_START = 2


# ──────────────────────────────────────────────
#  KIC setup
# ──────────────────────────────────────────────

def _choose_e(phi: int, rng: random.Random) -> int:
    if DEFAULT_E < phi and math.gcd(DEFAULT_E, phi) == 1:
        return DEFAULT_E
    candidates = [e for e in range(3, phi) if math.gcd(e, phi) == 1] if phi < 1 << 16 else []
    if candidates:
        return rng.choice(candidates)
    while True:
        e = rng.randrange(3, phi) | 1
        if math.gcd(e, phi) == 1:
            return e


def kic_from_primes(p: int, q: int, e: int | None = None, g: int | None = None,
                    rng: random.Random | None = None) -> KicParams:
    """Derive n, d and (unless given) e and g from two distinct primes."""
    if p == q:
        raise NumberTheoryError("p and q must be distinct primes")
    rng = rng or random.Random(p * q)
    n = p * q
    phi = (p - 1) * (q - 1)
    if e is None:
        e = _choose_e(phi, rng)
    if not 1 < e < phi or math.gcd(e, phi) != 1:
        raise NumberTheoryError(f"e={e} is not a valid public exponent for phi={phi}")
    d = mod_inv(e, phi)
    if g is None:
        g = common_primitive_element(p, q, rng)
    return KicParams(p=p, q=q, n=n, e=e, d=d, g=g)


def kic_setup(bits: int, rng: random.Random) -> KicParams:
    """Generate KIC key material with `bits`-bit primes, deterministic in `rng`."""
    if bits < 3:
        raise NumberTheoryError(f"prime size must be >= 3 bits, got {bits}")
    make_prime = gen_safe_prime if bits >= SAFE_PRIME_MIN_BITS else gen_prime
    last_error: NotFound | None = None
    for attempt in range(KIC_RETRIES):
        p = make_prime(bits, rng)
        q = make_prime(bits, rng)
        while q == p:
            q = make_prime(bits, rng)
        try:
            return kic_from_primes(p, q, rng=rng)
        except NotFound as exc:
            logger.info("primitive element search failed (attempt %d), regenerating primes",
                        attempt + 1)
            last_error = exc
    raise NotFound(f"KIC setup failed after {KIC_RETRIES} attempts") from last_error


# ──────────────────────────────────────────────
#  CID assignment
# ──────────────────────────────────────────────

class CidAssigner:
    """Assigns card identifiers; the sequential counter is guarded by a lock."""

    def __init__(self, policy: CidPolicy = CidPolicy.SEQUENTIAL):
        self.policy = policy
        self._next = SEQUENTIAL_CID_START
        self._lock = threading.Lock()

    def assign(self, n: int, rng: random.Random | None = None,
               requested: int | None = None) -> int:
        if self.policy is CidPolicy.MIRROR:
            if requested is None:
                raise RegistrationRejected("mirror CID policy needs a caller-supplied CID")
            if not 2 <= requested < n:
                raise RegistrationRejected(f"requested CID {requested} outside [2, n-1]")
            return requested
        if self.policy is CidPolicy.RANDOM:
            rng = rng or random.Random()
            return rng.randrange(2, n)
        with self._lock:
            cid = self._next
            self._next += 1
        if cid >= n:
            raise RegistrationRejected("sequential CID space exhausted")
        return cid


# ──────────────────────────────────────────────
#  Registration
# ──────────────────────────────────────────────

def _check_credentials(kic: KicParams, creds: UserCredentials):
    if not 2 <= creds.id < kic.n:
        raise NumberTheoryError("identity outside [2, n-1]")
    if not 1 <= creds.pw < kic.n:
        raise NumberTheoryError("password outside [1, n-1]")
    shared = math.gcd(creds.id, kic.n)
    if shared != 1:
        raise CriticalFinding("identity shares a factor with n", factor=shared)


def issue_card(kic: KicParams, creds: UserCredentials, cid_policy: CidAssigner,
               rng: random.Random | None = None,
               requested_cid: int | None = None) -> SmartCardContents:
    """Registration steps 4-6: S = ID^(CID*d), h = g^(PW*d), both mod n."""
    _check_credentials(kic, creds)
    cid = cid_policy.assign(kic.n, rng=rng, requested=requested_cid)
    s = mod_pow(creds.id, cid * kic.d, kic.n)
    h = mod_pow(kic.g, creds.pw * kic.d, kic.n)
    return SmartCardContents(n=kic.n, e=kic.e, g=kic.g, id=creds.id, cid=cid, s=s, h=h)


class Kic:
    """Registration endpoint of the Key Information Center."""

    def __init__(self, params: KicParams, cid_policy: CidPolicy = CidPolicy.SEQUENTIAL,
                 reject_duplicates: bool = False):
        self.params = params
        self.cids = CidAssigner(cid_policy)
        self.reject_duplicates = reject_duplicates
        self._registered: set[int] = set()
        self._lock = threading.Lock()

    @property
    def public(self) -> PublicParams:
        return self.params.public

    def register(self, creds: UserCredentials, requested_cid: int | None = None,
                 rng: random.Random | None = None) -> SmartCardContents:
        with self._lock:
            if self.reject_duplicates and creds.id in self._registered:
                raise RegistrationRejected("identity already registered")
            card = issue_card(self.params, creds, self.cids, rng=rng, requested_cid=requested_cid)
            self._registered.add(creds.id)
        logger.debug("issued card cid=%d", card.cid)
        return card


# ──────────────────────────────────────────────
#  Login
# ──────────────────────────────────────────────

def login_request_for_nonce(card: SmartCardContents, pw: int, t: Timestamp,
                            r: int) -> LoginRequest:
    """X = g^(PW*r), Y = S * h^(r*T), both mod n."""
    if t < 1:
        raise NumberTheoryError(f"timestamp must be >= 1, got {t}")
    x = mod_pow(card.g, pw * r, card.n)
    y = card.s * mod_pow(card.h, r * t, card.n) % card.n
    return LoginRequest(id=card.id, cid=card.cid, x=x, y=y,
                        n=card.n, e=card.e, g=card.g, t=t)


def build_login_request(card: SmartCardContents, pw: int, t: Timestamp,
                        rng: random.Random) -> LoginRequest:
    r = rng.randrange(2, card.n)
    return login_request_for_nonce(card, pw, t, r)


# ──────────────────────────────────────────────
#  Verification
# ──────────────────────────────────────────────

@dataclass(frozen=True)
class FormatPolicy:
    """Identifier rules for verification step 1, checked against the server's modulus."""
    require_coprime_id: bool = True

    def id_ok(self, m: LoginRequest, n: int | None = None) -> bool:
        n = m.n if n is None else n
        if n < 3 or not 2 <= m.id < n:
            return False
        return not self.require_coprime_id or math.gcd(m.id, n) == 1

    def cid_ok(self, m: LoginRequest, n: int | None = None) -> bool:
        n = m.n if n is None else n
        return 2 <= m.cid < n


DEFAULT_FORMAT = FormatPolicy()


def equation_holds(m: LoginRequest, public: PublicParams | None = None) -> bool:
    """Y^e ≡ ID^CID * X^T (mod n); n and e from `public` when given."""
    n, e = (public.n, public.e) if public else (m.n, m.e)
    if n < 2 or m.t < 1:
        return False
    lhs = pow(m.y, e, n)
    rhs = pow(m.id, m.cid, n) * pow(m.x, m.t, n) % n
    return lhs == rhs


def verify_login(m: LoginRequest, server_now: Timestamp, delta_t: int = DEFAULT_DELTA_T,
                 format_rules: FormatPolicy = DEFAULT_FORMAT,
                 public: PublicParams | None = None) -> VerifyDecision:
    """Server checks in order: identifier format, freshness, verification equation.

    With `public`, the request must carry the server's own (n, e, g) and the
    identifier ranges are taken modulo the server's n.
    """
    n = public.n if public else m.n
    if public and (m.n, m.e, m.g) != (public.n, public.e, public.g):
        decision = VerifyDecision.reject(VerifyReason.FORMAT_ID)
    elif not format_rules.id_ok(m, n):
        decision = VerifyDecision.reject(VerifyReason.FORMAT_ID)
    elif not format_rules.cid_ok(m, n):
        decision = VerifyDecision.reject(VerifyReason.FORMAT_CID)
    elif not 0 <= server_now - m.t <= delta_t:
        decision = VerifyDecision.reject(VerifyReason.STALE_TIMESTAMP)
    elif not equation_holds(m, public):
        decision = VerifyDecision.reject(VerifyReason.EQUATION_FAILED)
    else:
        return VerifyDecision.ok()
    logger.debug("login rejected: %s (t=%d, now=%d)", decision.reason.value, m.t, server_now)
    return decision
