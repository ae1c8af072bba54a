# numtheory.py
"""Modular arithmetic and the number-theoretic procedures behind the scheme."""

import math
import random
from dataclasses import dataclass


DEFAULT_MR_ROUNDS = 32
PRIMITIVE_SEARCH_FACTOR = 4  # candidates = factor * bitlen(n)
TRIAL_DIVISION_LIMIT = 1 << 40
DESK_SCALE_MODULUS = 1 << 32

# Deterministic for n < 3.3e24, which covers every n < 2^64.
_FIXED_WITNESSES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)
_SMALL_PRIMES = (
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71,
    73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151,
    157, 163, 167, 173, 179, 181, 191, 193, 197, 199, 211, 223, 227, 229, 233,
    239, 241, 251,
)


# ──────────────────────────────────────────────
#  Errors
# ──────────────────────────────────────────────

class NumberTheoryError(ValueError):
    """Argument outside the domain of a number-theoretic operation."""


class NotInvertible(NumberTheoryError):
    def __init__(self, value: int, modulus: int, gcd: int):
        super().__init__(f"{value} is not invertible mod {modulus} (gcd={gcd})")
        self.value = value
        self.modulus = modulus
        self.gcd = gcd


class NotFound(NumberTheoryError):
    """A bounded search ran out of candidates."""


class Unsupported(NumberTheoryError):
    """The operation needs a factorization that is not available."""


@dataclass(frozen=True)
class Bezout:
    gcd: int
    u: int  # coefficient of the first argument
    v: int  # coefficient of the second argument


# ──────────────────────────────────────────────
#  Nat wire encoding
# ──────────────────────────────────────────────

def encode_nat(value: int) -> str:
    """Lowercase hex, no leading zeros, "0" for zero."""
    if value < 0:
        raise NumberTheoryError(f"negative value cannot be encoded: {value}")
    return format(value, "x")


def decode_nat(text: str) -> int:
    if not isinstance(text, str) or not text:
        raise NumberTheoryError(f"not a hex Nat: {text!r}")
    if text != text.lower() or (len(text) > 1 and text[0] == "0"):
        raise NumberTheoryError(f"non-canonical hex Nat: {text!r}")
    if any(c not in "0123456789abcdef" for c in text):
        raise NumberTheoryError(f"not a hex Nat: {text!r}")
    return int(text, 16)


# ──────────────────────────────────────────────
#  Modular arithmetic
# ──────────────────────────────────────────────

def mod_pow(base: int, exponent: int, modulus: int) -> int:
    if modulus < 2:
        raise NumberTheoryError(f"modulus must be >= 2, got {modulus}")
    if exponent < 0:
        raise NumberTheoryError("negative exponent; invert the base with mod_inv first")
    return pow(base, exponent, modulus)


def ext_gcd(a: int, b: int) -> Bezout:
    """Iterative extended Euclid: a*u + b*v == gcd(a, b)."""
    if a < 0 or b < 0:
        raise NumberTheoryError("ext_gcd expects non-negative arguments")
    if a == 0 and b == 0:
        raise NumberTheoryError("gcd(0, 0) is undefined")
    old_r, r = a, b
    old_u, u = 1, 0
    old_v, v = 0, 1
    while r:
        quot = old_r // r
        old_r, r = r, old_r - quot * r
        old_u, u = u, old_u - quot * u
        old_v, v = v, old_v - quot * v
    return Bezout(gcd=old_r, u=old_u, v=old_v)


def mod_inv(a: int, modulus: int) -> int:
    if modulus < 2:
        raise NumberTheoryError(f"modulus must be >= 2, got {modulus}")
    a %= modulus
    if a == 0:
        raise NotInvertible(a, modulus, modulus)
    bz = ext_gcd(a, modulus)
    if bz.gcd != 1:
        raise NotInvertible(a, modulus, bz.gcd)
    return bz.u % modulus


def lcm(a: int, b: int) -> int:
    return a // math.gcd(a, b) * b


def carmichael_lambda(p: int, q: int) -> int:
    """λ(p·q) for distinct odd primes p and q."""
    return lcm(p - 1, q - 1)


# ──────────────────────────────────────────────
#  Primes
# ──────────────────────────────────────────────

def is_probable_prime(n: int, rounds: int = DEFAULT_MR_ROUNDS,
                      rng: random.Random | None = None) -> bool:
    """Miller-Rabin. Fixed witnesses below 2^64, random witnesses above."""
    if rounds < 1:
        raise NumberTheoryError("rounds must be >= 1")
    if n < 2:
        return False
    for sp in _SMALL_PRIMES:
        if n == sp:
            return True
        if n % sp == 0:
            return False

    s, d = 0, n - 1
    while d % 2 == 0:
        s += 1
        d //= 2

    if n < (1 << 64):
        witnesses = _FIXED_WITNESSES
    else:
        rng = rng or random.Random(n)
        witnesses = [rng.randrange(2, n - 1) for _ in range(rounds)]

    for a in witnesses:
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(s - 1):
            x = pow(x, 2, n)
            if x == n - 1:
                break
        else:
            return False
    return True


def gen_prime(bits: int, rng: random.Random) -> int:
    """Random prime of exactly `bits` bits, drawn from `rng`."""
    if bits < 3:
        raise NumberTheoryError(f"bits must be >= 3, got {bits}")
    top = 1 << (bits - 1)
    while True:
        candidate = rng.getrandbits(bits) | top | 1
        if is_probable_prime(candidate):
            return candidate


def gen_safe_prime(bits: int, rng: random.Random) -> int:
    """Prime p = 2p' + 1 of exactly `bits` bits with p' prime."""
    if bits < 4:
        raise NumberTheoryError(f"safe primes need bits >= 4, got {bits}")
    top = 1 << (bits - 2)
    while True:
        half = rng.getrandbits(bits - 1) | top | 1
        # p' ≡ 1 (mod 3) makes 2p'+1 divisible by 3
        if half > 3 and half % 3 == 1:
            continue
        if is_probable_prime(half) and is_probable_prime(2 * half + 1):
            return 2 * half + 1


def prime_factors(n: int) -> dict[int, int]:
    """Trial-division factorization {prime: exponent}, desk scale only."""
    if n < 1:
        raise NumberTheoryError(f"cannot factor {n}")
    if n > TRIAL_DIVISION_LIMIT:
        if is_probable_prime(n):
            return {n: 1}
        raise Unsupported(f"{n.bit_length()}-bit value is beyond trial division")
    factors: dict[int, int] = {}
    d = 2
    while d * d <= n:
        while n % d == 0:
            factors[d] = factors.get(d, 0) + 1
            n //= d
        d += 1 if d == 2 else 2
    if n > 1:
        factors[n] = factors.get(n, 0) + 1
    return factors


def totient_factors(p: int) -> dict[int, int]:
    """Factorization of p - 1 for a prime p (safe-prime shortcut first)."""
    half = (p - 1) // 2
    if p > 5 and is_probable_prime(half):
        return {2: 1, half: 1}
    return prime_factors(p - 1)


def _merge_factors(*parts: dict[int, int]) -> dict[int, int]:
    """Factorization of the lcm of the factored values."""
    merged: dict[int, int] = {}
    for part in parts:
        for prime, exp in part.items():
            merged[prime] = max(merged.get(prime, 0), exp)
    return merged


def lambda_factorization(p: int, q: int) -> tuple[int, dict[int, int]]:
    """(λ(pq), factorization of λ(pq)) from the primes."""
    factors = _merge_factors(totient_factors(p), totient_factors(q))
    return carmichael_lambda(p, q), factors


# ──────────────────────────────────────────────
#  Orders and primitive elements
# ──────────────────────────────────────────────

def _carmichael_of(modulus: int) -> tuple[int, dict[int, int]]:
    lam = 1
    for prime, exp in prime_factors(modulus).items():
        if prime == 2:
            part = 1 if exp == 1 else 2 if exp == 2 else 1 << (exp - 2)
        else:
            part = (prime - 1) * prime ** (exp - 1)
        lam = lcm(lam, part)
    return lam, (prime_factors(lam) if lam > 1 else {})


def multiplicative_order(a: int, modulus: int,
                         lambda_factors: tuple[int, dict[int, int]] | None = None) -> int:
    """Smallest t >= 1 with a^t ≡ 1 (mod modulus).

    Without `lambda_factors` the modulus must be desk scale (< 2^32) so λ can be
    found by trial division.
    """
    if modulus < 2:
        raise NumberTheoryError(f"modulus must be >= 2, got {modulus}")
    g = math.gcd(a, modulus)
    if g != 1:
        raise NumberTheoryError(f"{a} is not a unit mod {modulus} (gcd={g})")
    if lambda_factors is None:
        if modulus >= DESK_SCALE_MODULUS:
            raise Unsupported("modulus >= 2^32 needs the factorization of λ(modulus)")
        lambda_factors = _carmichael_of(modulus)
    order, factors = lambda_factors
    a %= modulus
    for prime in factors:
        while order % prime == 0 and pow(a, order // prime, modulus) == 1:
            order //= prime
    return order


def _is_primitive(g: int, p: int, factors: dict[int, int]) -> bool:
    return g % p != 0 and all(pow(g, (p - 1) // r, p) != 1 for r in factors)


def common_primitive_element(p: int, q: int, rng: random.Random) -> int:
    """g with order p-1 mod p and order q-1 mod q (random search)."""
    if p == q:
        raise NumberTheoryError("p and q must be distinct")
    p_factors = totient_factors(p)
    q_factors = totient_factors(q)
    n = p * q
    for _ in range(PRIMITIVE_SEARCH_FACTOR * n.bit_length()):
        g = rng.randrange(2, n)
        if _is_primitive(g, p, p_factors) and _is_primitive(g, q, q_factors):
            return g
    raise NotFound(f"no common primitive element found for p={p}, q={q}")
