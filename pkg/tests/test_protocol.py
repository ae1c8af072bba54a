# tests/test_protocol.py
import math
import random
import threading
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cardauth.entities import (
    CidPolicy, CriticalFinding, PublicParams, RegistrationRejected,
    UserCredentials, VerifyReason,
)
from cardauth.numtheory import NumberTheoryError
from cardauth.protocol import (
    CidAssigner, FormatPolicy, Kic, build_login_request, equation_holds,
    issue_card, kic_from_primes, kic_setup, login_request_for_nonce, verify_login,
)


@pytest.fixture
def toy_kic():
    return kic_from_primes(5, 7, e=5, g=3)


@pytest.fixture
def toy_card(toy_kic):
    return issue_card(toy_kic, UserCredentials(id=2, pw=4), CidAssigner(CidPolicy.MIRROR),
                      requested_cid=3)


def naive_pow(base, exp, mod):
    acc = 1 % mod
    for _ in range(exp):
        acc = acc * base % mod
    return acc


def random_victim(n, rng):
    while True:
        uid = rng.randrange(2, n)
        if math.gcd(uid, n) == 1:
            return UserCredentials(id=uid, pw=rng.randrange(1, n))


class TestKicSetup:
    def test_toy_fixture(self, toy_kic):
        assert (toy_kic.n, toy_kic.d, toy_kic.g) == (35, 5, 3)
        assert toy_kic.e * toy_kic.d % toy_kic.phi == 1

    @pytest.mark.parametrize("seed", range(50))
    def test_invariants_random_seeds(self, seed):
        kic = kic_setup(16, random.Random(seed))
        assert kic.n == kic.p * kic.q and kic.p != kic.q
        assert 1 < kic.e < kic.phi and math.gcd(kic.e, kic.phi) == 1
        assert kic.e * kic.d % kic.phi == 1
        for prime in (kic.p, kic.q):
            assert all(pow(kic.g, (prime - 1) // r, prime) != 1
                       for r in range(2, prime) if (prime - 1) % r == 0
                       and all(r % s for s in range(2, math.isqrt(r) + 1)))

    def test_deterministic(self):
        assert kic_setup(32, random.Random(5)) == kic_setup(32, random.Random(5))

    def test_three_bit_primes(self):
        kic = kic_setup(3, random.Random(0))
        assert {kic.p, kic.q} == {5, 7}

    def test_safe_primes_above_threshold(self):
        kic = kic_setup(32, random.Random(1))
        assert kic.p.bit_length() == kic.q.bit_length() == 32
        assert kic.e == 65537

    def test_rejects_tiny_primes(self):
        with pytest.raises(NumberTheoryError):
            kic_setup(2, random.Random(0))


class TestIssueCard:
    def test_toy_fixture(self, toy_card):
        assert toy_card.s == naive_pow(2, 3 * 5, 35) == 8
        assert toy_card.h == naive_pow(3, 4 * 5, 35) == 16
        assert toy_card.f_slot == "sha256"

    def test_identity_sharing_factor_is_critical(self, toy_kic):
        with pytest.raises(CriticalFinding) as info:
            issue_card(toy_kic, UserCredentials(id=14, pw=4), CidAssigner())
        assert info.value.factor == 7

    def test_out_of_range_credentials(self, toy_kic):
        with pytest.raises(NumberTheoryError):
            issue_card(toy_kic, UserCredentials(id=40, pw=4), CidAssigner())
        with pytest.raises(NumberTheoryError):
            issue_card(toy_kic, UserCredentials(id=2, pw=0), CidAssigner())

    def test_sequential_cids_are_distinct(self, toy_kic):
        kic = Kic(toy_kic)
        a = kic.register(UserCredentials(id=2, pw=4))
        b = kic.register(UserCredentials(id=3, pw=4))
        assert (a.cid, b.cid) == (2, 3)

    def test_mirror_needs_requested_cid(self, toy_kic):
        with pytest.raises(RegistrationRejected):
            Kic(toy_kic, CidPolicy.MIRROR).register(UserCredentials(id=2, pw=4))

    def test_random_policy_in_range(self, toy_kic):
        kic = Kic(toy_kic, CidPolicy.RANDOM)
        card = kic.register(UserCredentials(id=2, pw=4), rng=random.Random(3))
        assert 2 <= card.cid < 35

    def test_duplicate_identity_policy(self, toy_kic):
        kic = Kic(toy_kic, reject_duplicates=True)
        kic.register(UserCredentials(id=2, pw=4))
        with pytest.raises(RegistrationRejected):
            kic.register(UserCredentials(id=2, pw=9))

    def test_sequential_counter_is_thread_safe(self):
        kic = Kic(kic_setup(16, random.Random(8)))
        cids, lock = [], threading.Lock()

        def worker(offset):
            for i in range(50):
                card = kic.register(UserCredentials(id=2 + offset * 50 + i, pw=5))
                with lock:
                    cids.append(card.cid)

        threads = [threading.Thread(target=worker, args=(k,)) for k in range(4)]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
        assert sorted(cids) == list(range(2, 202))


class TestLogin:
    def test_toy_fixture(self, toy_card):
        m = login_request_for_nonce(toy_card, pw=4, t=6, r=2)
        expected = (naive_pow(3, 4 * 2, 35), 8 * naive_pow(16, 2 * 6, 35) % 35)
        assert (m.x, m.y) == expected == (16, 8)
        # Y^e = ID^CID * g^(PW*r*T)
        assert naive_pow(m.y, 5, 35) == naive_pow(2, 3, 35) * naive_pow(3, 4 * 2 * 6, 35) % 35
        assert (m.id, m.cid, m.n, m.e, m.g, m.t) == (2, 3, 35, 5, 3, 6)

    def test_fresh_nonce_per_call(self):
        kic = kic_setup(32, random.Random(4))
        card = Kic(kic).register(random_victim(kic.n, random.Random(4)))
        rng = random.Random(99)
        a = build_login_request(card, 7, 1000, rng)
        b = build_login_request(card, 7, 1000, rng)
        assert a.x != b.x

    def test_wrong_password_fails_equation(self, toy_card):
        # at t=6, r=2 the fixture's group is too small to tell pw 3 from pw 4
        m = login_request_for_nonce(toy_card, pw=3, t=5, r=2)
        assert verify_login(m, 5, 2).reason is VerifyReason.EQUATION_FAILED


class TestVerify:
    def test_toy_legitimate(self, toy_card):
        m = login_request_for_nonce(toy_card, pw=4, t=6, r=2)
        assert naive_pow(8, 5, 35) == 8
        assert naive_pow(2, 3, 35) * naive_pow(16, 6, 35) % 35 == 8
        decision = verify_login(m, server_now=6, delta_t=2)
        assert decision.accepted and decision.reason is VerifyReason.OK

    def test_tampered_y(self, toy_card):
        m = login_request_for_nonce(toy_card, pw=4, t=6, r=2)
        bad = replace(m, y=9)
        assert verify_login(bad, 6, 2).reason is VerifyReason.EQUATION_FAILED

    def test_stale_and_future(self, toy_card):
        m = login_request_for_nonce(toy_card, pw=4, t=6, r=2)
        assert verify_login(m, 6 + 2 + 1, 2).reason is VerifyReason.STALE_TIMESTAMP
        assert verify_login(m, 5, 2).reason is VerifyReason.STALE_TIMESTAMP
        assert verify_login(m, 8, 2).accepted

    def test_format_checks_come_first(self, toy_card):
        m = login_request_for_nonce(toy_card, pw=4, t=6, r=2)
        bad_id = replace(m, id=7)
        bad_cid = replace(m, cid=1)
        assert verify_login(bad_id, 100, 2).reason is VerifyReason.FORMAT_ID
        assert verify_login(bad_cid, 100, 2).reason is VerifyReason.FORMAT_CID

    def test_relaxed_format_policy(self, toy_card):
        m = login_request_for_nonce(toy_card, pw=4, t=6, r=2)
        bad_id = replace(m, id=7)
        relaxed = FormatPolicy(require_coprime_id=False)
        assert verify_login(bad_id, 6, 2, relaxed).reason is VerifyReason.EQUATION_FAILED

    def test_server_public_params_override_message(self, toy_card):
        m = login_request_for_nonce(toy_card, pw=4, t=6, r=2)
        assert equation_holds(m, PublicParams(n=35, e=5, g=3))
        assert not equation_holds(m, PublicParams(n=35, e=7, g=3))

    def test_identity_alias_outside_server_modulus(self, toy_card):
        m = login_request_for_nonce(toy_card, pw=4, t=6, r=2)
        server = PublicParams(n=35, e=5, g=3)
        alias = replace(m, id=2 + 35, n=1000)
        assert verify_login(alias, 6, 2, public=server).reason is VerifyReason.FORMAT_ID
        assert verify_login(replace(m, id=2 + 35), 6, 2, public=server).reason \
            is VerifyReason.FORMAT_ID
        assert verify_login(replace(m, cid=3 + 35, n=1000), 6, 2, public=server).reason \
            is VerifyReason.FORMAT_ID

    def test_request_parameters_must_match_server(self, toy_card):
        m = login_request_for_nonce(toy_card, pw=4, t=6, r=2)
        server = PublicParams(n=35, e=5, g=3)
        assert verify_login(m, 6, 2, public=server).accepted
        for changed in (replace(m, e=7), replace(m, g=2)):
            assert verify_login(changed, 6, 2, public=server).reason is VerifyReason.FORMAT_ID

    def test_cid_range_uses_server_modulus(self, toy_card):
        m = login_request_for_nonce(toy_card, pw=4, t=6, r=2)
        relaxed = FormatPolicy(require_coprime_id=False)
        assert not relaxed.cid_ok(replace(m, cid=40), n=35)
        assert relaxed.cid_ok(replace(m, cid=40), n=1000)


class TestCompleteness:
    @pytest.mark.parametrize("bits", [32, 64])
    def test_legitimate_logins_always_verify(self, bits):
        for seed in range(200):
            rng = random.Random(seed)
            kic = kic_setup(bits, rng)
            victim = random_victim(kic.n, rng)
            card = Kic(kic, CidPolicy.RANDOM).register(victim, rng=rng)
            t = rng.randrange(1, 1 << 40)
            r = rng.randrange(2, kic.n)
            m = login_request_for_nonce(card, victim.pw, t, r)
            delay = rng.randint(0, 60)
            assert verify_login(m, t + delay, 60).accepted
            expanded = pow(m.id, m.cid, kic.n) * pow(kic.g, victim.pw * r * t, kic.n) % kic.n
            assert pow(m.y, kic.e, kic.n) == expanded

    @given(seed=st.integers(min_value=0, max_value=(1 << 64) - 1),
           bit=st.integers(min_value=0, max_value=62), field=st.sampled_from(["x", "y"]))
    @settings(max_examples=200, deadline=None)
    def test_single_bit_tamper_rejected(self, seed, bit, field):
        rng = random.Random(seed)
        kic = kic_setup(32, rng)
        victim = random_victim(kic.n, rng)
        card = Kic(kic).register(victim)
        m = build_login_request(card, victim.pw, 1001, rng)
        flipped = getattr(m, field) ^ (1 << bit)
        if flipped >= kic.n:
            return
        bad = replace(m, **{field: flipped})
        assert verify_login(bad, 1001, 60).reason is VerifyReason.EQUATION_FAILED
