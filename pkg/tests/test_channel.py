# tests/test_channel.py
import threading
from dataclasses import replace

import pytest

from cardauth.channel import Channel, ClockMode, ClockModel, intercept_channel
from cardauth.entities import CidPolicy, PublicParams, UserCredentials, VerifyReason
from cardauth.protocol import CidAssigner, issue_card, kic_from_primes, login_request_for_nonce

TOY_KIC = kic_from_primes(5, 7, e=5, g=3)
TOY_CARD = issue_card(TOY_KIC, UserCredentials(id=2, pw=4), CidAssigner(CidPolicy.MIRROR),
                      requested_cid=3)


@pytest.fixture
def channel():
    return Channel(ClockModel(ClockMode.REALISTIC, now=6, delta_t=2))


def toy_request(t=6):
    return login_request_for_nonce(TOY_CARD, pw=4, t=t, r=2)


class TestChannel:
    def test_accepted_request_is_intercepted(self, channel):
        decision = channel.send(toy_request())
        assert decision.accepted
        intercepts = channel.drain_intercepts()
        assert len(intercepts) == 1
        assert intercepts[0].m == toy_request()
        assert intercepts[0].captured_at == 6
        assert intercepts[0].wire.startswith('{"id":"2","cid":"3"')

    def test_rejected_request_is_not_logged(self, channel):
        decision = channel.send(replace(toy_request(), y=9))
        assert decision.reason is VerifyReason.EQUATION_FAILED
        assert channel.drain_intercepts() == []

    def test_stale_request(self, channel):
        channel.clock.advance(3)
        assert channel.send(toy_request()).reason is VerifyReason.STALE_TIMESTAMP

    def test_drain_clears(self, channel):
        channel.send(toy_request())
        channel.drain_intercepts()
        assert channel.drain_intercepts() == []

    def test_server_params_must_match_request(self):
        clock = ClockModel(ClockMode.ABSTRACT, now=6, delta_t=2)
        assert Channel(clock, public=PublicParams(n=35, e=5, g=3)).send(toy_request()).accepted
        ch = Channel(clock, public=PublicParams(n=35, e=7, g=3))
        assert ch.send(toy_request()).reason is VerifyReason.FORMAT_ID
        assert ch.drain_intercepts() == []

    def test_concurrent_senders(self, channel):
        def worker():
            for _ in range(25):
                channel.send(toy_request())

        threads = [threading.Thread(target=worker) for _ in range(4)]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
        assert len(channel.drain_intercepts()) == 100

    def test_intercept_channel_round_trips_wire(self):
        intercept = intercept_channel(toy_request(), captured_at=7)
        assert intercept.m == toy_request()
        assert intercept.captured_at == 7


class TestClockModel:
    def test_realistic_clock_cannot_go_back(self):
        clock = ClockModel(ClockMode.REALISTIC, now=100)
        clock.set_now(150)
        with pytest.raises(ValueError):
            clock.set_now(120)
        assert clock.now == 150

    def test_abstract_clock_can_be_set_freely(self):
        clock = ClockModel(ClockMode.ABSTRACT, now=100)
        assert clock.set_now(3) == 3

    def test_advance(self):
        clock = ClockModel(ClockMode.REALISTIC, now=10)
        assert clock.advance(5) == 15
        with pytest.raises(ValueError):
            clock.advance(-1)

    def test_timestamps_start_at_one(self):
        with pytest.raises(ValueError):
            ClockModel(ClockMode.ABSTRACT, now=5).set_now(0)

    def test_wall_clock_is_realistic(self):
        clock = ClockModel.wall(delta_t=30)
        assert clock.mode is ClockMode.REALISTIC and clock.delta_t == 30
        assert clock.now > 1_600_000_000
