# channel.py
"""Simulated login channel: carries wire lines to the server, an eavesdropper keeps copies."""

import logging
import threading
import time
from collections import deque
from dataclasses import dataclass
from enum import Enum

from .entities import (
    Intercept, LoginRequest, PublicParams, Timestamp, VerifyDecision,
    encode_request, parse_request,
)
from .protocol import DEFAULT_DELTA_T, verify_login

logger = logging.getLogger(__name__)

_MAX_INTERCEPTS = 500


class ClockMode(Enum):
    ABSTRACT = "abstract"
    REALISTIC = "realistic"


@dataclass
class ClockModel:
    """Server clock. REALISTIC only moves forward; ABSTRACT may be set freely."""
    mode: ClockMode
    now: Timestamp
    delta_t: int = DEFAULT_DELTA_T

    @classmethod
    def wall(cls, delta_t: int = DEFAULT_DELTA_T) -> "ClockModel":
        return cls(mode=ClockMode.REALISTIC, now=int(time.time()), delta_t=delta_t)

    def advance(self, ticks: int) -> Timestamp:
        if ticks < 0:
            raise ValueError("clock cannot advance by a negative amount")
        self.now += ticks
        return self.now

    def set_now(self, t: Timestamp) -> Timestamp:
        if t < 1:
            raise ValueError("timestamps start at 1")
        if self.mode is ClockMode.REALISTIC and t < self.now:
            raise ValueError(f"realistic clock cannot move back from {self.now} to {t}")
        self.now = t
        return self.now


def intercept_channel(m: LoginRequest, captured_at: Timestamp) -> Intercept:
    """Capture the canonical wire line; the stored message is the decoded copy."""
    wire = encode_request(m)
    return Intercept(m=parse_request(wire), captured_at=captured_at, wire=wire)


class Channel:
    """Delivers requests to the verifier and logs every accepted one for the eavesdropper."""

    def __init__(self, clock: ClockModel, public: PublicParams | None = None):
        self.clock = clock
        self.public = public
        self._log: deque[Intercept] = deque(maxlen=_MAX_INTERCEPTS)
        self._lock = threading.Lock()

    def send(self, m: LoginRequest) -> VerifyDecision:
        wire = encode_request(m)
        received = parse_request(wire)
        decision = verify_login(received, self.clock.now, self.clock.delta_t,
                                public=self.public)
        if decision.accepted:
            with self._lock:
                self._log.append(intercept_channel(received, self.clock.now))
        else:
            logger.debug("not intercepting rejected request (%s)", decision.reason.value)
        return decision

    def drain_intercepts(self) -> list[Intercept]:
        with self._lock:
            intercepts = list(self._log)
            self._log.clear()
            return intercepts
