"""cardauth CLI -- keygen / register / login / verify / attack / run-scenario / demo."""

import argparse
import json
import logging
import os
import random
import secrets
import sys
from pathlib import Path

from . import __version__
from .attacks import (
    forge_via_euclid, forge_via_inverse_timestamp, forge_via_time_factor,
    impersonate_via_inverse_registration,
)
from .channel import ClockMode, ClockModel, intercept_channel
from .entities import (
    CardAuthError, CidPolicy, ConfigError, CorruptTrial, CriticalFinding, ForgeMode, Infeasible,
    UserCredentials, WireFormatError, dump_card, dump_public,
    dump_secret, encode_request, load_card, load_public, load_secret, parse_enum,
    parse_request, text_to_nat,
)
from .harness import (
    AttackKind, ClockSettings, ScenarioConfig, load_config, run_scenario,
)
from .numtheory import NumberTheoryError, decode_nat, mod_inv, multiplicative_order
from .protocol import (
    DEFAULT_DELTA_T, Kic, build_login_request, equation_holds, kic_from_primes,
    kic_setup, login_request_for_nonce, verify_login,
)
from .report import emit_report

logger = logging.getLogger(__name__)


# ──────────────────────────────────────────────
#  Constants
# ──────────────────────────────────────────────

EXIT_OK = 0
EXIT_REJECTED = 1
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3

DEFAULT_BITS = 32
DEFAULT_LOG_LEVEL = os.environ.get("CARDAUTH_LOG_LEVEL", "WARNING")


def _env_delta_t() -> int:
    raw = os.environ.get("CARDAUTH_DELTA_T")
    if not raw:
        return DEFAULT_DELTA_T
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"CARDAUTH_DELTA_T must be an integer, got {raw!r}") from None
    if value < 0:
        raise ConfigError(f"CARDAUTH_DELTA_T must be >= 0, got {value}")
    return value


ATTACK_TYPES = ["euclid", "time-factor", "inverse-id", "inverse-ts-literal",
                "inverse-ts-whitebox"]


# ──────────────────────────────────────────────
#  File helpers
# ──────────────────────────────────────────────

def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text()


def _write(path: str | None, text: str):
    if not text.endswith("\n"):
        text += "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _rng(seed: int | None) -> random.Random:
    return random.Random(secrets.randbits(64) if seed is None else seed)


def _hex_nat(text: str) -> int:
    """Hex Nat from the command line (accepts an optional 0x prefix)."""
    return decode_nat(text.lower().removeprefix("0x"))


def _nat_arg(text: str) -> int:
    try:
        return _hex_nat(text)
    except NumberTheoryError as exc:
        raise argparse.ArgumentTypeError(str(exc))


# ──────────────────────────────────────────────
#  Subcommands
# ──────────────────────────────────────────────

def _cmd_keygen(args) -> int:
    """Handler for the 'keygen' subcommand."""
    kic = kic_setup(args.bits, _rng(args.seed))
    _write(f"{args.out}.public.json", dump_public(kic.public))
    _write(f"{args.out}.secret.json", dump_secret(kic))
    print(f"Public parameters: {args.out}.public.json")
    print(f"Secret parameters: {args.out}.secret.json (keep private)")
    return EXIT_OK


def _cmd_register(args) -> int:
    """Handler for the 'register' subcommand."""
    params = load_secret(_read(args.secret))
    if args.raw:
        creds = UserCredentials(id=_hex_nat(args.identity), pw=_hex_nat(args.password))
    else:
        creds = UserCredentials.from_strings(args.identity, args.password, params.n)
    kic = Kic(params, parse_enum(CidPolicy, args.cid_policy))
    card = kic.register(creds, requested_cid=args.cid, rng=_rng(args.seed))
    _write(args.out, dump_card(card))
    return EXIT_OK


def _cmd_login(args) -> int:
    """Handler for the 'login' subcommand."""
    card = load_card(_read(args.card))
    pw = _hex_nat(args.password) if args.raw else text_to_nat(args.password, card.n)
    t = args.timestamp if args.timestamp is not None else ClockModel.wall().now
    m = build_login_request(card, pw, t, _rng(args.seed))
    _write(args.out, encode_request(m))
    return EXIT_OK


def _cmd_verify(args) -> int:
    """Handler for the 'verify' subcommand."""
    m = parse_request(_read(args.request).strip())
    public = load_public(_read(args.public)) if args.public else None
    if args.now is not None:
        now = args.now
    elif args.clock_mode == "abstract":
        now = m.t
    else:
        now = ClockModel.wall().now
    decision = verify_login(m, now, args.delta_t, public=public)
    print(decision.reason.value)
    return EXIT_OK if decision.accepted else EXIT_REJECTED


def _cmd_attack(args) -> int:
    """Handler for the 'attack' subcommand."""
    m = parse_request(_read(args.request).strip())
    intercept = intercept_channel(m, captured_at=m.t)
    rng = _rng(args.seed)
    kind = args.type

    if kind == "euclid":
        if args.t_a is None:
            raise WireFormatError("euclid needs --t-a")
        result = forge_via_euclid(intercept, args.t_a)
    elif kind == "time-factor":
        lo, hi = args.window if args.window else (2, m.t - 1)
        result = forge_via_time_factor(intercept, (lo, hi))
    elif kind == "inverse-id":
        if not args.kic_secret:
            raise WireFormatError("inverse-id needs --kic-secret (the KIC registration endpoint)")
        kic = Kic(load_secret(_read(args.kic_secret)), parse_enum(CidPolicy, args.cid_policy))
        t_f = args.t_f if args.t_f is not None else m.t
        result = impersonate_via_inverse_registration(intercept, kic, rng, t_f, y_r=args.y_r)
    else:
        mode = ForgeMode.WHITEBOX if kind == "inverse-ts-whitebox" else ForgeMode.LITERAL
        analysis = None
        if args.allow_secret_access:
            analysis = load_secret(_read(args.allow_secret_access))
        elif mode is ForgeMode.WHITEBOX:
            raise WireFormatError("whitebox mode needs --allow-secret-access <secret file>")
        k = args.k if args.k is not None else rng.randrange(2, m.n)
        result = forge_via_inverse_timestamp(intercept, mode, k, analysis=analysis)

    _write(args.out, encode_request(result.forged))
    print(json.dumps(result.transcript()))
    return EXIT_OK


def _cmd_run_scenario(args) -> int:
    """Handler for the 'run-scenario' subcommand."""
    if args.config:
        config = load_config(args.config)
    else:
        config = ScenarioConfig(
            seed=args.seed if args.seed is not None else 0,
            prime_bits=args.bits,
            cid_policy=parse_enum(CidPolicy, args.cid_policy),
            attack=parse_enum(AttackKind, args.type),
            trials=args.trials,
            clock=ClockSettings(mode=parse_enum(ClockMode, args.clock_mode),
                                delta_t=args.delta_t),
            workers=args.workers,
        )
    records = run_scenario(config)
    if args.out in (None, "-"):
        emit_report(records, sys.stdout, include_timings=not args.no_timings)
    else:
        with open(args.out, "w") as sink:
            emit_report(records, sink, include_timings=not args.no_timings)
    return EXIT_OK


def _cmd_demo(args) -> int:
    """Walk the n = 35 toy fixture through the scheme and all four attacks."""
    kic = kic_from_primes(5, 7, e=5, g=3)
    print(f"KIC: p={kic.p} q={kic.q} n={kic.n} e={kic.e} d={kic.d} g={kic.g}")
    victim = UserCredentials(id=2, pw=4)
    card = Kic(kic, CidPolicy.MIRROR).register(victim, requested_cid=3)
    print(f"card: id={card.id} cid={card.cid} s={card.s} h={card.h}")

    m = login_request_for_nonce(card, victim.pw, t=6, r=2)
    print(f"login (r=2, t=6): x={m.x} y={m.y}")
    decision = verify_login(m, server_now=6, delta_t=2)
    print(f"verify: {decision.reason.value}")
    intercept = intercept_channel(m, captured_at=6)

    def show(label: str, forged, now: int):
        verdict = verify_login(forged, server_now=now, delta_t=2)
        lhs = pow(forged.y, forged.e, forged.n)
        rhs = pow(forged.id, forged.cid, forged.n) * pow(forged.x, forged.t, forged.n) % forged.n
        print(f"{label}: x_f={forged.x} y_f={forged.y} t={forged.t} "
              f"Y^e={lhs} ID^CID*X^T={rhs} -> {verdict.reason.value}")

    euclid = forge_via_euclid(intercept, 7)
    print(f"euclid: u={euclid.u} v={euclid.v}")
    show("euclid", euclid.forged, 7)

    tf = forge_via_time_factor(intercept, (2, 4))
    print(f"time-factor: t_a={tf.t_a} w={tf.w}")
    show("time-factor", tf.forged, tf.t_a)

    rogue = impersonate_via_inverse_registration(
        intercept, Kic(kic, CidPolicy.MIRROR), random.Random(0), t_f=6, y_r=2)
    print(f"inverse-id: id_f={rogue.id_f} S_k={rogue.rogue_card.s} "
          f"recovered S={rogue.recovered_s} (victim S={card.s})")
    show("inverse-id", rogue.forged, 6)

    literal = forge_via_inverse_timestamp(intercept, ForgeMode.LITERAL, k=2)
    print(f"inverse-ts literal: t_f={literal.t_f} ord(id)={multiplicative_order(2, 35)} "
          f"predicted={literal.predicted_success}")
    show("inverse-ts literal", literal.forged, literal.t_f)

    m5 = login_request_for_nonce(card, victim.pw, t=5, r=2)
    whitebox = forge_via_inverse_timestamp(intercept_channel(m5, 5), ForgeMode.WHITEBOX,
                                           k=2, analysis=kic)
    print(f"inverse-ts whitebox (t=5): t_f={whitebox.t_f} lambda=12 "
          f"predicted={whitebox.predicted_success}")
    show("inverse-ts whitebox", whitebox.forged, whitebox.t_f)
    print(f"id^-1 mod n = {mod_inv(2, 35)}; equation alone for literal: "
          f"{equation_holds(literal.forged)}")
    return EXIT_OK


# ──────────────────────────────────────────────
#  Argument parser
# ──────────────────────────────────────────────

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cardauth",
        description="Smart-card password authentication scheme and forgery harness",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=DEFAULT_LOG_LEVEL, type=str.upper,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                        help=f"Logging level (default: {DEFAULT_LOG_LEVEL}, env CARDAUTH_LOG_LEVEL)")

    subparsers = parser.add_subparsers(dest="command", required=True)

    # ---- keygen ----
    p_keygen = subparsers.add_parser("keygen", help="Generate KIC key material")
    p_keygen.add_argument("--bits", type=int, default=DEFAULT_BITS,
                          help=f"Bits per prime (default: {DEFAULT_BITS})")
    p_keygen.add_argument("--seed", type=int, help="Seed for deterministic generation")
    p_keygen.add_argument("--out", default="kic",
                          help="Output prefix: <out>.public.json and <out>.secret.json")
    p_keygen.set_defaults(func=_cmd_keygen)

    # ---- register ----
    p_register = subparsers.add_parser("register", help="Issue a smart card")
    p_register.add_argument("--secret", required=True, help="KIC secret parameter file")
    p_register.add_argument("--identity", required=True)
    p_register.add_argument("--password", required=True)
    p_register.add_argument("--raw", action="store_true",
                            help="Identity and password are hex Nat values")
    p_register.add_argument("--cid-policy", default="sequential",
                            choices=["sequential", "random", "mirror"])
    p_register.add_argument("--cid", type=_nat_arg, help="CID for the mirror policy (hex)")
    p_register.add_argument("--seed", type=int)
    p_register.add_argument("--out", help="Card file (default: stdout)")
    p_register.set_defaults(func=_cmd_register)

    # ---- login ----
    p_login = subparsers.add_parser("login", help="Build a login request line")
    p_login.add_argument("--card", required=True)
    p_login.add_argument("--password", required=True)
    p_login.add_argument("--raw", action="store_true", help="Password is a hex Nat value")
    p_login.add_argument("--timestamp", type=int, help="Timestamp T (default: wall clock)")
    p_login.add_argument("--seed", type=int)
    p_login.add_argument("--out", help="Request file (default: stdout)")
    p_login.set_defaults(func=_cmd_login)

    # ---- verify ----
    p_verify = subparsers.add_parser("verify", help="Verify a login request line")
    p_verify.add_argument("--request", default="-", help="Request file (default: stdin)")
    p_verify.add_argument("--public", help="Server public parameter file")
    p_verify.add_argument("--now", type=int, help="Server receipt time T'")
    p_verify.add_argument("--delta-t", type=int, default=_env_delta_t())
    p_verify.add_argument("--clock-mode", default="realistic", choices=["abstract", "realistic"])
    p_verify.set_defaults(func=_cmd_verify)

    # ---- attack ----
    p_attack = subparsers.add_parser("attack", help="Forge a request from an intercepted one")
    p_attack.add_argument("--request", default="-", help="Intercepted request (default: stdin)")
    p_attack.add_argument("--type", required=True, choices=ATTACK_TYPES)
    p_attack.add_argument("--t-a", type=int, help="Attacker timestamp (euclid)")
    p_attack.add_argument("--window", type=int, nargs=2, metavar=("LO", "HI"),
                          help="Admissible timestamps (time-factor)")
    p_attack.add_argument("--t-f", type=int, help="Attacker timestamp (inverse-id)")
    p_attack.add_argument("--y-r", type=_nat_arg, help="Random base y (inverse-id, hex)")
    p_attack.add_argument("--k", type=_nat_arg, help="Random unit k (inverse-ts, hex)")
    p_attack.add_argument("--kic-secret",
                          help="KIC secret file backing the registration endpoint (inverse-id)")
    p_attack.add_argument("--cid-policy", default="sequential",
                          choices=["sequential", "random", "mirror"])
    p_attack.add_argument("--allow-secret-access", metavar="SECRET_FILE",
                          help="Analysis-only KIC access (required for inverse-ts-whitebox)")
    p_attack.add_argument("--seed", type=int)
    p_attack.add_argument("--out", help="Forged request file (default: stdout)")
    p_attack.set_defaults(func=_cmd_attack)

    # ---- run-scenario ----
    p_run = subparsers.add_parser("run-scenario", help="Run a seeded attack scenario")
    p_run.add_argument("--config", help="Scenario config JSON (overrides the flags below)")
    p_run.add_argument("--type", default="none", choices=["none", "tamper"] + ATTACK_TYPES)
    p_run.add_argument("--bits", type=int, default=DEFAULT_BITS)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--trials", type=int, default=1)
    p_run.add_argument("--workers", type=int, default=1)
    p_run.add_argument("--cid-policy", default="sequential",
                       choices=["sequential", "random", "mirror"])
    p_run.add_argument("--clock-mode", default="abstract", choices=["abstract", "realistic"])
    p_run.add_argument("--delta-t", type=int, default=_env_delta_t())
    p_run.add_argument("--no-timings", action="store_true",
                       help="Omit per-phase timings (byte-reproducible report)")
    p_run.add_argument("--out", help="Report file (default: stdout)")
    p_run.set_defaults(func=_cmd_run_scenario)

    # ---- demo ----
    p_demo = subparsers.add_parser("demo", help="Walk through the n=35 toy fixture")
    p_demo.set_defaults(func=_cmd_demo)

    return parser


# ──────────────────────────────────────────────
#  Entry point
# ──────────────────────────────────────────────

def main(argv: list[str] | None = None) -> int:
    try:
        parser = _build_parser()
    except ConfigError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")

    try:
        return args.func(args)
    except Infeasible as exc:
        print(f"Infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except CriticalFinding as exc:
        print(f"Critical finding: {exc} (factor {exc.factor} of n)", file=sys.stderr)
        return EXIT_INPUT
    except CorruptTrial as exc:
        print(f"Corrupt trial: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (CardAuthError, NumberTheoryError, OSError) as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return EXIT_INPUT
