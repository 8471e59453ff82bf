"""``iuguard`` command-line tool."""

from __future__ import annotations

import argparse
import logging
import signal
import sys
import threading
import time
from decimal import Decimal, InvalidOperation
from pathlib import Path

from . import __version__, canonical
from .config import Config, init_deployment, load_config
from .presentation import AccessRequest, OutOfAuthorizationError
from .wire.envelope import ServiceError
from .wire.http import TransportError

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_TRANSPORT = 4
EXIT_OUT_OF_AUTHORIZATION = 5
EXIT_AUTH = 6
EXIT_PROOF = 7
EXIT_NONCE = 8
EXIT_ALLOCATION = 9
EXIT_RATE_LIMITED = 10
EXIT_BAD_REQUEST = 11
EXIT_SERVER = 12

_CODE_CLASSES = {
    EXIT_AUTH: ("AUTH_FAILED", "LOGIN_FAILED", "SESSION_EXPIRED", "NOT_REGISTERED", "FORBIDDEN"),
    EXIT_PROOF: ("CONTEXT_MISMATCH", "SIGNATURE_PROOF_INVALID", "RANGE_LOW_INVALID", "RANGE_HIGH_INVALID", "PROOF_INVALID", "SCHEMA_ERROR"),
    EXIT_NONCE: ("NONCE_UNKNOWN", "NONCE_EXPIRED", "NONCE_REUSED"),
    EXIT_ALLOCATION: ("BAND_CONFLICT_IU", "BAND_OUTSIDE_MANAGED_RANGE"),
    EXIT_RATE_LIMITED: ("RATE_LIMITED",),
    EXIT_BAD_REQUEST: (
        "BAD_REQUEST", "MALFORMED_ENVELOPE", "UNSUPPORTED_VERSION", "PAYLOAD_TOO_LARGE",
        "NOT_FOUND", "METHOD_NOT_ALLOWED", "GRANT_UNKNOWN",
    ),
}
EXIT_FOR_CODE = {code: status for status, codes in _CODE_CLASSES.items() for code in codes}


def exit_code_for(code: str) -> int:
    return EXIT_FOR_CODE.get(code, EXIT_SERVER)


class ConfigProblem(Exception):
    pass


# -- argument helpers -----------------------------------------------------------------


def parse_band(text: str) -> tuple[int, int]:
    lo, sep, hi = text.partition(":")
    try:
        if not sep:
            raise ValueError
        return int(lo), int(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"band must be LOW_KHZ:HIGH_KHZ, got {text!r}") from None


def parse_microdeg(text: str) -> int:
    """Decimal degrees to integer microdegrees, exactly (no float rounding)."""
    try:
        return int((Decimal(text) * 1_000_000).to_integral_value())
    except InvalidOperation:
        raise argparse.ArgumentTypeError(f"not a coordinate: {text!r}") from None


def parse_start(text: str) -> int:
    if text == "now":
        return int(time.time())
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("start must be unix seconds or 'now'") from None


def parse_counts(text: str) -> list[int]:
    try:
        counts = [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError("expected a comma-separated list of integers") from None
    if not counts or min(counts) < 1:
        raise argparse.ArgumentTypeError("user counts must be positive")
    return counts


def _config(args) -> Config:
    try:
        return load_config(args.config)
    except (FileNotFoundError, ValueError, KeyError) as exc:
        raise ConfigProblem(f"cannot load config {args.config}: {exc}") from None


def _access_request(args) -> AccessRequest:
    lo, hi = args.band
    try:
        return AccessRequest(lo, hi, args.lat, args.lon, args.start, args.dur)
    except ValueError as exc:
        raise ConfigProblem(f"invalid access request: {exc}") from None


def _client(cfg: Config):
    from .client import IUClient

    return IUClient.from_config(cfg)


def _read_secret_file(path: Path) -> str:
    try:
        return path.read_text().strip()
    except OSError as exc:
        raise ConfigProblem(f"cannot read {path}: {exc.strerror}") from None


# -- verbs ------------------------------------------------------------------------


def cmd_init(args) -> int:
    seed = bytes.fromhex(args.seed) if args.seed else None
    ports = tuple(int(p) for p in args.ports.split(","))
    if len(ports) != 3:
        raise ConfigProblem("--ports needs three values: ca,scs,iic")
    path = init_deployment(args.directory, registry_count=args.registry_count, seed=seed, ports=ports, iterations=args.iterations)
    print(f"wrote {path}")
    print(f"enrollment secrets and demo passwords are under {Path(args.directory) / 'iu'}")
    return EXIT_OK


def cmd_serve(args) -> int:
    from .app import launch

    cfg = _config(args)
    roles = ("ca", "scs", "iic") if args.role == "all" else (args.role,)
    done = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: done.set())
    running = launch(cfg, roles)
    for name, ep in running.endpoints.items():
        print(f"{name} listening on {ep.host}:{ep.port}", flush=True)
    done.wait()
    running.stop()
    return EXIT_OK


def cmd_issue(args) -> int:
    cfg = _config(args)
    enroll = Path(args.enroll) if args.enroll else cfg.path.parent / "iu" / f"{args.iu}.enroll"
    try:
        secret = bytes.fromhex(_read_secret_file(enroll))
    except ValueError:
        raise ConfigProblem(f"{enroll} does not hold a hex enrollment secret") from None
    with _client(cfg) as c:
        cred = c.obtain_credential(args.iu, secret)
    out = Path(args.out) if args.out else cfg.client.wallet / f"{args.iu}.cred"
    out.parent.mkdir(parents=True, exist_ok=True)
    cred.save(out)
    print(f"credential for {cred.iu_id} written to {out}")
    print(f"authorized band: {cred.f_low_khz}-{cred.f_high_khz} kHz")
    return EXIT_OK


def _load_credential(cfg: Config, args):
    from .credential import Credential
    from .crypto import EncodingError

    path = Path(args.cred) if args.cred else cfg.client.wallet / f"{args.iu}.cred"
    try:
        return Credential.load(path)
    except FileNotFoundError:
        raise ConfigProblem(f"no credential at {path}; run `iuguard issue --iu ...` first") from None
    except EncodingError as exc:
        raise ConfigProblem(f"{path}: {exc}") from None


def _print_outcome(payload: dict, mode: str) -> None:
    if mode == "verify":
        print("verified")
        return
    g = payload["grant"]
    print(f"grant {g['grant_id']}")
    print(f"  band {g['granted_band'][0]}-{g['granted_band'][1]} kHz, expires {g['expiry']}")
    for move in payload.get("preemption", []):
        print(f"  preempted: {canonical.dumps(move).decode()}")


def cmd_request_access(args) -> int:
    cfg = _config(args)
    req = _access_request(args)
    cred = _load_credential(cfg, args)
    with _client(cfg) as c:
        out = c.request_access(cred, req, args.mode)
    _print_outcome(out.payload, args.mode)
    return EXIT_OK


def cmd_baseline_login(args) -> int:
    cfg = _config(args)
    pw_file = Path(args.password_file) if args.password_file else cfg.path.parent / "iu" / f"{args.user}.password"
    with _client(cfg) as c:
        token = c.login(args.user, _read_secret_file(pw_file))
    out = Path(args.out) if args.out else cfg.client.wallet / f"{args.user}.session"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(canonical.b64e(token) + "\n")
    out.chmod(0o600)
    print(f"session written to {out}")
    return EXIT_OK


def cmd_baseline_report(args) -> int:
    cfg = _config(args)
    req = _access_request(args)
    path = Path(args.session) if args.session else cfg.client.wallet / f"{args.user}.session"
    try:
        token = canonical.b64d(_read_secret_file(path))
    except ValueError:
        raise ConfigProblem(f"{path} does not hold a session token") from None
    with _client(cfg) as c:
        out = c.report(token, req, args.mode)
    _print_outcome(out.payload, args.mode)
    return EXIT_OK


def _default_out(kind: str) -> Path:
    return Path("results") / f"bench-{kind}.csv"


def cmd_bench(args) -> int:
    from . import bench

    out = Path(args.out) if args.out else _default_out(args.kind)
    if args.kind == "micro":
        seed = None
        if args.seed:
            seed = bytes.fromhex(args.seed)
        try:
            rows = bench.bench_micro(args.trials, seed)
        except RuntimeError as exc:
            raise ConfigProblem(str(exc)) from None
        header = bench.results_header("micro", extra=[f"trials: {args.trials}", f"seed: {'yes' if seed else 'no'}"])
        _table(rows)
        paths = bench.write_results(out, header, bench.CSV_FIELDS, [r.row() for r in rows])
    elif args.kind == "e2e":
        cfg = _config(args)
        rows = bench.bench_e2e(cfg, args.trials, args.iu)
        header = bench.results_header("e2e", cfg.digest(), [f"trials: {args.trials}", "transport: loopback mutual TLS 1.3"])
        _table(rows)
        paths = bench.write_results(out, header, bench.CSV_FIELDS, [r.row() for r in rows])
    else:
        cfg = _config(args)
        modes = [True, False] if args.compare else [args.baseline]
        points = []
        for base in modes:
            points += bench.bench_load(
                cfg, args.users, baseline=base, max_users=args.max_users, window_s=args.window,
                repeats=args.repeats, iu_id=args.iu, progress=_print_point,
            )
        extra = [
            f"load_model: {bench.LOAD_MODEL}",
            f"window_s: {args.window}",
            f"repeats: {args.repeats}",
            f"max_users: {args.max_users or 'none'}",
        ]
        header = bench.results_header("load", cfg.digest(), extra)
        paths = bench.write_results(out, header, bench.SWEEP_FIELDS, [p.row() for p in points])
        bad = [p for p in points if not p.valid]
        if args.compare:
            for n, gap in bench.throughput_gaps([p for p in points if p.mode == "baseline"], [p for p in points if p.mode == "iu-guard"]):
                print(f"gap at {n} users: {gap:.1f} req/s")
        if bad:
            for p in bad:
                print(f"invalid point: {p.mode} {p.concurrent_users} users, errors {p.errors}", file=sys.stderr)
            print(f"results written to {paths[0]} and {paths[1]}")
            return EXIT_SERVER
    print(f"results written to {paths[0]} and {paths[1]}")
    return EXIT_OK


def _table(rows) -> None:
    print(f"{'scenario':34} {'trials':>6} {'mean_ms':>9} {'p50_ms':>9} {'p95_ms':>9} {'bytes':>7}")
    for r in rows:
        size = "" if r.payload_bytes is None else r.payload_bytes
        print(f"{r.scenario:34} {r.trials:6d} {r.mean_ms:9.2f} {r.p50_ms:9.2f} {r.p95_ms:9.2f} {size!s:>7}")


def _print_point(p) -> None:
    print(
        f"{p.mode:9} users={p.concurrent_users:5d} p95={p.p95_latency_ms:9.1f} ms "
        f"throughput={p.throughput_rps:8.2f} req/s errors={p.error_count}",
        flush=True,
    )


# -- parser -----------------------------------------------------------------------


def _add_request_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--band", type=parse_band, required=True, help="requested band LOW_KHZ:HIGH_KHZ")
    p.add_argument("--lat", type=parse_microdeg, required=True, help="latitude, decimal degrees")
    p.add_argument("--lon", type=parse_microdeg, required=True, help="longitude, decimal degrees")
    p.add_argument("--start", type=parse_start, default="now", help="start time, unix seconds or 'now' (default)")
    p.add_argument("--dur", type=int, required=True, help="duration in seconds")
    p.add_argument("--mode", choices=("authorize", "verify"), default="authorize", help="verify checks the proof and allocates nothing")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="iuguard", description="Anonymous incumbent access to a spectrum coordinator.")
    ap.add_argument("--version", action="version", version=f"iuguard {__version__}")
    ap.add_argument("-c", "--config", default="iuguard.ini", help="config file (default: ./iuguard.ini)")
    ap.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = ap.add_subparsers(dest="verb", required=True, metavar="VERB")

    p = sub.add_parser("init", help="generate PKI, issuer key, registry, accounts and a config")
    p.add_argument("directory")
    p.add_argument("--registry-count", type=int, default=3)
    p.add_argument("--seed", help="hex seed for the synthetic registry")
    p.add_argument("--ports", default="8441,8442,8443", help="ca,scs,iic ports")
    p.add_argument("--iterations", type=int, default=10_000, help="PBKDF2 iterations for baseline passwords")
    p.set_defaults(fn=cmd_init)

    p = sub.add_parser("serve", help="run services until interrupted")
    p.add_argument("role", choices=("ca", "scs", "iic", "all"))
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("issue", help="obtain a credential from the CA")
    p.add_argument("--iu", required=True, help="registered IU id")
    p.add_argument("--enroll", help="enrollment secret file (default: <config dir>/iu/<id>.enroll)")
    p.add_argument("--out", help="credential path (default: <wallet>/<id>.cred)")
    p.set_defaults(fn=cmd_issue)

    p = sub.add_parser("request-access", help="prove authorization anonymously and request a grant")
    who = p.add_mutually_exclusive_group(required=True)
    who.add_argument("--iu", help="use <wallet>/<id>.cred")
    who.add_argument("--cred", help="credential file")
    _add_request_args(p)
    p.set_defaults(fn=cmd_request_access)

    p = sub.add_parser("baseline", help="account-password baseline through the IIC")
    bsub = p.add_subparsers(dest="action", required=True, metavar="ACTION")
    q = bsub.add_parser("login", help="log in and store a session token")
    q.add_argument("--user", required=True)
    q.add_argument("--password-file", help="default: <config dir>/iu/<user>.password")
    q.add_argument("--out", help="session path (default: <wallet>/<user>.session)")
    q.set_defaults(fn=cmd_baseline_login)
    q = bsub.add_parser("report", help="report an operation through the IIC")
    who = q.add_mutually_exclusive_group(required=True)
    who.add_argument("--user", help="use <wallet>/<user>.session")
    who.add_argument("--session", help="session token file")
    _add_request_args(q)
    q.set_defaults(fn=cmd_baseline_report)

    p = sub.add_parser("bench", help="benchmarks; results go to CSV plus a gnuplot .dat file")
    bsub = p.add_subparsers(dest="kind", required=True, metavar="KIND")
    q = bsub.add_parser("micro", help="Issue / Present / Verify computation time")
    q.add_argument("--trials", type=int, default=100)
    q.add_argument("--seed", help="hex seed; needs IUGUARD_ALLOW_DETERMINISTIC_RNG=1")
    q.add_argument("--out")
    q = bsub.add_parser("e2e", help="baseline vs IU-GUARD end-to-end latency (six rows)")
    q.add_argument("--trials", type=int, default=100)
    q.add_argument("--iu", default="radar-01")
    q.add_argument("--out")
    q = bsub.add_parser("load", help="closed-loop concurrency sweep")
    q.add_argument("--users", type=parse_counts, default=[10, 50, 100, 500, 1000, 2000, 5000])
    q.add_argument("--max-users", type=int, help="skip points above this many users")
    q.add_argument("--window", type=float, default=10.0, help="measurement window per point, seconds")
    q.add_argument("--repeats", type=int, default=1, help="runs per point; the median is reported")
    q.add_argument("--iu", default="radar-01")
    mode = q.add_mutually_exclusive_group()
    mode.add_argument("--baseline", action="store_true", help="sweep the account-password path instead")
    mode.add_argument("--compare", action="store_true", help="sweep both paths and print the throughput gap")
    q.add_argument("--out")
    for q in bsub.choices.values():
        q.set_defaults(fn=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    if getattr(args, "trials", 1) < 1:
        print("error: --trials must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.fn(args)
    except OutOfAuthorizationError as exc:
        print(f"error: OUT_OF_AUTHORIZATION ({exc}); nothing was sent", file=sys.stderr)
        return EXIT_OUT_OF_AUTHORIZATION
    except ServiceError as exc:
        detail = f" ({exc.message})" if exc.message else ""
        print(f"error: {exc.code}{detail}", file=sys.stderr)
        return exit_code_for(exc.code)
    except TransportError as exc:
        print(f"error: transport failure: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except ConfigProblem as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
