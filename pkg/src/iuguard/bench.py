"""Benchmark harness: local micro timings, end-to-end comparison, load sweep.

Every timing uses ``time.perf_counter`` (monotonic). Results are written as
CSV plus a whitespace-separated ``.dat`` file for gnuplot; both start with
``#`` header lines carrying the commit, config digest, host and load model.
"""

from __future__ import annotations

import asyncio
import csv
import dataclasses
import hashlib
import os
import platform
import statistics
import subprocess
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from . import __version__, canonical
from .app import launch
from .client import IUClient
from .config import Config
from .coordinator import CBRS_HIGH_KHZ, CBRS_LOW_KHZ
from .credential import (
    CredentialAuthority,
    Registry,
    create_credential_request,
    finalize_credential,
)
from .crypto import DeterministicRng, keygen
from .presentation import AccessRequest, derive_presentation, verify_presentation
from .registry_gen import synthetic_records
from .wire.envelope import Envelope
from .wire.http import AsyncClient, TransportError
from .wire.pki import client_context

DEFAULT_USER_COUNTS = (10, 50, 100, 500, 1000, 2000, 5000)
CSV_FIELDS = ("scenario", "trials", "mean_ms", "p50_ms", "p95_ms", "payload_bytes")
SWEEP_FIELDS = ("mode", "concurrent_users", "p95_latency_ms", "throughput_rps", "completed", "error_count")
LOAD_MODEL = (
    "closed loop; one keep-alive connection per user opened before the window; no think time; "
    "IU-GUARD users take a prover slot before fetching a challenge and hold it until the reply, "
    "and latency runs from the challenge fetch to the reply; "
    "each request asks for a unique 1 kHz band for 1 s; throughput counts replies that land inside the window; "
    "requests in flight at window end are drained and checked for errors"
)


@dataclass(frozen=True)
class BenchResult:
    scenario: str
    trials: int
    mean_ms: float
    p50_ms: float
    p95_ms: float
    payload_bytes: int | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("a bench result needs at least one trial")
        if self.p50_ms > self.p95_ms:
            raise ValueError("p50 exceeds p95")

    def row(self) -> dict:
        d = dataclasses.asdict(self)
        d["payload_bytes"] = "" if self.payload_bytes is None else self.payload_bytes
        for k in ("mean_ms", "p50_ms", "p95_ms"):
            d[k] = f"{d[k]:.3f}"
        return d


@dataclass(frozen=True)
class SweepPoint:
    mode: str
    concurrent_users: int
    p95_latency_ms: float
    throughput_rps: float
    completed: int
    error_count: int
    errors: dict = field(default_factory=dict, compare=False)
    runs_rps: tuple = field(default=(), compare=False)

    @property
    def valid(self) -> bool:
        return self.error_count == 0 and self.completed > 0

    def row(self) -> dict:
        return {
            "mode": self.mode,
            "concurrent_users": self.concurrent_users,
            "p95_latency_ms": f"{self.p95_latency_ms:.3f}",
            "throughput_rps": f"{self.throughput_rps:.3f}",
            "completed": self.completed,
            "error_count": self.error_count,
        }


def percentile(samples: Sequence[float], q: float) -> float:
    """Linear interpolation between closest ranks (numpy's default)."""
    if not samples:
        raise ValueError("no samples")
    xs = sorted(samples)
    pos = (len(xs) - 1) * q
    lo = int(pos)
    hi = min(lo + 1, len(xs) - 1)
    return xs[lo] + (xs[hi] - xs[lo]) * (pos - lo)


def summarize(scenario: str, seconds: Sequence[float], payload_bytes: int | None = None) -> BenchResult:
    if not seconds:
        raise ValueError(f"{scenario}: trials must be >= 1")
    ms = [s * 1000 for s in seconds]
    return BenchResult(scenario, len(ms), statistics.fmean(ms), percentile(ms, 0.5), percentile(ms, 0.95), payload_bytes)


def _timed(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return time.perf_counter() - t0, out


# -- metadata ------------------------------------------------------------------


def commit_hash() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "--short=12", "HEAD"], cwd=Path(__file__).parent, capture_output=True, text=True, timeout=5
        )
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def host_description() -> str:
    return f"{platform.node()} {platform.system()} {platform.machine()} cpus={os.cpu_count()} python={platform.python_version()}"


def results_header(kind: str, config_digest: str = "none", extra: Iterable[str] = ()) -> list[str]:
    lines = [
        f"iuguard {__version__} bench {kind}",
        f"commit: {commit_hash()}",
        f"config_digest: {config_digest}",
        f"host: {host_description()}",
        "clock: time.perf_counter (monotonic)",
    ]
    return lines + list(extra)


def write_results(path: str | Path, header: list[str], fields: Sequence[str], rows: list[dict]) -> tuple[Path, Path]:
    """Write ``path`` (CSV) and a sibling ``.dat`` file. Returns both paths."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", newline="") as fh:
        for ln in header:
            fh.write(f"# {ln}\n")
        w = csv.DictWriter(fh, fieldnames=list(fields), extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)
    dat = p.with_suffix(".dat")
    with dat.open("w") as fh:
        for ln in header:
            fh.write(f"# {ln}\n")
        fh.write("# " + " ".join(fields) + "\n")
        for r in rows:
            fh.write(" ".join(str(r[f]).replace(" ", "_") if r[f] != "" else "NaN" for f in fields) + "\n")
    return p, dat


def read_results(path: str | Path) -> list[dict]:
    with Path(path).open() as fh:
        return list(csv.DictReader(ln for ln in fh if not ln.startswith("#")))


# -- micro -----------------------------------------------------------------------


def bench_micro(trials: int = 100, seed: bytes | None = None) -> list[BenchResult]:
    """Issue / Present / Verify computation time, no network.

    With ``seed`` every random choice comes from a deterministic stream, so
    two runs produce byte-identical artifacts (and therefore sizes).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = DeterministicRng(seed) if seed is not None else None
    kp = keygen(hashlib.sha256(b"iuguard-bench-issuer" + seed).digest() if seed is not None else os.urandom(32), 4)
    rec = synthetic_records(1, seed or os.urandom(16), CBRS_LOW_KHZ, CBRS_HIGH_KHZ)[0]
    ca = CredentialAuthority(Registry([rec]), kp)
    req = AccessRequest(3_600_000, 3_610_000, 38_900_000, -77_000_000, 1_700_000_000, 600)

    def issue():
        creq, state = create_credential_request(rec.iu_id, rec.enrollment_secret, ca.new_nonce(), kp.public, rng=rng)
        return finalize_credential(ca.issue(creq, rng), state, kp.public)

    t_issue, t_present, t_verify = [], [], []
    cred = pres = None
    for _ in range(trials):
        dt, cred = _timed(issue)
        t_issue.append(dt)
        nonce = ca.nonces.issue()
        dt, pres = _timed(derive_presentation, cred, kp.public, req, nonce, rng)
        t_present.append(dt)
        dt, verdict = _timed(verify_presentation, {kp.public.fingerprint: kp.public}, pres, req, nonce)
        if not verdict:
            raise RuntimeError(f"honest presentation rejected: {verdict.reason}")
        t_verify.append(dt)
    return [
        summarize("issue", t_issue, len(cred.serialize())),
        summarize("present", t_present, len(pres.serialize())),
        summarize("verify", t_verify, len(pres.serialize())),
    ]


# -- shared helpers for networked benches -------------------------------------------


class BandCursor:
    """Hands out unique 1 kHz bands, cycling through the managed range."""

    def __init__(self, low: int = CBRS_LOW_KHZ, high: int = CBRS_HIGH_KHZ, width: int = 1):
        self.low, self.high, self.width = low, high, width
        self._next = low

    def request(self, duration_s: int = 1) -> AccessRequest:
        lo = self._next
        self._next = lo + self.width if lo + 2 * self.width <= self.high else self.low
        return AccessRequest(lo, lo + self.width, 38_900_000, -77_000_000, int(time.time()), duration_s)


def _iu_material(cfg: Config, iu_id: str) -> tuple[bytes, str]:
    d = cfg.path.parent / "iu"
    return bytes.fromhex((d / f"{iu_id}.enroll").read_text().strip()), (d / f"{iu_id}.password").read_text().strip()


class _InProcess:
    """Launch the services for a bench run, with a throwaway records log."""

    def __init__(self, cfg: Config, roles=("ca", "scs", "iic")):
        self._tmp = tempfile.TemporaryDirectory(prefix="iuguard-bench-")
        scs = dataclasses.replace(cfg.scs, records=Path(self._tmp.name) / "records.log")
        self.cfg = dataclasses.replace(cfg, scs=scs)
        self.running = launch(self.cfg, roles, ephemeral_ports=True)

    def close(self):
        self.running.stop()
        self._tmp.cleanup()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# -- end to end ------------------------------------------------------------------


E2E_ROWS = (
    "issuance/baseline",
    "issuance/iu-guard",
    "identity-verification/baseline",
    "identity-verification/iu-guard",
    "authorization/baseline",
    "authorization/iu-guard",
)


def bench_e2e(cfg: Config, trials: int = 100, iu_id: str = "radar-01", endpoints=None) -> list[BenchResult]:
    """The six end-to-end rows, baseline vs IU-GUARD, over loopback mutual TLS.

    issuance: baseline login vs nonce + blind issuance + finalize.
    identity verification: baseline session check vs challenge + derive + verify (no allocation).
    authorization: baseline login + report vs challenge + derive + verify + allocate.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    secret, password = _iu_material(cfg, iu_id)
    bands = BandCursor()
    if endpoints is None:
        with _InProcess(cfg) as env:
            return bench_e2e(env.cfg, trials, iu_id, env.running.endpoints)

    with IUClient.from_config(cfg, endpoints) as c:
        c.obtain_credential(iu_id, secret)  # warm connections and caches
        samples: dict[str, list[float]] = {k: [] for k in E2E_ROWS}
        cred = None
        for _ in range(trials):
            dt, _ = _timed(c.login, iu_id, password)
            samples["issuance/baseline"].append(dt)
            dt, cred = _timed(c.obtain_credential, iu_id, secret)
            samples["issuance/iu-guard"].append(dt)
        session = c.login(iu_id, password)
        pres_bytes = 0
        for _ in range(trials):
            dt, _ = _timed(c.report, session, bands.request(), "verify")
            samples["identity-verification/baseline"].append(dt)
            dt, out = _timed(c.request_access, cred, bands.request(), "verify")
            samples["identity-verification/iu-guard"].append(dt)
            pres_bytes = out.presentation_bytes
        for _ in range(trials):
            t0 = time.perf_counter()
            c.report(c.login(iu_id, password), bands.request())
            samples["authorization/baseline"].append(time.perf_counter() - t0)
            dt, _ = _timed(c.request_access, cred, bands.request())
            samples["authorization/iu-guard"].append(dt)
    sizes = {"issuance/iu-guard": len(cred.serialize()), "identity-verification/iu-guard": pres_bytes, "authorization/iu-guard": pres_bytes}
    return [summarize(k, samples[k], sizes.get(k)) for k in E2E_ROWS]


# -- load ------------------------------------------------------------------------


@dataclass
class _Collector:
    window_start: float = 0.0
    window_end: float = float("inf")
    latencies: list[float] = field(default_factory=list)
    errors: dict = field(default_factory=dict)

    def ok(self, t0: float, t1: float) -> None:
        if self.window_start <= t1 <= self.window_end:
            self.latencies.append(t1 - t0)

    def error(self, code: str) -> None:
        self.errors[code] = self.errors.get(code, 0) + 1


async def _connect_all(clients: list[AsyncClient], parallel: int = 128) -> None:
    sem = asyncio.Semaphore(parallel)

    async def one(ac):
        async with sem:
            await ac.connect()

    await asyncio.gather(*(one(ac) for ac in clients))


async def _run_point(
    cfg: Config,
    endpoints,
    users: int,
    baseline: bool,
    creds,
    iu_id: str,
    password: str,
    window_s: float,
    warmup_s: float,
    prover_slots: int,
    bands: BandCursor,
) -> SweepPoint:
    loop = asyncio.get_running_loop()
    ctx = client_context(cfg.client.identity, cfg.root_cert)
    target = endpoints["iic" if baseline else "scs"]
    clients = [AsyncClient(target, ctx, timeout=300) for _ in range(users)]
    col = _Collector()
    stop = asyncio.Event()
    slots = asyncio.Semaphore(prover_slots)
    prover = ThreadPoolExecutor(max_workers=prover_slots, thread_name_prefix="iuguard-prover")
    issuers = {}
    if not baseline:
        from .issuer import load_issuers

        issuers = load_issuers(cfg.client.issuers)

    sessions: list[str] = []
    if baseline:
        login_client = AsyncClient(endpoints["iic"], ctx)
        for _ in range(users):
            r = await login_client.call("POST", "/v1/login", Envelope("login", {"password": password, "username": iu_id}))
            sessions.append(r.payload["session"])
        await login_client.close()
    await _connect_all(clients)

    async def baseline_user(i: int, ac: AsyncClient):
        while not stop.is_set():
            req = bands.request()
            t0 = time.perf_counter()
            env = Envelope("report", {"mode": "authorize", "request": req.to_payload(), "session": sessions[i]})
            try:
                reply = await ac.call("POST", "/v1/report", env)
            except TransportError:
                col.error("TRANSPORT")
                return
            if reply.type == "error":
                col.error(reply.payload.get("code", "INTERNAL"))
            else:
                col.ok(t0, time.perf_counter())

    async def iu_user(i: int, ac: AsyncClient):
        cred = creds[i % len(creds)]
        pk = issuers[cred.issuer_fp]
        while not stop.is_set():
            async with slots:
                if stop.is_set():
                    return  # window over before this request put anything on the wire
                t0 = time.perf_counter()
                req = bands.request()
                try:
                    ch = await ac.call("GET", "/v1/challenge")
                    if ch.type == "error":
                        col.error(ch.payload.get("code", "INTERNAL"))
                        continue
                    nonce = canonical.b64d(ch.payload["nonce"])
                    pres = await loop.run_in_executor(prover, lambda: derive_presentation(cred, pk, req, nonce).serialize())
                    payload = {"mode": "authorize", "nonce": ch.payload["nonce"], "presentation": canonical.b64e(pres), "request": req.to_payload()}
                    reply = await ac.call("POST", "/v1/access", Envelope("access.request", payload))
                except TransportError:
                    col.error("TRANSPORT")
                    return
            if reply.type == "error":
                col.error(reply.payload.get("code", "INTERNAL"))
            else:
                col.ok(t0, time.perf_counter())

    user = baseline_user if baseline else iu_user
    now = time.perf_counter()
    col.window_start = now + warmup_s
    col.window_end = col.window_start + window_s
    tasks = [asyncio.create_task(user(i, ac)) for i, ac in enumerate(clients)]
    await asyncio.sleep(warmup_s + window_s)
    stop.set()
    await asyncio.gather(*tasks)
    await asyncio.gather(*(ac.close() for ac in clients))
    prover.shutdown(wait=True)
    lat = col.latencies
    return SweepPoint(
        "baseline" if baseline else "iu-guard",
        users,
        percentile(lat, 0.95) * 1000 if lat else float("nan"),
        len(lat) / window_s,
        len(lat),
        sum(col.errors.values()),
        dict(col.errors),
        (len(lat) / window_s,),
    )


def _combine(runs: list[SweepPoint]) -> SweepPoint:
    """Median throughput and p95 over repeated runs of one point; errors add up."""
    errors: dict = {}
    for r in runs:
        for k, v in r.errors.items():
            errors[k] = errors.get(k, 0) + v
    lat = [r.p95_latency_ms for r in runs if r.completed]
    return SweepPoint(
        runs[0].mode,
        runs[0].concurrent_users,
        statistics.median(lat) if lat else float("nan"),
        statistics.median(r.throughput_rps for r in runs),
        sum(r.completed for r in runs),
        sum(r.error_count for r in runs),
        errors,
        tuple(r.throughput_rps for r in runs),
    )


def bench_load(
    cfg: Config,
    user_counts: Sequence[int] = DEFAULT_USER_COUNTS,
    *,
    baseline: bool = False,
    max_users: int | None = None,
    window_s: float = 10.0,
    warmup_s: float = 1.0,
    repeats: int = 1,
    prover_slots: int | None = None,
    iu_id: str = "radar-01",
    endpoints=None,
    progress=None,
) -> list[SweepPoint]:
    """Closed-loop concurrency sweep. See ``LOAD_MODEL`` for the exact rules.

    A short throwaway point runs first so connection setup and allocator
    growth do not land in the first measured point. With ``repeats`` > 1
    each point is run that many times and the median is reported.
    """
    counts = [n for n in user_counts if max_users is None or n <= max_users]
    if not counts:
        raise ValueError("no user counts left under --max-users")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if endpoints is None:
        with _InProcess(cfg) as env:
            return bench_load(
                env.cfg, counts, baseline=baseline, window_s=window_s, warmup_s=warmup_s, repeats=repeats,
                prover_slots=prover_slots, iu_id=iu_id, endpoints=env.running.endpoints, progress=progress,
            )
    secret, password = _iu_material(cfg, iu_id)
    slots = prover_slots or (os.cpu_count() or 1)
    creds = []
    if not baseline:
        with IUClient.from_config(cfg, endpoints) as c:
            creds = [c.obtain_credential(iu_id, secret) for _ in range(min(max(counts), 100))]
    bands = BandCursor()

    def run(n, window):
        return asyncio.run(_run_point(cfg, endpoints, n, baseline, creds, iu_id, password, window, warmup_s, slots, bands))

    run(min(counts), 2.0)
    points = []
    for n in counts:
        pt = _combine([run(n, window_s) for _ in range(repeats)])
        points.append(pt)
        if progress:
            progress(pt)
    return points


def throughput_gaps(baseline: Sequence[SweepPoint], iuguard: Sequence[SweepPoint]) -> list[tuple[int, float]]:
    """Per common user count, baseline throughput minus IU-GUARD throughput (requests/s)."""
    b = {p.concurrent_users: p.throughput_rps for p in baseline}
    return [(p.concurrent_users, b[p.concurrent_users] - p.throughput_rps) for p in iuguard if p.concurrent_users in b]
