"""Spectrum coordination: challenges, authorization, tiered allocation, records.

The managed band is split into fixed-width channels. Commercial users (PAL,
GAA) occupy whole channels. Incumbent grants are arbitrary half-open
intervals ``[f_low, f_high)`` that mark every channel they touch; when a
grant lands, PAL/GAA occupants of those channels are moved to the
lowest-index free channel (PAL first) or evicted.

All mutations go through :class:`Coordinator` under a single lock. Proof
verification happens outside the lock.
"""

from __future__ import annotations

import bisect
import enum
import logging
import secrets
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

from .crypto import PublicKey
from .nonces import Nonce, NonceError, NonceStore
from .presentation import AccessRequest, Presentation, verify_presentation

log = logging.getLogger(__name__)

RECORDS_HEADER = "iuguard-records v1"
RECORD_FIELDS = (
    "f_low_khz",
    "f_high_khz",
    "lat_microdeg",
    "lon_microdeg",
    "start_unix_s",
    "duration_s",
    "granted_at_unix_s",
)

CBRS_LOW_KHZ = 3_550_000
CBRS_HIGH_KHZ = 3_700_000
CHANNEL_WIDTH_KHZ = 10_000


class Tier(str, enum.Enum):
    IU = "IU"
    PAL = "PAL"
    GAA = "GAA"


class DenyReason(str, enum.Enum):
    CONTEXT_MISMATCH = "CONTEXT_MISMATCH"
    SIGNATURE_PROOF_INVALID = "SIGNATURE_PROOF_INVALID"
    RANGE_LOW_INVALID = "RANGE_LOW_INVALID"
    RANGE_HIGH_INVALID = "RANGE_HIGH_INVALID"
    NONCE_UNKNOWN = "NONCE_UNKNOWN"
    NONCE_EXPIRED = "NONCE_EXPIRED"
    NONCE_REUSED = "NONCE_REUSED"
    BAND_OUTSIDE_MANAGED_RANGE = "BAND_OUTSIDE_MANAGED_RANGE"
    BAND_CONFLICT_IU = "BAND_CONFLICT_IU"
    RATE_LIMITED = "RATE_LIMITED"


@dataclass(frozen=True)
class Occupant:
    tier: Tier
    ref: str


@dataclass
class ChannelEntry:
    channel_id: int
    f_low_khz: int
    f_high_khz: int
    occupant: Occupant | None = None
    since: float = 0.0

    def overlaps(self, lo: int, hi: int) -> bool:
        return self.f_low_khz < hi and lo < self.f_high_khz


@dataclass(frozen=True)
class Grant:
    grant_id: bytes
    f_low_khz: int
    f_high_khz: int
    lat_microdeg: int
    lon_microdeg: int
    start_unix_s: int
    duration_s: int
    expiry: float

    @property
    def granted_band(self) -> tuple[int, int]:
        return self.f_low_khz, self.f_high_khz

    def to_payload(self) -> dict:
        return {
            "grant_id": self.grant_id.hex(),
            "granted_band": [self.f_low_khz, self.f_high_khz],
            "location": {"lat_microdeg": self.lat_microdeg, "lon_microdeg": self.lon_microdeg},
            "time_window": {"start_unix_s": self.start_unix_s, "duration_s": self.duration_s},
            "expiry": self.expiry,
        }


@dataclass(frozen=True)
class MinimalRecord:
    f_low_khz: int
    f_high_khz: int
    lat_microdeg: int
    lon_microdeg: int
    start_unix_s: int
    duration_s: int
    granted_at_unix_s: int

    def to_line(self) -> str:
        return "\t".join(str(getattr(self, f)) for f in RECORD_FIELDS)

    @classmethod
    def from_line(cls, line: str) -> "MinimalRecord":
        parts = line.rstrip("\n").split("\t")
        if len(parts) != len(RECORD_FIELDS):
            raise ValueError(f"expected {len(RECORD_FIELDS)} fields, got {len(parts)}")
        return cls(*(int(p) for p in parts))


@dataclass(frozen=True)
class Reassignment:
    channel_id: int
    displaced: Tier
    occupant_ref: str
    reassigned_to: int | None  # None means evicted


@dataclass(frozen=True)
class PreemptionReport:
    moves: tuple[Reassignment, ...] = ()

    def to_payload(self) -> list:
        return [
            {
                "channel_id": m.channel_id,
                "displaced_tier": m.displaced.value,
                "reassigned_to": "evicted" if m.reassigned_to is None else m.reassigned_to,
            }
            for m in self.moves
        ]


@dataclass(frozen=True)
class Denied:
    reason: DenyReason

    def __bool__(self) -> bool:
        return False


# -- spectrum database ---------------------------------------------------------


@dataclass
class SpectrumDatabase:
    channels: list[ChannelEntry]
    grants: dict[bytes, Grant] = field(default_factory=dict)
    # channel_id -> ids of IU grants touching it; derived, rebuilt on demand
    _by_channel: dict[int, set[bytes]] = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def channelize(cls, low_khz: int = CBRS_LOW_KHZ, high_khz: int = CBRS_HIGH_KHZ, width_khz: int = CHANNEL_WIDTH_KHZ):
        if width_khz <= 0 or (high_khz - low_khz) % width_khz or high_khz <= low_khz:
            raise ValueError("managed band must divide evenly into channels")
        n = (high_khz - low_khz) // width_khz
        return cls([ChannelEntry(i, low_khz + i * width_khz, low_khz + (i + 1) * width_khz) for i in range(n)])

    def __post_init__(self):
        self._lows = [c.f_low_khz for c in self.channels]
        for g in self.grants.values():
            for c in self.overlapping(g.f_low_khz, g.f_high_khz):
                self._by_channel.setdefault(c.channel_id, set()).add(g.grant_id)

    @property
    def low_khz(self) -> int:
        return self.channels[0].f_low_khz

    @property
    def high_khz(self) -> int:
        return self.channels[-1].f_high_khz

    def in_range(self, lo: int, hi: int) -> bool:
        return self.low_khz <= lo < hi <= self.high_khz

    def overlapping(self, lo: int, hi: int) -> list[ChannelEntry]:
        first = max(bisect.bisect_right(self._lows, lo) - 1, 0)
        last = bisect.bisect_left(self._lows, hi)
        return [c for c in self.channels[first:last] if c.overlaps(lo, hi)]

    def iu_grants_overlapping(self, lo: int, hi: int) -> list[Grant]:
        ids = set()
        for c in self.overlapping(lo, hi):
            ids |= self._by_channel.get(c.channel_id, set())
        hits = (self.grants[i] for i in ids)
        return [g for g in hits if g.f_low_khz < hi and lo < g.f_high_khz]

    def is_iu_protected(self, ch: ChannelEntry) -> bool:
        return bool(self._by_channel.get(ch.channel_id))

    def add_grant(self, grant: Grant, now: float) -> None:
        self.grants[grant.grant_id] = grant
        for c in self.overlapping(grant.f_low_khz, grant.f_high_khz):
            ids = self._by_channel.setdefault(c.channel_id, set())
            ids.add(grant.grant_id)
            c.occupant = Occupant(Tier.IU, _iu_ref(ids))
            c.since = now

    def remove_grant(self, grant_id: bytes) -> Grant | None:
        grant = self.grants.pop(grant_id, None)
        if grant is None:
            return None
        for c in self.overlapping(grant.f_low_khz, grant.f_high_khz):
            ids = self._by_channel.get(c.channel_id, set())
            ids.discard(grant_id)
            if ids:
                c.occupant = Occupant(Tier.IU, _iu_ref(ids))
            else:
                self._by_channel.pop(c.channel_id, None)
                c.occupant = None
        return grant

    def assign_commercial(self, channel_id: int, tier: Tier, ref: str, now: float = 0.0) -> bool:
        """Place a PAL/GAA user on a channel. Refuses occupied or IU-protected channels."""
        if tier is Tier.IU:
            raise ValueError("IU occupancy comes only from grants")
        ch = self.channels[channel_id]
        if ch.occupant is not None or self.is_iu_protected(ch):
            return False
        ch.occupant = Occupant(tier, ref)
        ch.since = now
        return True

    def release_commercial(self, channel_id: int) -> None:
        ch = self.channels[channel_id]
        if ch.occupant is not None and ch.occupant.tier is not Tier.IU:
            ch.occupant = None

    def snapshot(self):
        return (
            tuple((c.channel_id, c.f_low_khz, c.f_high_khz, c.occupant, c.since) for c in self.channels),
            tuple(sorted(self.grants.items())),
        )

    def check_invariants(self) -> None:
        """Brute-force audit that ignores the channel index."""
        prev_hi = self.low_khz
        for c in self.channels:
            assert c.f_low_khz == prev_hi and c.f_low_khz < c.f_high_khz, "channels must partition the band"
            prev_hi = c.f_high_khz
            protected = any(g.f_low_khz < c.f_high_khz and c.f_low_khz < g.f_high_khz for g in self.grants.values())
            assert protected == self.is_iu_protected(c), f"stale channel index on channel {c.channel_id}"
            if c.occupant is not None and c.occupant.tier is not Tier.IU:
                assert not protected, f"{c.occupant.tier.value} occupant overlaps an IU grant on channel {c.channel_id}"
            if c.occupant is not None and c.occupant.tier is Tier.IU:
                assert protected, f"stale IU marker on channel {c.channel_id}"
            if protected:
                assert c.occupant is not None and c.occupant.tier is Tier.IU
        gs = sorted(self.grants.values(), key=lambda g: g.f_low_khz)
        for a, b in zip(gs, gs[1:]):
            assert a.f_high_khz <= b.f_low_khz, "overlapping IU grants"


def _iu_ref(ids: set[bytes]) -> str:
    return f"iu-grants:{len(ids)}" if len(ids) > 8 else ",".join(sorted(i.hex() for i in ids))


def plan_preemption(band: tuple[int, int], db: SpectrumDatabase) -> PreemptionReport:
    """Decide where displaced PAL/GAA users go. Pure: ``db`` is not modified."""
    lo, hi = band
    hit = [c for c in db.channels if c.overlaps(lo, hi) and c.occupant is not None and c.occupant.tier is not Tier.IU]
    free = [
        c.channel_id
        for c in db.channels
        if c.occupant is None and not c.overlaps(lo, hi) and not db.is_iu_protected(c)
    ]
    width = {c.channel_id: c.f_high_khz - c.f_low_khz for c in db.channels}
    moves = []
    for tier in (Tier.PAL, Tier.GAA):
        for c in hit:
            if c.occupant.tier is not tier:
                continue
            dest = next((f for f in free if width[f] == width[c.channel_id]), None)
            if dest is not None:
                free.remove(dest)
            moves.append(Reassignment(c.channel_id, tier, c.occupant.ref, dest))
    return PreemptionReport(tuple(moves))


def preempt_overlapping(band: tuple[int, int], db: SpectrumDatabase, now: float = 0.0) -> PreemptionReport:
    """Clear PAL/GAA users out of ``band`` in place and report what moved."""
    report = plan_preemption(band, db)
    for m in report.moves:
        src = db.channels[m.channel_id]
        occ = src.occupant
        src.occupant = None
        if m.reassigned_to is not None:
            dst = db.channels[m.reassigned_to]
            dst.occupant = occ
            dst.since = now
    return report


# -- rate limiting ---------------------------------------------------------------


class TokenBucket:
    def __init__(self, rate_per_s: float, burst: float, clock: Callable[[], float] = time.monotonic):
        self.rate = rate_per_s
        self.burst = burst
        self._clock = clock
        self._state: dict[str, tuple[float, float]] = {}
        self._lock = threading.Lock()

    def allow(self, source: str) -> bool:
        if self.rate <= 0:
            return True
        now = self._clock()
        with self._lock:
            tokens, last = self._state.get(source, (self.burst, now))
            tokens = min(self.burst, tokens + (now - last) * self.rate)
            if tokens < 1:
                self._state[source] = (tokens, now)
                return False
            self._state[source] = (tokens - 1, now)
            return True


# -- coordinator -------------------------------------------------------------------


class RateLimitedError(Exception):
    code = DenyReason.RATE_LIMITED.value


class Coordinator:
    """The SCS: challenges, presentation checks, allocation, minimal records."""

    def __init__(
        self,
        issuer_keys: Mapping[bytes, PublicKey] | PublicKey,
        db: SpectrumDatabase | None = None,
        *,
        records_path: str | Path | None = None,
        nonce_ttl_s: float = 60.0,
        max_grant_s: int = 24 * 3600,
        rate_per_s: float = 0.0,
        rate_burst: float = 100.0,
        clock: Callable[[], float] = time.time,
    ):
        if isinstance(issuer_keys, PublicKey):
            issuer_keys = {issuer_keys.fingerprint: issuer_keys}
        self.issuer_keys = dict(issuer_keys)
        self.db = db or SpectrumDatabase.channelize()
        self.clock = clock
        self.nonces = NonceStore(nonce_ttl_s, clock)
        self.max_grant_s = max_grant_s
        self.limiter = TokenBucket(rate_per_s, rate_burst)
        self._lock = threading.RLock()
        self._records: list[MinimalRecord] = []
        self.records_path = Path(records_path) if records_path else None
        if self.records_path is not None:
            self._open_log()

    def _open_log(self) -> None:
        p = self.records_path
        if p.exists() and p.stat().st_size:
            lines = p.read_text(encoding="utf-8").splitlines()
            if lines[0] != RECORDS_HEADER:
                raise ValueError(f"{p}: unsupported record log header {lines[0]!r}")
            self._records = [MinimalRecord.from_line(ln) for ln in lines[1:] if ln]
        else:
            p.write_text(RECORDS_HEADER + "\n", encoding="utf-8")

    # challenge -------------------------------------------------------------

    def issue_challenge(self, source: str = "local") -> Nonce:
        if not self.limiter.allow(source):
            raise RateLimitedError("challenge rate exceeded")
        return self.nonces.issue()

    # authorization ---------------------------------------------------------

    def authorize(
        self, pres: Presentation, req: AccessRequest, nonce_value: bytes
    ) -> tuple[Grant, PreemptionReport] | Denied:
        try:
            nonce = self.nonces.consume(nonce_value)
        except NonceError as exc:
            return Denied(DenyReason(exc.code))
        if not self.db.in_range(*req.band):
            return Denied(DenyReason.BAND_OUTSIDE_MANAGED_RANGE)
        verdict = verify_presentation(self.issuer_keys, pres, req, nonce)
        if not verdict:
            return Denied(DenyReason(verdict.reason.value))
        return self._allocate(req)

    def authorize_plain(self, req: AccessRequest) -> tuple[Grant, PreemptionReport] | Denied:
        """Allocation without proof checks, for the IIC baseline path."""
        if not self.db.in_range(*req.band):
            return Denied(DenyReason.BAND_OUTSIDE_MANAGED_RANGE)
        return self._allocate(req)

    def verify_only(self, pres: Presentation, req: AccessRequest, nonce_value: bytes) -> DenyReason | None:
        """Nonce + proof checks with no allocation. Used to time identity verification."""
        try:
            nonce = self.nonces.consume(nonce_value)
        except NonceError as exc:
            return DenyReason(exc.code)
        verdict = verify_presentation(self.issuer_keys, pres, req, nonce)
        return None if verdict else DenyReason(verdict.reason.value)

    def _allocate(self, req: AccessRequest) -> tuple[Grant, PreemptionReport] | Denied:
        lo, hi = req.band
        with self._lock:
            now = self.clock()
            if self.db.iu_grants_overlapping(lo, hi):
                return Denied(DenyReason.BAND_CONFLICT_IU)
            grant = Grant(
                grant_id=secrets.token_bytes(16),
                f_low_khz=lo,
                f_high_khz=hi,
                lat_microdeg=req.lat_microdeg,
                lon_microdeg=req.lon_microdeg,
                start_unix_s=req.start_unix_s,
                duration_s=req.duration_s,
                expiry=req.start_unix_s + min(req.duration_s, self.max_grant_s),
            )
            report = preempt_overlapping((lo, hi), self.db, now)
            self.db.add_grant(grant, now)
            self._append_record(
                MinimalRecord(lo, hi, req.lat_microdeg, req.lon_microdeg, req.start_unix_s, req.duration_s, int(now))
            )
        log.info("granted %d-%d kHz, %d channel moves", lo, hi, len(report.moves))
        return grant, report

    def _append_record(self, rec: MinimalRecord) -> None:
        self._records.append(rec)
        if self.records_path is not None:
            with self.records_path.open("a", encoding="utf-8") as fh:
                fh.write(rec.to_line() + "\n")

    # lifecycle -------------------------------------------------------------

    def get_grant(self, grant_id: bytes) -> Grant | None:
        with self._lock:
            return self.db.grants.get(grant_id)

    def release_grant(self, grant_id: bytes) -> bool:
        with self._lock:
            return self.db.remove_grant(grant_id) is not None

    def expire_grants(self, now: float | None = None) -> int:
        now = self.clock() if now is None else now
        with self._lock:
            expired = [g for g in self.db.grants.values() if g.expiry <= now]
            for g in expired:
                self.db.remove_grant(g.grant_id)
        return len(expired)

    def export_records(self) -> list[MinimalRecord]:
        with self._lock:
            return list(self._records)

    def snapshot(self):
        with self._lock:
            return self.db.snapshot()
