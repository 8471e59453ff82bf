"""Synthetic incumbent registries for demos, fixtures and benchmarks."""

from __future__ import annotations

import hashlib
import random

from .coordinator import CBRS_HIGH_KHZ, CBRS_LOW_KHZ
from .credential import Antenna, DeviceType, RegistryRecord

_SYSTEMS = {
    DeviceType.RADAR: "shipborne-radar",
    DeviceType.SATELLITE_TERMINAL: "fss-earth-station",
    DeviceType.BASE_STATION: "fixed-link",
    DeviceType.TACTICAL_RADIO: "tactical-net",
    DeviceType.OTHER: "test-range",
}


def enrollment_secret_for(seed: bytes, iu_id: str) -> bytes:
    """Derived so a demo operator can hand the same secret to the IU out of band."""
    return hashlib.sha256(b"iuguard-demo-enroll" + seed + iu_id.encode()).digest()


def synthetic_records(
    n: int,
    seed: bytes = b"",
    low_khz: int = CBRS_LOW_KHZ,
    high_khz: int = CBRS_HIGH_KHZ,
    full_band_first: bool = True,
) -> list[RegistryRecord]:
    """``n`` records named ``radar-01``, ``radar-02``, ... with random bands in kHz.

    The first record is authorized for the whole managed band when
    ``full_band_first`` is set; later ones get a random sub-band at least
    10 MHz wide.
    """
    rnd = random.Random(hashlib.sha256(b"iuguard-registry-gen" + seed).digest())
    width = max(2, len(str(n)))
    out = []
    for i in range(1, n + 1):
        iu_id = f"radar-{i:0{width}d}"
        kind = rnd.choice(list(DeviceType))
        if i == 1 and full_band_first:
            lo, hi = low_khz, high_khz
        else:
            lo = rnd.randrange(low_khz, high_khz - 10_000)
            hi = rnd.randrange(lo + 10_000, high_khz + 1)
        out.append(
            RegistryRecord(
                iu_id=iu_id,
                device_type=kind,
                antenna=Antenna(
                    gain_dbi=round(rnd.uniform(0, 45), 1),
                    orientation_deg=round(rnd.uniform(0, 360), 1),
                    height_m=round(rnd.uniform(2, 60), 1),
                ),
                max_power_dbm=round(rnd.uniform(20, 90), 1),
                authorized_f_low_khz=lo,
                authorized_f_high_khz=hi,
                system_type=_SYSTEMS[kind],
                enrollment_secret=enrollment_secret_for(seed, iu_id),
            )
        )
    return out
