import os
from pathlib import Path

os.environ.setdefault("IUGUARD_ALLOW_DETERMINISTIC_RNG", "1")

import pytest  # noqa: E402

from iuguard.crypto import DeterministicRng, keygen  # noqa: E402

SEED0 = bytes(32)
SEED1 = bytes([1]) * 32


@pytest.fixture
def drng():
    return DeterministicRng(b"tests")


@pytest.fixture(scope="session")
def kp4():
    return keygen(SEED0, 4)


@pytest.fixture(scope="session")
def other_kp4():
    return keygen(SEED1, 4)


FIXTURES = Path(__file__).parent / "fixtures"
REGISTRY3 = FIXTURES / "registry3.txt"


@pytest.fixture(scope="session")
def registry3():
    from iuguard.credential import load_registry

    return load_registry(REGISTRY3)


@pytest.fixture(scope="session")
def ca(registry3):
    from iuguard.credential import CredentialAuthority

    return CredentialAuthority(registry3, keygen(SEED0, 4))


def obtain_credential(ca, iu_id, claimed_band=None, rng=None):
    from iuguard.credential import create_credential_request, finalize_credential

    rec = ca.registry[iu_id]
    req, state = create_credential_request(
        iu_id, rec.enrollment_secret, ca.new_nonce(), ca.public_key, claimed_band=claimed_band, rng=rng
    )
    return finalize_credential(ca.issue(req, rng), state, ca.public_key)


@pytest.fixture(scope="session")
def full_cred(ca):
    """radar-01 is authorized for [3550000, 3700000] kHz."""
    return obtain_credential(ca, "radar-01")


@pytest.fixture(scope="session")
def deployment(tmp_path_factory):
    """A generated deployment directory and its loaded config (nothing running)."""
    from iuguard.config import init_deployment, load_config

    d = tmp_path_factory.mktemp("deploy")
    return load_config(init_deployment(d, seed=b"wire-tests", registry_count=3))


@pytest.fixture(scope="session")
def services(deployment):
    from iuguard.app import launch

    running = launch(deployment, ephemeral_ports=True, workers=4)
    yield running
    running.stop()


def enrollment_secret(cfg, iu_id):
    return bytes.fromhex((cfg.path.parent / "iu" / f"{iu_id}.enroll").read_text().strip())


def password_of(cfg, iu_id):
    return (cfg.path.parent / "iu" / f"{iu_id}.password").read_text().strip()


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
