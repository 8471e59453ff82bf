import os
import signal
import socket
import subprocess
import sys

import pytest

from iuguard import cli
from iuguard.app import launch
from iuguard.config import init_deployment, load_config
from iuguard.credential import Credential


def free_ports(n):
    socks = [socket.socket() for _ in range(n)]
    for s in socks:
        s.bind(("127.0.0.1", 0))
    ports = [s.getsockname()[1] for s in socks]
    for s in socks:
        s.close()
    return tuple(ports)


@pytest.fixture(scope="module")
def live(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    path = init_deployment(d, seed=b"cli", ports=free_ports(3))
    running = launch(load_config(path))
    yield path
    running.stop()


def run(path, *argv):
    return cli.main(["-c", str(path), *argv])


def test_issue_writes_credential(live, capsys):
    assert run(live, "issue", "--iu", "radar-01") == cli.EXIT_OK
    cred_path = live.parent / "wallet" / "radar-01.cred"
    cred = Credential.load(cred_path)
    assert cred.iu_id == "radar-01"
    assert cred_path.stat().st_mode & 0o077 == 0
    assert "radar-01" in capsys.readouterr().out


def test_request_access_prints_grant(live, capsys):
    run(live, "issue", "--iu", "radar-01")
    capsys.readouterr()
    rc = run(live, "request-access", "--iu", "radar-01", "--band", "3550000:3560000",
             "--lat", "38.9", "--lon", "-77.0365", "--start", "now", "--dur", "600")
    assert rc == cli.EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("grant ") and len(out.split()[1]) == 32


def test_out_of_authorization_sends_nothing(live, capsys, monkeypatch):
    run(live, "issue", "--iu", "radar-02")
    cred = Credential.load(live.parent / "wallet" / "radar-02.cred")
    sent = []
    from iuguard.wire import http

    monkeypatch.setattr(http.Client, "call", lambda self, *a, **k: sent.append(a))
    rc = run(live, "request-access", "--iu", "radar-02", "--band", f"{cred.f_low_khz - 1}:{cred.f_high_khz}",
             "--lat", "0", "--lon", "0", "--dur", "60")
    assert rc == cli.EXIT_OUT_OF_AUTHORIZATION
    assert sent == []
    assert "OUT_OF_AUTHORIZATION" in capsys.readouterr().err


def test_service_codes_propagate(live, capsys):
    rc = run(live, "issue", "--iu", "radar-99", "--enroll", str(live.parent / "iu" / "radar-01.enroll"))
    assert rc == cli.EXIT_AUTH
    assert "NOT_REGISTERED" in capsys.readouterr().err


def test_iu_conflict_exit_code(live, capsys):
    run(live, "issue", "--iu", "radar-01")
    args = ["request-access", "--iu", "radar-01", "--band", "3650000:3650100", "--lat", "1", "--lon", "1", "--dur", "600"]
    assert run(live, *args) == cli.EXIT_OK
    assert run(live, *args) == cli.EXIT_ALLOCATION
    assert "BAND_CONFLICT_IU" in capsys.readouterr().err


def test_baseline_login_report(live, capsys):
    assert run(live, "baseline", "login", "--user", "radar-03") == cli.EXIT_OK
    session = live.parent / "wallet" / "radar-03.session"
    assert session.stat().st_mode & 0o077 == 0
    rc = run(live, "baseline", "report", "--user", "radar-03", "--band", "3690000:3690010",
             "--lat", "1", "--lon", "1", "--dur", "60")
    assert rc == cli.EXIT_OK
    assert "grant" in capsys.readouterr().out


def test_baseline_bad_password(live, tmp_path, capsys):
    pw = tmp_path / "pw"
    pw.write_text("wrong\n")
    assert run(live, "baseline", "login", "--user", "radar-03", "--password-file", str(pw)) == cli.EXIT_AUTH
    assert "LOGIN_FAILED" in capsys.readouterr().err


def test_transport_failure_exit_code(tmp_path, capsys):
    path = init_deployment(tmp_path, seed=b"down", ports=free_ports(3))  # nothing listening
    assert run(path, "issue", "--iu", "radar-01") == cli.EXIT_TRANSPORT
    assert "transport" in capsys.readouterr().err


def test_missing_config(tmp_path, capsys):
    assert run(tmp_path / "nope.ini", "issue", "--iu", "x") == cli.EXIT_CONFIG


def test_missing_credential(live, capsys):
    rc = run(live, "request-access", "--cred", str(live.parent / "none.cred"), "--band", "3550000:3550001",
             "--lat", "0", "--lon", "0", "--dur", "1")
    assert rc == cli.EXIT_CONFIG


def test_argument_parsing():
    assert cli.parse_band("3550000:3560000") == (3550000, 3560000)
    assert cli.parse_microdeg("38.897700") == 38_897_700
    assert cli.parse_microdeg("-77.0365") == -77_036_500
    with pytest.raises(Exception):
        cli.parse_band("3550000-3560000")
    with pytest.raises(SystemExit) as ei:
        cli.main(["request-access", "--iu", "x", "--band", "bad", "--lat", "0", "--lon", "0", "--dur", "1"])
    assert ei.value.code == cli.EXIT_USAGE


def test_exit_codes_distinct_per_class():
    classes = {cli.exit_code_for(c) for c in ("AUTH_FAILED", "NONCE_REUSED", "CONTEXT_MISMATCH", "BAND_CONFLICT_IU", "RATE_LIMITED", "BAD_REQUEST", "INTERNAL")}
    assert len(classes) == 7
    assert cli.EXIT_OUT_OF_AUTHORIZATION not in classes and cli.EXIT_TRANSPORT not in classes


def test_trials_zero_rejected(capsys):
    assert cli.main(["bench", "micro", "--trials", "0"]) == cli.EXIT_USAGE


def test_bench_micro_cli(tmp_path, capsys):
    out = tmp_path / "micro.csv"
    assert cli.main(["bench", "micro", "--trials", "2", "--out", str(out)]) == cli.EXIT_OK
    text = out.read_text()
    assert "# commit:" in text and "scenario,trials,mean_ms,p50_ms,p95_ms,payload_bytes" in text
    assert out.with_suffix(".dat").exists()


def test_init_and_serve_subprocess(tmp_path):
    rc = cli.main(["init", str(tmp_path / "d"), "--ports", ",".join(map(str, free_ports(3))), "--iterations", "1000"])
    assert rc == cli.EXIT_OK
    cfg = tmp_path / "d" / "iuguard.ini"
    proc = subprocess.Popen(
        [sys.executable, "-m", "iuguard.cli", "-c", str(cfg), "serve", "scs"],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True, env={**os.environ},
    )
    try:
        line = proc.stdout.readline()
        assert line.startswith("scs listening on 127.0.0.1:")
        proc.send_signal(signal.SIGTERM)
        assert proc.wait(20) == 0
    finally:
        if proc.poll() is None:
            proc.kill()
