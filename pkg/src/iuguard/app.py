"""Build and run the CA, SCS and IIC services from a loaded config."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .baseline import AccountStore, load_accounts
from .config import Config, iic_fingerprints
from .coordinator import Coordinator, SpectrumDatabase
from .credential import CredentialAuthority, load_registry
from .issuer import load_issuer_secret, load_issuers
from .wire.http import Endpoint, HttpServer, ServiceThread
from .wire.pki import client_context, server_context
from .wire.services import CAService, IICService, SCSService

log = logging.getLogger(__name__)

ROLES = ("ca", "scs", "iic")


@dataclass
class Running:
    thread: ServiceThread
    endpoints: dict[str, Endpoint] = field(default_factory=dict)
    ca: CAService | None = None
    scs: SCSService | None = None
    iic: IICService | None = None

    def stop(self) -> None:
        self.thread.stop()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.stop()


def build_coordinator(cfg: Config) -> Coordinator:
    s = cfg.scs
    return Coordinator(
        load_issuers(s.issuers),
        SpectrumDatabase.channelize(s.band_low_khz, s.band_high_khz, s.channel_width_khz),
        records_path=s.records,
        nonce_ttl_s=s.nonce_ttl_s,
        max_grant_s=s.max_grant_s,
        rate_per_s=s.rate_per_s,
        rate_burst=s.rate_burst,
    )


def launch(cfg: Config, roles=ROLES, *, ephemeral_ports: bool = False, workers: int | None = None) -> Running:
    """Start the requested roles on one private event loop.

    The SCS starts before the IIC so the IIC can forward to its bound port.
    With ``ephemeral_ports`` every listener binds port 0; the actual ports are
    reported in ``Running.endpoints``.
    """
    unknown = set(roles) - set(ROLES)
    if unknown:
        raise ValueError(f"unknown roles {sorted(unknown)}")
    root = cfg.root_cert
    pins = {"ca": cfg.client.ca_pin, "scs": cfg.client.scs_pin, "iic": cfg.client.iic_pin}
    servers: list[HttpServer] = []
    ca = scs = None

    def port(section) -> int:
        return 0 if ephemeral_ports else section.port

    def start(name, router, section) -> None:
        srv = HttpServer(router, server_context(section.identity, root), section.host, port(section), name)
        servers.append(srv)

    if "ca" in roles:
        authority = CredentialAuthority(load_registry(cfg.ca.registry), load_issuer_secret(cfg.ca.issuer_secret), cfg.ca.nonce_ttl_s)
        ca = CAService(authority)
        start("ca", ca.router(), cfg.ca)
    if "scs" in roles:
        scs = SCSService(build_coordinator(cfg), iic_fingerprints(cfg))
        start("scs", scs.router(), cfg.scs)
    thread = ServiceThread(servers, workers=workers or cfg.scs.workers, on_loop=scs.start_expiry if scs else None)
    running = Running(thread, ca=ca, scs=scs)
    thread.start()
    for srv in running.thread.servers:
        running.endpoints[srv.name] = Endpoint(srv.host, srv.port, pins[srv.name])

    if "iic" in roles:
        scs_ep = running.endpoints.get("scs") or Endpoint(cfg.scs.host, cfg.scs.port, cfg.client.scs_pin)
        store = AccountStore(load_accounts(cfg.iic.accounts), cfg.iic.session_ttl_s)
        running.iic = IICService(store, scs_ep, client_context(cfg.iic.client, root), cfg.iic.pool_size)
        srv = HttpServer(running.iic.router(), server_context(cfg.iic.identity, root), cfg.iic.host, port(cfg.iic), "iic")
        running.thread.run(srv.start())
        running.thread.on_stop.append(running.iic.aclose)
        running.thread.servers.append(srv)
        running.endpoints["iic"] = Endpoint(srv.host, srv.port, pins["iic"])
    for name, ep in running.endpoints.items():
        log.info("%s ready on %s:%d", name, ep.host, ep.port)
    return running
