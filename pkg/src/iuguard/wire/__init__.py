"""Envelopes, pinned mutual-TLS transport and the CA/SCS/IIC services."""

from .envelope import PROTOCOL_VERSION, Envelope, EnvelopeError, ServiceError
from .http import AsyncClient, Client, Endpoint, HttpServer, ServiceThread, TransportError
from .pki import Identity, PinMismatch, client_context, init_pki, server_context

__all__ = [
    "PROTOCOL_VERSION",
    "AsyncClient",
    "Client",
    "Endpoint",
    "Envelope",
    "EnvelopeError",
    "HttpServer",
    "Identity",
    "PinMismatch",
    "ServiceError",
    "ServiceThread",
    "TransportError",
    "client_context",
    "init_pki",
    "server_context",
]
