"""Typed client-side errors mirroring the server's error codes."""


class ClientError(Exception):
    """Base class for client-side failures."""


class SessionConnectionError(ClientError, ConnectionError):
    """The endpoint is unreachable or the connection dropped mid-session."""


class ProtocolError(ClientError):
    """The server answered outside the protocol (bad JSON, id mismatch)."""


class RemoteError(ClientError):
    """The server answered ok=false; carries the server error code."""

    def __init__(self, code: str, message: str = "", payload=None):
        detail = f"{code}: {message}" if message else code
        super().__init__(detail)
        self.code = code
        self.message = message
        self.payload = payload
