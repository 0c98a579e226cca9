"""Client library for the simulated crossbar instrumentation board."""

from .errors import ClientError, ProtocolError, RemoteError, SessionConnectionError
from .session import ClientSession, connect, connect_pipes

__version__ = "0.1.0"
