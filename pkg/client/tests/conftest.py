import json
import subprocess
import sys

import pytest

import nbbclient

SERVER_CMD = [sys.executable, "-m", "nbbsim.cli", "serve"]

CONFIG_DOC = {
    "schema_version": 1,
    "seed": 31_337,
    "array": {"rows": 8, "cols": 4},
}


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "board.json"
    path.write_text(json.dumps(CONFIG_DOC) + "\n")
    return str(path)


@pytest.fixture
def stdio_server(config_path):
    """Simulator subprocess speaking the protocol on stdin/stdout."""
    proc = subprocess.Popen(
        SERVER_CMD + ["--stdio", "--config", config_path],
        stdin=subprocess.PIPE, stdout=subprocess.PIPE,
        text=True, bufsize=1)
    yield proc
    proc.stdin.close()
    proc.wait(timeout=10)


@pytest.fixture
def stdio_session(stdio_server):
    session = nbbclient.connect_pipes(stdio_server.stdout, stdio_server.stdin)
    yield session
    session.close()


@pytest.fixture
def tcp_server(config_path):
    """Simulator subprocess on an ephemeral TCP port."""
    proc = subprocess.Popen(
        SERVER_CMD + ["--port", "0", "--config", config_path],
        stderr=subprocess.PIPE, text=True)
    banner = proc.stderr.readline()
    port = int(banner.strip().rsplit(" ", 1)[1])
    yield "127.0.0.1", port
    proc.terminate()
    proc.wait(timeout=10)
