"""Fixtures that launch the reward service through its public CLI.

The client package talks to the service only over its external
interfaces, so tests spawn ``groundrl serve`` as a subprocess and speak
the wire protocol; nothing from the server package is imported.
"""

from __future__ import annotations

import re
import shutil
import subprocess
import sys
import time

import pytest


def serve_command() -> list[str]:
    found = shutil.which("groundrl")
    if found is not None:
        return [found]
    return [sys.executable, "-m", "groundrl.cli"]


class ServerProcess:
    def __init__(self) -> None:
        self.proc = subprocess.Popen(
            [*serve_command(), "serve", "--bind", "127.0.0.1:0"],
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
        )
        # the CLI announces the actually-bound port on stderr
        line = self.proc.stderr.readline()
        match = re.search(r"listening on ([\d.]+):(\d+)", line)
        if not match:
            self.stop()
            raise RuntimeError(f"server did not announce its address: {line!r}")
        self.host = match.group(1)
        self.port = int(match.group(2))

    @property
    def endpoint(self) -> str:
        return f"{self.host}:{self.port}"

    def stop(self) -> None:
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait(timeout=10)


@pytest.fixture
def server():
    srv = ServerProcess()
    try:
        yield srv
    finally:
        srv.stop()


@pytest.fixture(scope="module")
def shared_server():
    srv = ServerProcess()
    try:
        yield srv
    finally:
        srv.stop()


def free_port() -> int:
    import socket

    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def wait_until(predicate, timeout: float = 10.0, interval: float = 0.05) -> bool:
    deadline = time.time() + timeout
    while time.time() < deadline:
        if predicate():
            return True
        time.sleep(interval)
    return False
