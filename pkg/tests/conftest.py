"""Shared fixtures: real gateway subprocesses bound to ephemeral ports."""

import re
import subprocess
import sys
import threading

import pytest


class GatewayProc:
    """One `studyhall.cli gateway` child; address parsed from stdout."""

    def __init__(self, data_dir, extra_args=()):
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "studyhall.cli", "gateway",
             "--port", "0", "--data-dir", str(data_dir), *extra_args],
            stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True)
        self.lines = []
        self.address = None
        self._ready = threading.Event()
        threading.Thread(target=self._pump, daemon=True).start()
        self._ready.wait(timeout=30)
        if self.address is None:
            out = "".join(self.lines)
            self.terminate()
            raise RuntimeError(f"gateway failed to start:\n{out}")

    def _pump(self):
        for line in self.proc.stdout:
            self.lines.append(line)
            m = re.match(r"listening on (\S+):(\d+)", line.strip())
            if m:
                self.address = f"{m.group(1)}:{m.group(2)}"
                self._ready.set()
        self._ready.set()  # EOF without a bind line: startup failed

    def terminate(self):
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()


@pytest.fixture(scope="session")
def gateway(tmp_path_factory):
    """Wall-clock gateway shared by networked tests."""
    gp = GatewayProc(tmp_path_factory.mktemp("gw-data"))
    yield gp.address
    gp.terminate()


@pytest.fixture(scope="session")
def sim_gateway(tmp_path_factory):
    """Gateway whose clock only moves via POST /api/clock/advance."""
    gp = GatewayProc(tmp_path_factory.mktemp("sim-data"),
                     extra_args=("--simulated-clock",))
    yield gp.address
    gp.terminate()
