"""Plug-in simulator interface.

Any object with ``simulate(x_rows, phi, rng) -> observation rows`` works as a
model. This module adapts two external forms: an in-process hook (a plain
callable mapping one parameter row to one observation row) and a line-
oriented child executable.

Executable protocol: for each observation the host writes one line of
whitespace-separated parameter values followed by an integer seed to the
child's stdin, then reads one line from its stdout -- either an observation
row of numbers or the token ``FAIL``.
"""

from __future__ import annotations

import subprocess
from dataclasses import dataclass

import numpy as np

from popcal.models.ode import SimulatorFailure

__all__ = ["HookModel", "ExternalExecutableModel", "register_external_model"]


@dataclass
class HookModel:
    """Wraps ``hook(x_row, phi, rng) -> observation row``; a raising hook is
    converted to a simulator failure."""

    hook: object
    output_dim: int = 1

    def simulate(self, x, phi, rng):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        rows = []
        for row in x:
            try:
                out = self.hook(row, phi, rng)
            except Exception as exc:
                raise SimulatorFailure(f"external hook raised: {exc}") from exc
            if out is None:
                raise SimulatorFailure("external hook returned failure token")
            rows.append(np.asarray(out, dtype=float).reshape(-1))
        return np.vstack(rows)


class ExternalExecutableModel:
    """Persistent child process speaking the line protocol."""

    def __init__(self, argv, output_dim=1):
        self.argv = list(argv)
        self.output_dim = output_dim
        self._proc = None

    def _ensure(self):
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self.argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        return self._proc

    def close(self):
        if self._proc is not None and self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)
        self._proc = None

    def simulate(self, x, phi, rng):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        phi = np.asarray(phi, dtype=float).reshape(-1)
        proc = self._ensure()
        rows = []
        for row in x:
            seed = int(rng.integers(0, 2**63 - 1))
            fields = list(row) + list(phi)
            try:
                proc.stdin.write(" ".join(repr(float(v)) for v in fields) + f" {seed}\n")
                proc.stdin.flush()
                line = proc.stdout.readline()
            except (BrokenPipeError, OSError) as exc:
                raise SimulatorFailure(f"external executable died: {exc}") from exc
            if not line:
                raise SimulatorFailure("external executable closed its output")
            line = line.strip()
            if line == "FAIL":
                raise SimulatorFailure("external executable reported FAIL")
            rows.append(np.array([float(v) for v in line.split()]))
        return np.vstack(rows)


def register_external_model(spec, output_dim=1):
    """Model handle from an in-process hook (callable) or an executable
    argv list / command string."""
    if callable(spec):
        return HookModel(spec, output_dim)
    if isinstance(spec, str):
        spec = spec.split()
    return ExternalExecutableModel(spec, output_dim)
