"""Noise refresh as a separate process.

Real bootstrapping is done by an external implementation that the server
calls. Here that role is played by ``fheede bootstrap-serve``, a process
that owns the simulated (secret-key) refresher. The server only ever sees
ciphertexts going out and coming back over a pipe, so its own process never
opens a secret-key file.

Wire format, both directions: u32 LE count, then ``count * n`` residues in
the same encoding as the ciphertext files. A count of zero ends the session.
"""

from __future__ import annotations

import shlex
import struct
import subprocess
import sys

import numpy as np

from . import io_serde
from .homomorphic import TrustedRefresher
from .lwe import Ciphertext, fresh_noise_bound
from .params import ParamProfile


def _read_exact(stream, size: int) -> bytes:
    buf = bytearray()
    while len(buf) < size:
        chunk = stream.read(size - len(buf))
        if not chunk:
            raise EOFError(f"pipe closed after {len(buf)} of {size} bytes")
        buf += chunk
    return bytes(buf)


def _write_frame(stream, vecs: np.ndarray, p: ParamProfile):
    stream.write(struct.pack("<I", len(vecs)))
    if len(vecs):
        stream.write(io_serde._encode(vecs, p))
    stream.flush()


def _read_frame(stream, p: ParamProfile) -> np.ndarray:
    (count,) = struct.unpack("<I", _read_exact(stream, 4))
    raw = _read_exact(stream, count * p.n * p.residue_bytes)
    vecs, _ = io_serde._decode(raw, 0, count * p.n, p)
    return vecs.reshape(count, p.n)


class PipeRefresher:
    """Refresher that forwards every event to a bootstrapping process."""

    def __init__(self, command, profile: ParamProfile):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.profile = profile
        self._proc = subprocess.Popen(argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE)

    def refresh_many(self, cts: list[Ciphertext]) -> list[Ciphertext]:
        if not cts:
            return []
        p = self.profile
        _write_frame(self._proc.stdin, np.stack([c.c for c in cts]), p)
        vecs = _read_frame(self._proc.stdout, p)
        if len(vecs) != len(cts):
            raise RuntimeError(f"refresh service returned {len(vecs)} of {len(cts)} ciphertexts")
        bound = fresh_noise_bound(p)
        return [Ciphertext(v.copy(), bound) for v in vecs]

    def refresh(self, ct: Ciphertext) -> Ciphertext:
        return self.refresh_many([ct])[0]

    def close(self):
        if self._proc.poll() is None:
            try:
                _write_frame(self._proc.stdin, np.zeros((0, self.profile.n)), self.profile)
                self._proc.stdin.close()
            except BrokenPipeError:
                pass
            self._proc.wait(timeout=30)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def serve(refresher: TrustedRefresher, p: ParamProfile, stdin=None, stdout=None):
    """Answer refresh frames until a zero-length frame or end of input."""
    stdin = stdin or sys.stdin.buffer
    stdout = stdout or sys.stdout.buffer
    while True:
        try:
            vecs = _read_frame(stdin, p)
        except EOFError:
            return
        if not len(vecs):
            return
        out = [refresher.refresh(Ciphertext(v, 0)).c for v in vecs]
        _write_frame(stdout, np.stack(out), p)
