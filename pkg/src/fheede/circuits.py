"""Bit-serial 8-bit adder and subtractor over encrypted bits.

Both circuits work in eight rounds. Round i emits output bit i and folds the
carry (or borrow) of bit i into every higher working bit. Each conjunction
chain is evaluated from scratch, so round i costs sum(1..8-i) multiplications
and one circuit costs 84.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lwe
from .homomorphic import EvalContext, hadd, hmul, hnot
from .lwe import Ciphertext, PublicKey, SecretKey

WIDTH = 8


@dataclass(frozen=True, eq=False)
class EncryptedByte:
    """Eight bit ciphertexts, least significant first (``bits[0]`` is bit 1)."""

    bits: tuple[Ciphertext, ...]

    def __post_init__(self):
        if len(self.bits) != WIDTH:
            raise ValueError(f"an encrypted byte needs {WIDTH} bits, got {len(self.bits)}")
        object.__setattr__(self, "bits", tuple(self.bits))

    def __getitem__(self, i):
        return self.bits[i]

    def replace_bit(self, i: int, ct: Ciphertext) -> "EncryptedByte":
        bits = list(self.bits)
        bits[i] = ct
        return EncryptedByte(tuple(bits))


def to_bits(value: int) -> list[int]:
    return [(value >> i) & 1 for i in range(WIDTH)]


def from_bits(bits) -> int:
    return sum(int(b) << i for i, b in enumerate(bits))


def encrypt_byte(pk: PublicKey, value: int, rng: np.random.Generator) -> EncryptedByte:
    if not 0 <= value < 256:
        raise ValueError(f"byte value out of range: {value}")
    return EncryptedByte(tuple(lwe.enc(pk, b, rng) for b in to_bits(value)))


def decrypt_byte(sk: SecretKey, x: EncryptedByte) -> int:
    return from_bits(lwe.dec(sk, c) for c in x.bits)


def bit_byte(c: Ciphertext, ctx: EvalContext) -> EncryptedByte:
    """Byte whose LSB is ``c`` and whose other bits are fresh zeros."""
    return EncryptedByte((c,) + tuple(ctx.encrypt(0) for _ in range(WIDTH - 1)))


def shl1(x: EncryptedByte, c_zero: Ciphertext) -> EncryptedByte:
    """Multiply by two; the old MSB is dropped."""
    return EncryptedByte((c_zero,) + x.bits[:-1])


def shr1(x: EncryptedByte, c_zero: Ciphertext) -> EncryptedByte:
    """Floor-divide by two; ``c_zero`` becomes the MSB."""
    return EncryptedByte(x.bits[1:] + (c_zero,))


class _Live:
    """Ciphertexts a circuit keeps alive; a due refresh event replaces them all."""

    def __init__(self, ctx: EvalContext, **groups: list[Ciphertext]):
        self.ctx = ctx
        self.groups = groups

    def checkpoint(self):
        names = list(self.groups)
        flat = [c for name in names for c in self.groups[name]]
        fresh = self.ctx.refresh_if_due(flat)
        if fresh is None:
            return
        pos = 0
        for name in names:
            g = self.groups[name]
            g[:] = fresh[pos:pos + len(g)]
            pos += len(g)

    def finish(self, out: list[Ciphertext]) -> list[Ciphertext]:
        return self.ctx.refresh_event(out)


def _ripple(x: EncryptedByte, y: EncryptedByte, ctx: EvalContext,
            borrow: bool) -> EncryptedByte:
    work = list(x.bits)
    ys = list(y.bits)
    out: list[Ciphertext] = []
    snap: list[Ciphertext] = []
    chain: list[Ciphertext] = []
    live = _Live(ctx, work=work, ys=ys, out=out, snap=snap, chain=chain)
    for i in range(WIDTH):
        out.append(hadd(work[i], ys[i], ctx))
        live.checkpoint()
        # chains read the working bits as they stood when round i began
        snap[:] = work[i:]
        for j in range(1, WIDTH - i):
            chain[:] = [ys[i]]
            for k in range(j - 1, -1, -1):
                f = hnot(snap[k], ctx) if borrow else snap[k]
                chain[0] = hmul(chain[0], f, ctx)
                live.checkpoint()
            work[i + j] = hadd(work[i + j], chain.pop(), ctx)
            live.checkpoint()
    return EncryptedByte(tuple(live.finish(out)))


def add8(x: EncryptedByte, y: EncryptedByte, ctx: EvalContext) -> EncryptedByte:
    """Encryption of (X + Y) mod 256."""
    return _ripple(x, y, ctx, borrow=False)


def sub8(x: EncryptedByte, y: EncryptedByte, ctx: EvalContext) -> EncryptedByte:
    """Encryption of X - Y; requires X >= Y on the plaintexts."""
    return _ripple(x, y, ctx, borrow=True)


def table_addition_count(circuit: str) -> int:
    """Table-style addition count: 1 per round for Add*, sum(1..9-i) for Sub*."""
    if circuit == "add8":
        return WIDTH
    if circuit == "sub8":
        return sum(mu for i in range(1, WIDTH + 1) for mu in range(1, WIDTH + 2 - i))
    raise ValueError(circuit)
