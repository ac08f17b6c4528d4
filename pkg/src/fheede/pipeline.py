"""Encrypted-domain difference expansion and key-switching LSB hiding.

Client-side functions take a :class:`~fheede.lwe.SecretKey`; server-side ones
only ever see public material (public key, switching keys, data-hiding key).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np

from . import de
from .circuits import (EncryptedByte, add8, bit_byte, decrypt_byte,
                       encrypt_byte, shl1, shr1, sub8)
from .homomorphic import EvalContext, SwitchingKey, key_switch, OpCounters
from .lwe import Ciphertext, PublicKey, SecretKey
from .params import ParamProfile

UNIVERSAL = "universal"
EFFICIENT = "efficient"
MODES = (UNIVERSAL, EFFICIENT)
DEFAULT_CAP = 64


class KsLsbCapError(RuntimeError):
    """KS-LSB did not hit the target bit within the iteration cap."""


@dataclass(frozen=True, eq=False)
class EncryptedPixelPair:
    cx: EncryptedByte  # the larger pixel per the map
    cy: EncryptedByte


@dataclass(frozen=True, eq=False)
class EncryptedHL:
    ch: EncryptedByte
    cl: EncryptedByte


@dataclass
class KsLsbStats:
    counts: list[int] = field(default_factory=list)

    def record(self, count: int):
        self.counts.append(count)

    @property
    def mean(self) -> float:
        return float(np.mean(self.counts)) if self.counts else 0.0

    def frequencies(self, upto: int = 5) -> np.ndarray:
        c = np.bincount(np.asarray(self.counts, dtype=np.int64), minlength=upto + 1)
        return c[: upto + 1] / max(1, len(self.counts))


def scramble(bits, key) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8)
    key = np.asarray(key, dtype=np.uint8)
    if bits.shape != key.shape:
        raise ValueError(f"payload length {bits.size} != key length {key.size}")
    return bits ^ key


descramble = scramble


def generate_dh_key(length: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, 2, size=length, dtype=np.uint8)


# --- per-pair circuits -----------------------------------------------------

def fheede_hide_universal(pair: EncryptedPixelPair, c_bs: Ciphertext,
                          ctx: EvalContext) -> EncryptedPixelPair:
    """Homomorphic DE embedding on encrypted pixels (4 Add*, 2 Sub*)."""
    ch = sub8(pair.cx, pair.cy, ctx)
    # l = Y + floor(h/2); forming X + Y would overflow 8 bits for bright pairs
    cl = add8(pair.cy, shr1(ch, ctx.encrypt(0)), ctx)
    chp = add8(shl1(ch, ctx.encrypt(0)), bit_byte(c_bs, ctx), ctx)
    csum = add8(chp, bit_byte(ctx.encrypt(1), ctx), ctx)
    cxp = add8(cl, shr1(csum, ctx.encrypt(0)), ctx)
    cyp = sub8(cxp, chp, ctx)
    return EncryptedPixelPair(cxp, cyp)


def fheede_recover_universal(pair: EncryptedPixelPair,
                             ctx: EvalContext) -> EncryptedPixelPair:
    """Return encryptions of the original pixels (3 Add*, 2 Sub*)."""
    chp = sub8(pair.cx, pair.cy, ctx)
    ch = shr1(chp, ctx.encrypt(0))
    cl = add8(pair.cy, shr1(chp, ctx.encrypt(0)), ctx)
    csum = add8(ch, bit_byte(ctx.encrypt(1), ctx), ctx)
    cx = add8(cl, shr1(csum, ctx.encrypt(0)), ctx)
    cy = sub8(cx, ch, ctx)
    return EncryptedPixelPair(cx, cy)


def fheede_extract(pair: EncryptedPixelPair, ctx: EvalContext) -> Ciphertext:
    """Encryption of the embedded bit: LSB of the encrypted difference."""
    return sub8(pair.cx, pair.cy, ctx).bits[0]


def fheede_hide_efficient(hl: EncryptedHL, c_bs: Ciphertext,
                          ctx: EvalContext) -> EncryptedHL:
    chp = add8(shl1(hl.ch, ctx.encrypt(0)), bit_byte(c_bs, ctx), ctx)
    return EncryptedHL(chp, hl.cl)


def fheede_recover_efficient(hl: EncryptedHL, c_zero: Ciphertext) -> EncryptedHL:
    return EncryptedHL(shr1(hl.ch, c_zero), hl.cl)


def fheede_extract_efficient(hl: EncryptedHL) -> Ciphertext:
    return hl.ch.bits[0]


# --- KS-LSB ----------------------------------------------------------------

def kslsb_extract(c: Ciphertext) -> int:
    """LSB of the last coordinate (canonical representative)."""
    return int(c.c[-1]) & 1


def kslsb_embed(c: Ciphertext, b_r: int, lsb_key: SwitchingKey,
                cap: int = DEFAULT_CAP, stats: KsLsbStats | None = None,
                counters: OpCounters | None = None) -> Ciphertext:
    """Key-switch ``c`` under s -> s until its last coordinate has parity ``b_r``."""
    count = 0
    while kslsb_extract(c) != b_r:
        if count >= cap:
            raise KsLsbCapError(f"no parity match after {cap} key switches")
        c = key_switch(c, lsb_key, counters)
        count += 1
    if stats is not None:
        stats.record(count)
    return c


# --- image-level store -----------------------------------------------------

@dataclass(eq=False)
class CiphertextStore:
    """Encrypted image in pair blocks.

    Marked pairs hold ``(larger, smaller)`` pixels in universal mode and
    ``(h, l)`` in efficient mode; other pairs hold ``(left, right)``. An odd
    last column is kept in ``extras`` (one byte per row).
    """

    profile: ParamProfile
    mode: str
    width: int
    height: int
    mask: np.ndarray
    blocks: list[tuple[EncryptedByte, EncryptedByte]]
    extras: list[EncryptedByte] = field(default_factory=list)
    embedded: int = 0

    @property
    def pair_count(self) -> int:
        return len(self.blocks)

    def marked_indices(self) -> list[int]:
        """Block indices of the map-marked pairs in raster order."""
        half = self.width // 2
        return [r * half + c // 2 for r, c, _ in de.marked_pairs(self.mask)]

    def designated(self, block: tuple[EncryptedByte, EncryptedByte]) -> Ciphertext:
        """Bit-1 ciphertext that carries the KS-LSB bit."""
        return block[0].bits[0]


def encrypt_image(img: np.ndarray, mask: np.ndarray, mode: str, pk: PublicKey,
                  rng: np.random.Generator) -> CiphertextStore:
    """Client side: encrypt every pixel pair, oriented or transformed per the map."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    img = np.asarray(img, dtype=np.int64)
    mask = np.asarray(mask, dtype=np.uint8)
    if img.shape != mask.shape:
        raise ValueError(f"image {img.shape} and map {mask.shape} differ")
    height, width = img.shape
    orient = {(r, c): lbig for r, c, lbig in de.marked_pairs(mask)}
    blocks = []
    for r in range(height):
        for c in range(0, width - 1, 2):
            a, b = int(img[r, c]), int(img[r, c + 1])
            if (r, c) in orient:
                x, y = (a, b) if orient[(r, c)] else (b, a)
                first, second = (x, y) if mode == UNIVERSAL else de.diff_avg(x, y)
            else:
                first, second = a, b
            blocks.append((encrypt_byte(pk, first, rng), encrypt_byte(pk, second, rng)))
    extras = []
    if width % 2:
        extras = [encrypt_byte(pk, int(img[r, width - 1]), rng) for r in range(height)]
    return CiphertextStore(pk.profile, mode, width, height, mask, blocks, extras)


def decrypt_image(store: CiphertextStore, sk: SecretKey) -> np.ndarray:
    """Client side: decrypt to the (possibly marked) plaintext image."""
    out = np.zeros((store.height, store.width), dtype=np.int64)
    orient = {(r, c): lbig for r, c, lbig in de.marked_pairs(store.mask)}
    half = store.width // 2
    for idx, (u, v) in enumerate(store.blocks):
        r, c = divmod(idx, half)
        c *= 2
        first, second = decrypt_byte(sk, u), decrypt_byte(sk, v)
        if (r, c) in orient:
            if store.mode == EFFICIENT:
                first, second = de.inv_diff_avg(first, second)
            if not orient[(r, c)]:
                first, second = second, first
        out[r, c], out[r, c + 1] = first, second
    for r, e in enumerate(store.extras):
        out[r, store.width - 1] = decrypt_byte(sk, e)
    return out.astype(np.uint8)


def _embed_pair(task, ctx: EvalContext, mode: str, cap: int):
    (u, v), bit, rbit = task
    c_bs = ctx.encrypt(int(bit))
    if mode == UNIVERSAL:
        out = fheede_hide_universal(EncryptedPixelPair(u, v), c_bs, ctx)
        u, v = out.cx, out.cy
    else:
        out = fheede_hide_efficient(EncryptedHL(u, v), c_bs, ctx)
        u, v = out.ch, out.cl
    stats = KsLsbStats()
    c1 = kslsb_embed(u.bits[0], int(rbit), ctx.lsb_key, cap, stats, ctx.counters)
    return (u.replace_bit(0, c1), v), stats.counts[0]


def _recover_pair(block, ctx: EvalContext, mode: str):
    u, v = block
    if mode == UNIVERSAL:
        out = fheede_recover_universal(EncryptedPixelPair(u, v), ctx)
        return out.cx, out.cy
    out = fheede_recover_efficient(EncryptedHL(u, v), ctx.encrypt(0))
    return out.ch, out.cl


def _extract_pair(block, ctx: EvalContext, mode: str):
    u, v = block
    if mode == UNIVERSAL:
        return fheede_extract(EncryptedPixelPair(u, v), ctx)
    return fheede_extract_efficient(EncryptedHL(u, v))


def _run_chunk(fn, chunk, ctx_factory, seed):
    ctx = ctx_factory(seed)
    try:
        return [fn(t, ctx) for t in chunk], ctx.counters
    finally:
        close = getattr(ctx.refresher, "close", None)
        if close:
            close()


def map_pairs(fn, tasks: list, ctx: EvalContext | None = None, jobs: int = 1,
              ctx_factory=None, seed: int = 0) -> list:
    """Run ``fn(task, ctx)`` over independent pair tasks.

    With ``jobs > 1`` the tasks are split into contiguous chunks, one worker
    process and one ``ctx_factory(chunk_seed)`` context per chunk; chunk
    counters are summed into ``ctx.counters``. ``fn`` and ``ctx_factory``
    must be picklable.
    """
    if jobs <= 1 or len(tasks) < 2:
        return [fn(t, ctx) for t in tasks]
    if ctx_factory is None:
        raise ValueError("parallel runs need a context factory")
    from concurrent.futures import ProcessPoolExecutor
    size = -(-len(tasks) // jobs)
    chunks = [tasks[i:i + size] for i in range(0, len(tasks), size)]
    seeds = np.random.SeedSequence(seed).generate_state(len(chunks)).tolist()
    out = []
    with ProcessPoolExecutor(min(jobs, len(chunks))) as pool:
        futures = [pool.submit(_run_chunk, fn, c, ctx_factory, s) for c, s in zip(chunks, seeds)]
        for fut in futures:
            results, counters = fut.result()
            out.extend(results)
            if ctx is not None:
                ctx.counters = ctx.counters + counters
    return out


def embed_image(store: CiphertextStore, payload, dh_key, ctx: EvalContext,
                cap: int = DEFAULT_CAP, stats: KsLsbStats | None = None,
                jobs: int = 1, ctx_factory=None, seed: int = 0) -> CiphertextStore:
    """Server side: DE-hide each payload bit and KS-LSB-hide its scrambled copy."""
    payload = np.asarray(payload, dtype=np.uint8)
    if store.embedded:
        raise ValueError("store already carries a payload")
    targets = store.marked_indices()
    if len(payload) > len(targets):
        raise ValueError(f"payload of {len(payload)} bits exceeds capacity {len(targets)}")
    if ctx.lsb_key is None:
        raise RuntimeError("context has no s -> s switching key")
    b_r = scramble(payload, dh_key)
    tasks = [(store.blocks[i], b, r) for i, b, r in zip(targets, payload, b_r)]
    fn = partial(_embed_pair, mode=store.mode, cap=cap)
    results = map_pairs(fn, tasks, ctx, jobs, ctx_factory, seed)
    blocks = list(store.blocks)
    for idx, (block, lam) in zip(targets, results):
        blocks[idx] = block
        if stats is not None:
            stats.record(lam)
    return replace(store, blocks=blocks, embedded=len(payload))


def extract_ct(store: CiphertextStore, dh_key) -> np.ndarray:
    """Server side, no keys beyond ``dh_key``: read the KS-LSB bits and descramble."""
    targets = store.marked_indices()[: store.embedded]
    b_r = np.array([kslsb_extract(store.designated(store.blocks[i])) for i in targets],
                   dtype=np.uint8)
    return descramble(b_r, dh_key)


def recover_ct(store: CiphertextStore, ctx: EvalContext, jobs: int = 1,
               ctx_factory=None, seed: int = 0) -> CiphertextStore:
    """Server side: ciphertexts of the original image, without decrypting."""
    targets = store.marked_indices()[: store.embedded]
    fn = partial(_recover_pair, mode=store.mode)
    results = map_pairs(fn, [store.blocks[i] for i in targets], ctx, jobs, ctx_factory, seed)
    blocks = list(store.blocks)
    for idx, block in zip(targets, results):
        blocks[idx] = block
    return replace(store, blocks=blocks, embedded=0)


def extract_enc(store: CiphertextStore, ctx: EvalContext, jobs: int = 1,
                ctx_factory=None, seed: int = 0) -> list[Ciphertext]:
    """Server side: encryptions of the embedded bits."""
    targets = store.marked_indices()[: store.embedded]
    fn = partial(_extract_pair, mode=store.mode)
    return map_pairs(fn, [store.blocks[i] for i in targets], ctx, jobs, ctx_factory, seed)
